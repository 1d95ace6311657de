#include "laf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "json.hpp"

namespace laf {

using json = nlohmann::json;

void PipelineConfig::validate() const {
    if (families.empty()) throw InvalidArgument("pipeline needs at least one family");
    std::set<Family> seen(families.begin(), families.end());
    if (seen.size() != families.size()) throw InvalidArgument("duplicate family in pipeline config");
    if (seen.count(Family::None)) throw InvalidArgument("family none cannot be a pipeline row");
    if (train_pairs < 1 || val_pairs < 1 || test_pairs < 1) throw InvalidArgument("pair counts must be positive");
    if (eval_batch < 1) throw InvalidArgument("eval_batch must be positive");
    model.validate();
    train.validate();
    if (frame.out_size != model.backbone.input_size)
        throw InvalidArgument("canonical frame size must match the model input size");
    const int L = model.backbone.layer_count();
    std::set<int> sizes(trim_sizes.begin(), trim_sizes.end());
    if (sizes.size() != trim_sizes.size()) throw InvalidArgument("duplicate trim size");
    for (int n : trim_sizes)
        if (n < 1 || n > L) throw InvalidArgument("trim size out of range");
}

PipelineConfig pipeline_default_config() {
    PipelineConfig config;
    config.train_pairs = 30;
    config.train.epochs = 12;
    config.train.batch_size = 16;
    config.train.learning_rate = 2e-3;
    config.train.early_stop_patience = 4;
    return config;
}

FamilySplits make_family_splits(Family family, const PipelineConfig& config) {
    auto build = [&](Split split, int pairs) {
        DatasetSpec spec;
        spec.family = ManipulationFamily::defaults(family);
        spec.n_pairs = pairs;
        spec.seed = config.seed;
        spec.split = split;
        spec.image_size = config.image_size;
        return preprocess_dataset(build_dataset(spec), config.frame);
    };
    FamilySplits splits;
    splits.train = build(Split::Train, config.train_pairs);
    splits.val = build(Split::Val, config.val_pairs);
    splits.test = build(Split::Test, config.test_pairs);
    return splits;
}

namespace {

void log_line(const PipelineConfig& config, const std::string& line) {
    if (config.log) config.log(line);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// Per-item probabilities for the full head and every trim plan, sharing one
// backbone pass per batch.
struct VariantScores {
    std::vector<double> full;                    // probabilities
    std::map<int, std::vector<double>> trimmed;  // trim size -> probabilities
};

VariantScores score_variants(const AggregationModel& model, const AlignedDataset& ds,
                             const std::map<int, TrimPlan>& plans, int batch_size) {
    ds.validate();
    const int L = model.layer_count();
    const int dim = model.config.primitive_dim;
    const int n = static_cast<int>(ds.items.size());
    VariantScores out;
    out.full.resize(n);
    for (const auto& [size, plan] : plans) out.trimmed[size].resize(n);

    for (int start = 0; start < n; start += batch_size) {
        int count = std::min(batch_size, n - start);
        std::vector<int> idx(count);
        for (int i = 0; i < count; ++i) idx[i] = start + i;
        Tensor4 batch = assemble_batch(ds, idx);
        std::vector<Tensor4> taps = backbone_forward_eval(model.backbone, batch);
        for (int i = 0; i < count; ++i) {
            std::vector<double> contrib(L);
            for (int l = 0; l < L; ++l) {
                FeatureMap fm{l + 1, taps[l].slice(i)};
                PrimitiveVector p = project_primitive(fm, model.projectors[l]);
                double c = 0;
                for (int d = 0; d < dim; ++d) c += model.head.weight[static_cast<size_t>(l) * dim + d] * p.values[d];
                contrib[l] = c;
            }
            double logit = model.head.b();
            for (int l = 0; l < L; ++l) logit += contrib[l];
            out.full[start + i] = sigmoid(logit);
            for (const auto& [size, plan] : plans) {
                double z = model.head.b();
                for (int sel : plan.selected_layers) z += contrib[sel - 1];
                out.trimmed[size][start + i] = sigmoid(z);
            }
        }
    }
    return out;
}

json summary_json(const CoVSummary& s) {
    return json{{"mean", s.mean}, {"stddev", s.stddev}, {"inv_cov", s.inv_cov}, {"n_values", s.n_values}};
}

}  // namespace

std::string matrix_csv(const ExperimentMatrix& m) {
    std::ostringstream out;
    out << "train_family";
    for (const std::string& c : m.eval_labels) out << "," << c;
    out << "\n";
    for (int r = 0; r < m.rows(); ++r) {
        out << m.train_labels[r];
        for (int c = 0; c < m.cols(); ++c) {
            const MatrixCell& cell = m.at(r, c);
            out << "," << (cell.ok ? fmt(cell.ap_percent) : "error");
        }
        out << "\n";
    }
    return out.str();
}

std::string matrix_json(const ExperimentMatrix& m) {
    json cells = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) {
            const MatrixCell& cell = m.at(r, c);
            if (cell.ok)
                row.push_back(cell.ap_percent);
            else
                row.push_back(json{{"error", cell.error}});
        }
        cells.push_back(row);
    }
    return json{{"train_labels", m.train_labels}, {"eval_labels", m.eval_labels}, {"ap_percent", cells}}.dump(2);
}

PipelineResult run_pipeline(const PipelineConfig& config) {
    config.validate();
    if (config.out_dir.empty()) throw InvalidArgument("pipeline needs an output directory");
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    fs::create_directories(config.out_dir + "/checkpoints");
    fs::create_directories(config.out_dir + "/history");

    PipelineResult result;
    result.families = config.families;
    std::vector<std::string> names;
    for (Family f : config.families) names.push_back(family_name(f));
    const int L = config.model.backbone.layer_count();

    // Per-family data and training.
    for (size_t i = 0; i < config.families.size(); ++i) {
        log_line(config, "generate " + names[i]);
        FamilySplits splits = make_family_splits(config.families[i], config);

        TrainConfig tc = config.train;
        tc.seed = derive_seed(config.seed, 200 + i);
        log_line(config, "train " + names[i]);
        AggregationModel start = init_model(config.model, derive_seed(config.seed, 100 + i));
        TrainResult tr = train_model(std::move(start), splits.train, splits.val, tc);
        tr.checkpoint.meta.note = names[i];
        log_line(config, "train " + names[i] + " best val AP " + fmt(tr.checkpoint.meta.best_val_ap));

        save_checkpoint(tr.checkpoint, config.out_dir + "/checkpoints/" + names[i] + ".ckpt");
        json hist{{"family", names[i]},
                  {"best_epoch", tr.checkpoint.meta.best_epoch},
                  {"best_val_ap", tr.checkpoint.meta.best_val_ap},
                  {"epochs_run", tr.checkpoint.meta.epochs_run},
                  {"epochs", json::array()}};
        for (const EpochRecord& e : tr.history)
            hist["epochs"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_ap", e.val_ap}});
        atomic_write_file(config.out_dir + "/history/" + names[i] + ".json", hist.dump(2) + "\n");

        result.val_sets.push_back(std::move(splits.val));
        result.test_sets.push_back(std::move(splits.test));
        result.train_results.push_back(std::move(tr));
        result.checkpoints.push_back(result.train_results.back().checkpoint);
    }

    // Importance profiles on each family's validation split.
    for (size_t i = 0; i < config.families.size(); ++i) {
        log_line(config, "importance " + names[i]);
        result.profiles.push_back(
            layer_importance(result.checkpoints[i].model, result.val_sets[i], config.eval_batch));
    }

    // Trim plans per family per size; the all-layer point is always present.
    std::vector<int> sizes = config.trim_sizes;
    if (std::find(sizes.begin(), sizes.end(), L) == sizes.end()) sizes.push_back(L);
    std::sort(sizes.begin(), sizes.end());
    std::vector<std::map<int, TrimPlan>> plans(config.families.size());
    for (size_t i = 0; i < config.families.size(); ++i)
        for (int n : sizes)
            plans[i][n] = make_trim_plan(result.checkpoints[i].model, result.profiles[i], n, config.criterion);

    // Full and trimmed matrices from a shared backbone pass per cell.
    auto blank_matrix = [&]() {
        ExperimentMatrix m;
        m.train_labels = names;
        m.eval_labels = names;
        m.cells.resize(names.size() * names.size());
        return m;
    };
    result.full_matrix = blank_matrix();
    std::map<int, ExperimentMatrix> trimmed_matrices;
    for (int n : sizes) trimmed_matrices[n] = blank_matrix();

    for (size_t r = 0; r < config.families.size(); ++r)
        for (size_t c = 0; c < config.families.size(); ++c) {
            log_line(config, "evaluate " + names[r] + " on " + names[c]);
            size_t cell_index = r * names.size() + c;
            try {
                VariantScores scores =
                    score_variants(result.checkpoints[r].model, result.test_sets[c], plans[r], config.eval_batch);
                std::vector<int> labels;
                for (const AlignedSample& s : result.test_sets[c].items) labels.push_back(s.label);
                MatrixCell& cell = result.full_matrix.cells[cell_index];
                cell.ap_percent = 100.0 * average_precision(scores.full, labels).value;
                cell.ok = true;
                for (int n : sizes) {
                    MatrixCell& tcell = trimmed_matrices[n].cells[cell_index];
                    tcell.ap_percent = 100.0 * average_precision(scores.trimmed[n], labels).value;
                    tcell.ok = true;
                }
            } catch (const Error& e) {
                result.full_matrix.cells[cell_index].error = e.what();
                for (int n : sizes) trimmed_matrices[n].cells[cell_index].error = e.what();
            }
        }

    atomic_write_file(config.out_dir + "/matrix.json", matrix_json(result.full_matrix) + "\n");
    atomic_write_file(config.out_dir + "/matrix.csv", matrix_csv(result.full_matrix));

    // CoV^-1 rankings of the full matrix in both summary modes.
    json ranking;
    for (SummaryMode mode : {SummaryMode::IncludeAll, SummaryMode::ExcludeTrainColumn}) {
        std::vector<std::pair<double, json>> entries;
        for (size_t r = 0; r < names.size(); ++r) {
            json entry{{"family", names[r]}};
            try {
                CoVSummary s = matrix_row_summary(result.full_matrix, static_cast<int>(r), mode);
                entry.update(summary_json(s));
                entries.emplace_back(s.inv_cov, entry);
            } catch (const Error& e) {
                entry["error"] = e.what();
                entries.emplace_back(-1e300, entry);
            }
        }
        std::stable_sort(entries.begin(), entries.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        json list = json::array();
        for (const auto& [key, entry] : entries) list.push_back(entry);
        ranking[summary_mode_name(mode)] = list;
    }
    atomic_write_file(config.out_dir + "/ranking.json", ranking.dump(2) + "\n");

    // Importance artifacts.
    json importance;
    std::ostringstream icsv;
    icsv << "family,layer,mean_real,mean_fake,mean_abs,head_weight_norm\n";
    for (size_t i = 0; i < names.size(); ++i) {
        const ImportanceProfile& p = result.profiles[i];
        json layers = json::array();
        for (const LayerImportance& e : p.per_layer) {
            layers.push_back({{"layer", e.layer_index},
                              {"mean_real", e.mean_real},
                              {"mean_fake", e.mean_fake},
                              {"mean_abs", e.mean_abs},
                              {"head_weight_norm", e.head_weight_norm}});
            icsv << names[i] << "," << e.layer_index << "," << fmt(e.mean_real) << "," << fmt(e.mean_fake) << ","
                 << fmt(e.mean_abs) << "," << fmt(e.head_weight_norm) << "\n";
        }
        importance[names[i]] = json{{"n_real", p.n_real}, {"n_fake", p.n_fake}, {"layers", layers}};
    }
    atomic_write_file(config.out_dir + "/importance.json", importance.dump(2) + "\n");
    atomic_write_file(config.out_dir + "/importance.csv", icsv.str());

    // Trim curve.
    json curve{{"criterion", rank_criterion_name(config.criterion)}, {"points", json::array()}};
    std::ostringstream tcsv;
    tcsv << "n,ap_deg,param_fraction_mean\n";
    for (int n : sizes) {
        TrimCurvePoint point;
        point.n = n;
        point.ap_deg = ap_degradation(result.full_matrix, trimmed_matrices[n]);
        json per_family;
        double fraction_sum = 0;
        for (size_t i = 0; i < names.size(); ++i) {
            const TrimPlan& plan = plans[i][n];
            ParamBudget budget = analysis_param_budget(result.checkpoints[i].model, plan);
            point.selected[names[i]] = plan.selected_layers;
            point.param_fraction[names[i]] = budget.fraction;
            fraction_sum += budget.fraction;
            per_family[names[i]] = json{{"selected_layers", plan.selected_layers}, {"param_fraction", budget.fraction}};
        }
        point.param_fraction_mean = fraction_sum / names.size();
        curve["points"].push_back({{"n", n},
                                   {"ap_deg", point.ap_deg},
                                   {"param_fraction_mean", point.param_fraction_mean},
                                   {"per_family", per_family}});
        tcsv << n << "," << fmt(point.ap_deg) << "," << fmt(point.param_fraction_mean) << "\n";
        result.trim_curve.push_back(std::move(point));
    }
    atomic_write_file(config.out_dir + "/trim_curve.json", curve.dump(2) + "\n");
    atomic_write_file(config.out_dir + "/trim_curve.csv", tcsv.str());

    // Effective configuration, for provenance of the artifacts.
    json cfg{{"families", names},
             {"train_pairs", config.train_pairs},
             {"val_pairs", config.val_pairs},
             {"test_pairs", config.test_pairs},
             {"image_size", config.image_size},
             {"seed", config.seed},
             {"frame_size", config.frame.out_size},
             {"model_config", model_config_to_json(config.model)},
             {"train_config", train_config_to_json(config.train)},
             {"trim_sizes", sizes},
             {"criterion", rank_criterion_name(config.criterion)},
             {"eval_batch", config.eval_batch}};
    atomic_write_file(config.out_dir + "/config.json", cfg.dump(2) + "\n");

    return result;
}

}  // namespace laf
