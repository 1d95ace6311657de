#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "laf/fixtures.hpp"
#include "laf/pipeline.hpp"

using namespace laf;
using json = nlohmann::json;

namespace {

uint64_t effective_seed(uint64_t configured) {
    uint64_t seed = configured;
    env_seed_override(seed);
    return seed;
}

AlignedDataset load_split(const std::string& root, const std::string& family, const std::string& split) {
    return load_aligned(root, parse_family(family), parse_split(split));
}

Image heatmap_image(const Heatmap& hm) {
    Image img(hm.size, hm.size, 1);
    img.data = hm.values;
    return img;
}

void check_known_keys(const json& j, const std::set<std::string>& known, const std::string& what) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw CLI::ValidationError(what, "unknown key '" + it.key() + "'");
}

PipelineConfig pipeline_config_from_json(const json& j) {
    check_known_keys(j, {"families", "train_pairs", "val_pairs", "test_pairs", "image_size", "seed", "epochs",
                         "batch_size", "learning_rate", "optimizer", "early_stop_patience", "trim_sizes",
                         "criterion", "eval_batch"},
                     "pipeline config");
    PipelineConfig config = pipeline_default_config();
    try {
        if (j.contains("families")) {
            config.families.clear();
            for (const json& f : j.at("families")) config.families.push_back(parse_family(f.get<std::string>()));
        }
        if (j.contains("train_pairs")) config.train_pairs = j.at("train_pairs").get<int>();
        if (j.contains("val_pairs")) config.val_pairs = j.at("val_pairs").get<int>();
        if (j.contains("test_pairs")) config.test_pairs = j.at("test_pairs").get<int>();
        if (j.contains("image_size")) config.image_size = j.at("image_size").get<int>();
        if (j.contains("seed")) config.seed = j.at("seed").get<uint64_t>();
        if (j.contains("epochs")) config.train.epochs = j.at("epochs").get<int>();
        if (j.contains("batch_size")) config.train.batch_size = j.at("batch_size").get<int>();
        if (j.contains("learning_rate")) config.train.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("optimizer")) config.train.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
        if (j.contains("early_stop_patience"))
            config.train.early_stop_patience = j.at("early_stop_patience").get<int>();
        if (j.contains("trim_sizes")) {
            config.trim_sizes.clear();
            for (const json& n : j.at("trim_sizes")) config.trim_sizes.push_back(n.get<int>());
        }
        if (j.contains("criterion")) config.criterion = parse_rank_criterion(j.at("criterion").get<std::string>());
        if (j.contains("eval_batch")) config.eval_batch = j.at("eval_batch").get<int>();
    } catch (const json::exception& e) {
        throw CLI::ValidationError("pipeline config", e.what());
    } catch (const InvalidArgument& e) {
        throw CLI::ValidationError("pipeline config", e.what());
    }
    return config;
}

int run(int argc, char** argv) {
    CLI::App app{"Layer-feature aggregation toolkit for fake-image detection"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset split to a directory");
    std::string gen_family = "local_blend", gen_split = "train", gen_out;
    int gen_pairs = 25, gen_size = 320;
    uint64_t gen_seed = 1;
    gen->add_option("--family", gen_family, "Manipulation family")->capture_default_str();
    gen->add_option("--split", gen_split, "train|val|test")->capture_default_str();
    gen->add_option("--pairs", gen_pairs, "Real/fake pairs")->capture_default_str();
    gen->add_option("--size", gen_size, "Square image size in pixels")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Base seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output dataset root")->required();

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "Crop, align and quantize a generated split");
    std::string pre_in, pre_family = "local_blend", pre_split = "train", pre_out;
    pre->add_option("--in", pre_in, "Generated dataset root")->required();
    pre->add_option("--family", pre_family, "Manipulation family")->capture_default_str();
    pre->add_option("--split", pre_split, "train|val|test")->capture_default_str();
    pre->add_option("--out", pre_out, "Aligned dataset root")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train a model on an aligned family");
    std::string tr_data, tr_family = "local_blend", tr_out;
    TrainConfig tr_config;
    tr->add_option("--data", tr_data, "Aligned dataset root (train and val splits)")->required();
    tr->add_option("--family", tr_family, "Manipulation family")->capture_default_str();
    tr->add_option("--epochs", tr_config.epochs)->capture_default_str();
    tr->add_option("--batch", tr_config.batch_size)->capture_default_str();
    tr->add_option("--lr", tr_config.learning_rate)->capture_default_str();
    tr->add_option("--seed", tr_config.seed)->capture_default_str();
    std::string tr_opt = "adam";
    tr->add_option("--optimizer", tr_opt, "adam|sgd_momentum")->capture_default_str();
    tr->add_option("--patience", tr_config.early_stop_patience)->capture_default_str();
    tr->add_option("--out", tr_out, "Checkpoint path")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Score an aligned split with a checkpoint");
    std::string ev_ckpt, ev_data, ev_family = "local_blend", ev_split = "test", ev_out;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data, "Aligned dataset root")->required();
    ev->add_option("--family", ev_family)->capture_default_str();
    ev->add_option("--split", ev_split)->capture_default_str();
    ev->add_option("--out", ev_out, "Optional JSON report path");

    // rank
    auto* rk = app.add_subcommand("rank", "CoV^-1 ranking from a matrix artifact");
    std::string rk_in, rk_out;
    rk->add_option("--matrix", rk_in, "matrix.json from the pipeline")->required();
    rk->add_option("--out", rk_out, "Ranking JSON path")->required();

    // importance
    auto* im = app.add_subcommand("importance", "Per-layer importance profile on an aligned split");
    std::string im_ckpt, im_data, im_family = "local_blend", im_split = "val", im_out;
    im->add_option("--checkpoint", im_ckpt)->required();
    im->add_option("--data", im_data)->required();
    im->add_option("--family", im_family)->capture_default_str();
    im->add_option("--split", im_split)->capture_default_str();
    im->add_option("--out", im_out, "Profile JSON path")->required();

    // trim
    auto* tm = app.add_subcommand("trim", "Evaluate an importance-trimmed model");
    std::string tm_ckpt, tm_data, tm_family = "local_blend", tm_out, tm_criterion = "mean_abs";
    int tm_n = 1;
    tm->add_option("--checkpoint", tm_ckpt)->required();
    tm->add_option("--data", tm_data)->required();
    tm->add_option("--family", tm_family)->capture_default_str();
    tm->add_option("--n", tm_n, "Layers to keep")->capture_default_str();
    tm->add_option("--criterion", tm_criterion, "mean_abs|fake_real_gap|head_weight_norm")->capture_default_str();
    tm->add_option("--out", tm_out, "Report JSON path")->required();

    // cam
    auto* cam = app.add_subcommand("cam", "Score-CAM heatmaps for one image");
    std::string cam_ckpt, cam_image, cam_out;
    int cam_k = 2;
    cam->add_option("--checkpoint", cam_ckpt)->required();
    cam->add_option("--image", cam_image, "Aligned PNG input")->required();
    cam->add_option("--k", cam_k, "Number of top layers")->capture_default_str();
    cam->add_option("--out", cam_out, "Output directory")->required();

    // reproduce-tables
    auto* rt = app.add_subcommand("reproduce-tables", "Recompute the published summary tables from fixtures");
    std::string rt_fixture = "fixtures/paper_tables.json", rt_out;
    rt->add_option("--fixture", rt_fixture, "Fixture JSON path")->capture_default_str();
    rt->add_option("--out", rt_out, "Output directory for CSV/JSON reports");

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "Full cross-family experiment in one command");
    std::string pl_config, pl_out;
    pl->add_option("--config", pl_config, "Pipeline config JSON (defaults when omitted)");
    pl->add_option("--out", pl_out, "Output directory")->required();
    bool pl_quiet = false;
    pl->add_flag("--quiet", pl_quiet, "Suppress progress lines");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);  // prints help or the usage error
        return code == 0 ? 0 : 2;
    }

    if (gen->parsed()) {
        DatasetSpec spec;
        spec.family = ManipulationFamily::defaults(parse_family(gen_family));
        spec.n_pairs = gen_pairs;
        spec.seed = effective_seed(gen_seed);
        spec.split = parse_split(gen_split);
        spec.image_size = gen_size;
        materialize_dataset(spec, gen_out);
        std::printf("wrote %s/%s/%s (%d pairs)\n", gen_out.c_str(), gen_family.c_str(), gen_split.c_str(), gen_pairs);
        return 0;
    }

    if (pre->parsed()) {
        Family family = parse_family(pre_family);
        Split split = parse_split(pre_split);
        std::vector<RawSample> raw = load_materialized(pre_in, family, split);
        AlignedDataset ds = preprocess_dataset(raw, CanonicalFrame{});
        save_aligned(ds, pre_out, family, split);
        std::printf("aligned %zu items to %s\n", ds.items.size(), pre_out.c_str());
        return 0;
    }

    if (tr->parsed()) {
        tr_config.optimizer = parse_optimizer(tr_opt);
        tr_config.seed = effective_seed(tr_config.seed);
        Family family = parse_family(tr_family);
        AlignedDataset train_set = load_aligned(tr_data, family, Split::Train);
        AlignedDataset val_set = load_aligned(tr_data, family, Split::Val);
        ModelConfig mc;
        mc.backbone.input_size = train_set.size;
        AggregationModel start = init_model(mc, derive_seed(tr_config.seed, 100));
        TrainResult result = train_model(std::move(start), train_set, val_set, tr_config);
        result.checkpoint.meta.note = tr_family;
        save_checkpoint(result.checkpoint, tr_out);
        std::printf("best val AP %.4f at epoch %d (%d epochs run)\n", result.checkpoint.meta.best_val_ap,
                    result.checkpoint.meta.best_epoch, result.checkpoint.meta.epochs_run);
        return 0;
    }

    if (ev->parsed()) {
        Checkpoint ckpt = load_checkpoint(ev_ckpt);
        AlignedDataset ds = load_split(ev_data, ev_family, ev_split);
        if (ds.size != ckpt.model.config.backbone.input_size)
            throw InvalidDataset("checkpoint expects input size " +
                                 std::to_string(ckpt.model.config.backbone.input_size) + ", dataset is " +
                                 std::to_string(ds.size));
        double ap = dataset_average_precision(ckpt.model, ds);
        std::printf("AP %.6f on %s/%s (%zu items)\n", ap, ev_family.c_str(), ev_split.c_str(), ds.items.size());
        if (!ev_out.empty()) {
            json report{{"family", ev_family}, {"split", ev_split}, {"ap", ap}, {"items", ds.items.size()}};
            atomic_write_file(ev_out, report.dump(2) + "\n");
        }
        return 0;
    }

    if (rk->parsed()) {
        json m;
        try {
            m = json::parse(read_file(rk_in));
        } catch (const json::exception& e) {
            throw FormatError(std::string("bad matrix artifact: ") + e.what());
        }
        ExperimentMatrix matrix;
        try {
            matrix.train_labels = m.at("train_labels").get<std::vector<std::string>>();
            matrix.eval_labels = m.at("eval_labels").get<std::vector<std::string>>();
            for (const json& row : m.at("ap_percent"))
                for (const json& cell : row) {
                    MatrixCell c;
                    if (cell.is_number()) {
                        c.ap_percent = cell.get<double>();
                        c.ok = true;
                    } else {
                        c.error = cell.at("error").get<std::string>();
                    }
                    matrix.cells.push_back(c);
                }
        } catch (const json::exception& e) {
            throw FormatError(std::string("bad matrix artifact: ") + e.what());
        }
        json ranking;
        for (SummaryMode mode : {SummaryMode::IncludeAll, SummaryMode::ExcludeTrainColumn}) {
            json list = json::array();
            std::vector<std::pair<double, json>> entries;
            for (int r = 0; r < matrix.rows(); ++r) {
                json entry{{"family", matrix.train_labels[r]}};
                try {
                    CoVSummary s = matrix_row_summary(matrix, r, mode);
                    entry["mean"] = s.mean;
                    entry["stddev"] = s.stddev;
                    entry["inv_cov"] = s.inv_cov;
                    entries.emplace_back(s.inv_cov, entry);
                } catch (const Error& e) {
                    entry["error"] = e.what();
                    entries.emplace_back(-1e300, entry);
                }
            }
            std::stable_sort(entries.begin(), entries.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            for (const auto& [key, entry] : entries) list.push_back(entry);
            ranking[summary_mode_name(mode)] = list;
        }
        atomic_write_file(rk_out, ranking.dump(2) + "\n");
        std::printf("wrote %s\n", rk_out.c_str());
        return 0;
    }

    if (im->parsed()) {
        Checkpoint ckpt = load_checkpoint(im_ckpt);
        AlignedDataset ds = load_split(im_data, im_family, im_split);
        ImportanceProfile profile = layer_importance(ckpt.model, ds);
        json layers = json::array();
        for (const LayerImportance& e : profile.per_layer)
            layers.push_back({{"layer", e.layer_index},
                              {"mean_real", e.mean_real},
                              {"mean_fake", e.mean_fake},
                              {"mean_abs", e.mean_abs},
                              {"head_weight_norm", e.head_weight_norm}});
        json out{{"family", im_family},
                 {"split", im_split},
                 {"n_real", profile.n_real},
                 {"n_fake", profile.n_fake},
                 {"layers", layers}};
        atomic_write_file(im_out, out.dump(2) + "\n");
        std::printf("wrote %s\n", im_out.c_str());
        return 0;
    }

    if (tm->parsed()) {
        Checkpoint ckpt = load_checkpoint(tm_ckpt);
        Family family = parse_family(tm_family);
        AlignedDataset val = load_aligned(tm_data, family, Split::Val);
        AlignedDataset test = load_aligned(tm_data, family, Split::Test);
        ImportanceProfile profile = layer_importance(ckpt.model, val);
        TrimPlan plan = make_trim_plan(ckpt.model, profile, tm_n, parse_rank_criterion(tm_criterion));
        TrimmedModel trimmed = trim(ckpt.model, plan);
        double full_ap = dataset_average_precision(ckpt.model, test);
        double trimmed_ap = trimmed_dataset_average_precision(trimmed, test);
        ParamBudget budget = analysis_param_budget(ckpt.model, plan);
        json out{{"family", tm_family},
                 {"criterion", tm_criterion},
                 {"n", tm_n},
                 {"selected_layers", plan.selected_layers},
                 {"full_ap", full_ap},
                 {"trimmed_ap", trimmed_ap},
                 {"param_fraction", budget.fraction},
                 {"param_full", budget.full},
                 {"param_trimmed", budget.trimmed}};
        atomic_write_file(tm_out, out.dump(2) + "\n");
        std::printf("full AP %.6f, trimmed(%d) AP %.6f, parameter fraction %.6f\n", full_ap, tm_n, trimmed_ap,
                    budget.fraction);
        return 0;
    }

    if (cam->parsed()) {
        Checkpoint ckpt = load_checkpoint(cam_ckpt);
        Image img = read_png(cam_image);
        std::filesystem::create_directories(cam_out);
        std::vector<int> layers = select_cam_layers(ckpt.model, img, cam_k);
        ModelOutput fwd = model_forward(ckpt.model, img);
        LogitDecomposition dec = decompose_logit(fwd.primitives, ckpt.model.head);
        json sidecar{{"logit", fwd.logit},
                     {"probability", fwd.probability},
                     {"selected_layers", layers},
                     {"contributions", dec.contributions},
                     {"bias", dec.bias},
                     {"heatmaps", json::array()}};
        for (int layer : layers) {
            Heatmap hm = score_cam(ckpt.model, img, layer);
            std::string path = cam_out + "/cam_layer_" + std::to_string(layer) + ".png";
            write_png(path, heatmap_image(hm));
            sidecar["heatmaps"].push_back({{"layer", layer}, {"png", "cam_layer_" + std::to_string(layer) + ".png"}});
        }
        atomic_write_file(cam_out + "/cam.json", sidecar.dump(2) + "\n");
        std::printf("wrote %zu heatmaps to %s\n", layers.size(), cam_out.c_str());
        return 0;
    }

    if (rt->parsed()) {
        PaperTables tables = load_paper_tables(rt_fixture);
        bool all = true;
        for (const FixtureTable& table : tables.tables) {
            TableReport report = reproduce_table(table);
            all = all && report.all_pass();
            if (!rt_out.empty()) {
                std::filesystem::create_directories(rt_out);
                atomic_write_file(rt_out + "/" + table.id + "_report.csv", table_report_csv(report));
                atomic_write_file(rt_out + "/" + table.id + "_report.json", table_report_json(report));
            }
            for (const RowReport& row : report.rows)
                std::printf("%s %-22s %s\n", table.id.c_str(), row.name.c_str(), row.pass ? "ok" : "MISMATCH");
        }
        if (!all) throw UndefinedMetric("a published summary row failed to reproduce");
        std::printf("all summary rows reproduced\n");
        return 0;
    }

    if (pl->parsed()) {
        PipelineConfig config = pipeline_default_config();
        if (!pl_config.empty()) {
            json j;
            try {
                j = json::parse(read_file(pl_config));
            } catch (const json::exception& e) {
                throw CLI::ValidationError("pipeline config", e.what());
            }
            config = pipeline_config_from_json(j);
        }
        config.seed = effective_seed(config.seed);
        config.out_dir = pl_out;
        if (!pl_quiet) config.log = [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
        config.validate();
        PipelineResult result = run_pipeline(config);
        for (int r = 0; r < result.full_matrix.rows(); ++r) {
            std::printf("%-14s", result.full_matrix.train_labels[r].c_str());
            for (int c = 0; c < result.full_matrix.cols(); ++c) {
                const MatrixCell& cell = result.full_matrix.at(r, c);
                if (cell.ok)
                    std::printf(" %7.2f", cell.ap_percent);
                else
                    std::printf("   error");
            }
            std::printf("\n");
        }
        std::printf("artifacts in %s\n", pl_out.c_str());
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "error: usage: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
}
