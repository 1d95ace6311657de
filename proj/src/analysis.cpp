#include "laf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "laf/kernels.hpp"

namespace laf {

namespace {

std::vector<double> batch_contributions(const AggregationModel& model, const Tensor4& batch,
                                        std::vector<double>* logits_out) {
    // Eval-mode taps for the batch, then per-item decomposition.
    std::vector<Tensor4> taps = backbone_forward_eval(model.backbone, batch);
    const int L = model.layer_count();
    std::vector<double> contributions(static_cast<size_t>(batch.count) * L);
    std::vector<std::vector<PrimitiveVector>> prims(batch.count);
    for (int i = 0; i < batch.count; ++i) prims[i].reserve(L);
    for (int l = 0; l < L; ++l)
        for (int i = 0; i < batch.count; ++i) {
            FeatureMap fm{l + 1, taps[l].slice(i)};
            prims[i].push_back(project_primitive(fm, model.projectors[l]));
        }
    for (int i = 0; i < batch.count; ++i) {
        LogitDecomposition dec = decompose_logit(prims[i], model.head);
        for (int l = 0; l < L; ++l) contributions[static_cast<size_t>(i) * L + l] = dec.contributions[l];
        if (logits_out) logits_out->push_back(dec.total());
    }
    return contributions;
}

}  // namespace

ImportanceProfile layer_importance(const AggregationModel& model, const AlignedDataset& ds, int batch_size) {
    ds.validate();
    if (ds.count_label(0) == 0 || ds.count_label(1) == 0)
        throw InvalidDataset("importance profile needs both labels");
    if (batch_size < 1) throw InvalidArgument("batch_size must be positive");

    const int L = model.layer_count();
    ImportanceProfile profile;
    profile.per_layer.resize(L);
    std::vector<double> sum_real(L, 0.0), sum_fake(L, 0.0), sum_abs(L, 0.0);

    const int n = static_cast<int>(ds.items.size());
    for (int start = 0; start < n; start += batch_size) {
        int count = std::min(batch_size, n - start);
        std::vector<int> idx(count);
        std::iota(idx.begin(), idx.end(), start);
        Tensor4 batch = assemble_batch(ds, idx);
        std::vector<double> contrib = batch_contributions(model, batch, nullptr);
        for (int i = 0; i < count; ++i) {
            int label = ds.items[start + i].label;
            for (int l = 0; l < L; ++l) {
                double c = contrib[static_cast<size_t>(i) * L + l];
                (label ? sum_fake : sum_real)[l] += c;
                sum_abs[l] += std::abs(c);
            }
        }
    }

    profile.n_real = ds.count_label(0);
    profile.n_fake = ds.count_label(1);
    for (int l = 0; l < L; ++l) {
        LayerImportance& e = profile.per_layer[l];
        e.layer_index = l + 1;
        e.mean_real = sum_real[l] / profile.n_real;
        e.mean_fake = sum_fake[l] / profile.n_fake;
        e.mean_abs = sum_abs[l] / (profile.n_real + profile.n_fake);
        double norm2 = 0;
        const int dim = model.config.primitive_dim;
        for (int d = 0; d < dim; ++d) {
            double w = model.head.weight[static_cast<size_t>(l) * dim + d];
            norm2 += w * w;
        }
        e.head_weight_norm = std::sqrt(norm2);
    }
    return profile;
}

std::string rank_criterion_name(RankCriterion c) {
    switch (c) {
        case RankCriterion::MeanAbs: return "mean_abs";
        case RankCriterion::FakeRealGap: return "fake_real_gap";
        case RankCriterion::HeadWeightNorm: return "head_weight_norm";
    }
    throw InvalidArgument("bad rank criterion");
}

RankCriterion parse_rank_criterion(const std::string& name) {
    if (name == "mean_abs") return RankCriterion::MeanAbs;
    if (name == "fake_real_gap") return RankCriterion::FakeRealGap;
    if (name == "head_weight_norm") return RankCriterion::HeadWeightNorm;
    throw InvalidArgument("unknown rank criterion '" + name + "'");
}

std::vector<int> rank_layers(const ImportanceProfile& profile, RankCriterion criterion) {
    if (profile.per_layer.empty()) throw InvalidArgument("empty importance profile");
    std::vector<std::pair<double, int>> keyed;
    std::vector<bool> seen;
    for (const LayerImportance& e : profile.per_layer) {
        double key = 0;
        switch (criterion) {
            case RankCriterion::MeanAbs: key = e.mean_abs; break;
            case RankCriterion::FakeRealGap: key = std::abs(e.mean_fake - e.mean_real); break;
            case RankCriterion::HeadWeightNorm: key = e.head_weight_norm; break;
        }
        if (e.layer_index < 1) throw InvalidArgument("bad layer index in profile");
        if (e.layer_index > static_cast<int>(seen.size())) seen.resize(e.layer_index, false);
        if (seen[e.layer_index - 1]) throw InvalidArgument("duplicate layer index in profile");
        seen[e.layer_index - 1] = true;
        keyed.emplace_back(key, e.layer_index);
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw InvalidArgument("profile does not cover layers 1..L");
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<int> order;
    for (const auto& [key, idx] : keyed) order.push_back(idx);
    return order;
}

namespace {

void validate_selection(const AggregationModel& model, const std::vector<int>& selected) {
    if (selected.empty()) throw InvalidArgument("trim selection must be non-empty");
    std::vector<bool> seen(model.layer_count(), false);
    for (int l : selected) {
        if (l < 1 || l > model.layer_count()) throw InvalidArgument("trim selection layer out of range");
        if (seen[l - 1]) throw InvalidArgument("duplicate layer in trim selection");
        seen[l - 1] = true;
    }
}

long long head_params_for(const AggregationModel& model, size_t n_layers) {
    return static_cast<long long>(model.config.primitive_dim) * static_cast<long long>(n_layers) + 1;
}

}  // namespace

TrimPlan make_trim_plan(const AggregationModel& model, const ImportanceProfile& profile, int n,
                        RankCriterion criterion) {
    if (n < 1 || n > model.layer_count()) throw InvalidArgument("trim size must be in 1..L");
    std::vector<int> order = rank_layers(profile, criterion);
    TrimPlan plan;
    plan.criterion = criterion;
    plan.selected_layers.assign(order.begin(), order.begin() + n);
    ParamBudget budget;
    ModelParameterCount counts = model_parameter_count(model);
    plan.analysis_param_count_full = counts.projectors + counts.head;
    long long trimmed = head_params_for(model, plan.selected_layers.size());
    for (int l : plan.selected_layers) trimmed += counts.per_projector[l - 1];
    plan.analysis_param_count_trimmed = trimmed;
    return plan;
}

TrimmedModel trim(const AggregationModel& model, const TrimPlan& plan) {
    validate_selection(model, plan.selected_layers);
    return TrimmedModel{model, plan.selected_layers};
}

namespace {

double trimmed_logit_from_taps(const TrimmedModel& tm, const std::vector<Tensor4>& taps, int item) {
    const int dim = tm.model.config.primitive_dim;
    double logit = tm.model.head.b();
    for (int l : tm.selected_layers) {
        FeatureMap fm{l, taps[l - 1].slice(item)};
        PrimitiveVector p = project_primitive(fm, tm.model.projectors[l - 1]);
        double c = 0;
        for (int d = 0; d < dim; ++d) c += tm.model.head.weight[static_cast<size_t>(l - 1) * dim + d] * p.values[d];
        logit += c;
    }
    return logit;
}

}  // namespace

Aggregate trimmed_forward(const TrimmedModel& tm, const Image& img) {
    validate_selection(tm.model, tm.selected_layers);
    std::vector<FeatureMap> taps = forward_with_taps(tm.model.backbone, img);
    const int dim = tm.model.config.primitive_dim;
    double logit = tm.model.head.b();
    for (int l : tm.selected_layers) {
        PrimitiveVector p = project_primitive(taps[l - 1], tm.model.projectors[l - 1]);
        double c = 0;
        for (int d = 0; d < dim; ++d) c += tm.model.head.weight[static_cast<size_t>(l - 1) * dim + d] * p.values[d];
        logit += c;
    }
    return Aggregate{logit, sigmoid(logit)};
}

std::vector<double> trimmed_score_dataset(const TrimmedModel& tm, const AlignedDataset& ds, int batch_size) {
    validate_selection(tm.model, tm.selected_layers);
    ds.validate();
    if (batch_size < 1) throw InvalidArgument("batch_size must be positive");
    const int n = static_cast<int>(ds.items.size());
    std::vector<double> probs(n);
    for (int start = 0; start < n; start += batch_size) {
        int count = std::min(batch_size, n - start);
        std::vector<int> idx(count);
        std::iota(idx.begin(), idx.end(), start);
        Tensor4 batch = assemble_batch(ds, idx);
        std::vector<Tensor4> taps = backbone_forward_eval(tm.model.backbone, batch);
        for (int i = 0; i < count; ++i) probs[start + i] = sigmoid(trimmed_logit_from_taps(tm, taps, i));
    }
    return probs;
}

double trimmed_dataset_average_precision(const TrimmedModel& tm, const AlignedDataset& ds, int batch_size) {
    std::vector<double> probs = trimmed_score_dataset(tm, ds, batch_size);
    std::vector<int> labels;
    labels.reserve(ds.items.size());
    for (const AlignedSample& s : ds.items) labels.push_back(s.label);
    return average_precision(probs, labels).value;
}

double ap_degradation(const ExperimentMatrix& full, const ExperimentMatrix& trimmed) {
    if (full.rows() != trimmed.rows() || full.cols() != trimmed.cols() ||
        full.train_labels != trimmed.train_labels || full.eval_labels != trimmed.eval_labels)
        throw InvalidArgument("degradation needs matrices of identical shape and labels");
    if (full.cells.empty()) throw InvalidArgument("degradation of an empty matrix");
    double sum = 0;
    for (size_t i = 0; i < full.cells.size(); ++i) {
        if (!full.cells[i].ok || !trimmed.cells[i].ok)
            throw UndefinedMetric("degradation over a matrix with failed cells");
        sum += std::abs(full.cells[i].ap_percent - trimmed.cells[i].ap_percent);
    }
    return sum / full.cells.size();
}

ParamBudget analysis_param_budget(const AggregationModel& model, const TrimPlan& plan) {
    validate_selection(model, plan.selected_layers);
    ModelParameterCount counts = model_parameter_count(model);
    ParamBudget budget;
    budget.full = counts.projectors + counts.head;
    budget.trimmed = head_params_for(model, plan.selected_layers.size());
    for (int l : plan.selected_layers) budget.trimmed += counts.per_projector[l - 1];
    budget.fraction = static_cast<double>(budget.trimmed) / static_cast<double>(budget.full);
    return budget;
}

namespace {

// Min-max normalize in place; returns false for a constant plane.
bool minmax_normalize(std::vector<double>& plane) {
    auto [lo_it, hi_it] = std::minmax_element(plane.begin(), plane.end());
    double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) return false;
    double inv = 1.0 / (hi - lo);
    for (double& v : plane) v = (v - lo) * inv;
    return true;
}

}  // namespace

Heatmap score_cam(const AggregationModel& model, const Image& img, int layer_index) {
    if (layer_index < 1 || layer_index > model.layer_count()) throw InvalidArgument("layer index out of range");
    if (img.height != model.config.backbone.input_size || img.width != model.config.backbone.input_size ||
        img.channels != model.config.backbone.in_channels)
        throw InvalidArgument("image shape does not match the model input");

    std::vector<FeatureMap> taps = forward_with_taps(model.backbone, img);
    const Tensor3& tap = taps[layer_index - 1].values;
    const int size = img.height;
    const int plane_px = size * size;

    // Upsampled, normalized channel planes; empty for constant channels.
    std::vector<std::vector<double>> planes(tap.channels);
    std::vector<double> masked_logits(tap.channels, 0.0);
    std::vector<char> active(tap.channels, 0);

#pragma omp parallel for schedule(static)
    for (int c = 0; c < tap.channels; ++c) {
        std::vector<double> plane(plane_px);
        kernels::upsample_plane_bilinear(tap.data.data() + static_cast<size_t>(c) * tap.height * tap.width, tap.height, tap.width,
                                         plane.data(), size, size);
        if (!minmax_normalize(plane)) continue;
        Image masked(size, size, img.channels);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double m = plane[static_cast<size_t>(y) * size + x];
                for (int ch = 0; ch < img.channels; ++ch) masked.at(y, x, ch) = img.at(y, x, ch) * m;
            }
        masked_logits[c] = model_forward(model, masked).logit;
        planes[c] = std::move(plane);
        active[c] = 1;
    }

    std::vector<int> kept;
    for (int c = 0; c < tap.channels; ++c)
        if (active[c]) kept.push_back(c);
    if (kept.empty()) throw DegenerateActivation("all channels constant at the requested layer");

    double zmax = masked_logits[kept[0]];
    for (int c : kept) zmax = std::max(zmax, masked_logits[c]);
    double denom = 0;
    for (int c : kept) denom += std::exp(masked_logits[c] - zmax);

    Heatmap hm;
    hm.source_layer = layer_index;
    hm.size = size;
    hm.values.assign(plane_px, 0.0);
    for (int c : kept) {
        double w = std::exp(masked_logits[c] - zmax) / denom;
        const std::vector<double>& plane = planes[c];
        for (int i = 0; i < plane_px; ++i) hm.values[i] += w * plane[i];
    }
    for (double& v : hm.values) v = std::max(0.0, v);
    if (!minmax_normalize(hm.values)) throw DegenerateActivation("heatmap is constant");
    return hm;
}

std::vector<int> select_cam_layers(const AggregationModel& model, const Image& img, int k) {
    if (k < 1 || k > model.layer_count()) throw InvalidArgument("k must be in 1..L");
    ModelOutput out = model_forward(model, img);
    LogitDecomposition dec = decompose_logit(out.primitives, model.head);
    std::vector<std::pair<double, int>> keyed;
    for (int l = 0; l < model.layer_count(); ++l) keyed.emplace_back(dec.contributions[l], l + 1);
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<int> layers;
    for (int i = 0; i < k; ++i) layers.push_back(keyed[i].second);
    return layers;
}

RegionMass heatmap_region_mass(const Heatmap& hm, double cx, double cy, double radius) {
    if (hm.size <= 0 || radius <= 0) throw InvalidArgument("bad heatmap region");
    double sum_in = 0, sum_out = 0;
    long n_in = 0, n_out = 0;
    for (int y = 0; y < hm.size; ++y)
        for (int x = 0; x < hm.size; ++x) {
            double dx = x - cx, dy = y - cy;
            bool inside = dx * dx + dy * dy <= radius * radius;
            double v = hm.values[static_cast<size_t>(y) * hm.size + x];
            (inside ? sum_in : sum_out) += v;
            (inside ? n_in : n_out) += 1;
        }
    if (n_in == 0 || n_out == 0) throw DegenerateGeometry("region covers none or all of the heatmap");
    return RegionMass{sum_in / n_in, sum_out / n_out};
}

}  // namespace laf
