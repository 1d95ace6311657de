#pragma once

#include <string>
#include <vector>

#include "laf/eval.hpp"

namespace laf {

struct LayerImportance {
    int layer_index = 0;       // 1-based
    double mean_real = 0;      // average contribution c_i over real images
    double mean_fake = 0;      // average contribution c_i over fake images
    double mean_abs = 0;       // average |c_i| over all images
    double head_weight_norm = 0;
};

struct ImportanceProfile {
    std::vector<LayerImportance> per_layer;  // one per layer 1..L
    int n_real = 0;
    int n_fake = 0;
};

// Per-layer contribution statistics over a labeled dataset; contributions
// come from decompose_logit so they sum to each image's logit exactly.
ImportanceProfile layer_importance(const AggregationModel& model, const AlignedDataset& ds, int batch_size = 16);

enum class RankCriterion { MeanAbs, FakeRealGap, HeadWeightNorm };

std::string rank_criterion_name(RankCriterion c);
RankCriterion parse_rank_criterion(const std::string& name);

// Layers sorted descending by the criterion value, ties broken by lower
// layer index. Insensitive to the order of profile entries.
std::vector<int> rank_layers(const ImportanceProfile& profile, RankCriterion criterion = RankCriterion::MeanAbs);

struct TrimPlan {
    std::vector<int> selected_layers;  // in ranking order
    RankCriterion criterion = RankCriterion::MeanAbs;
    long long analysis_param_count_full = 0;     // all projectors + head
    long long analysis_param_count_trimmed = 0;  // selected projectors + their head blocks + bias
};

TrimPlan make_trim_plan(const AggregationModel& model, const ImportanceProfile& profile, int n,
                        RankCriterion criterion = RankCriterion::MeanAbs);

// A trimmed view: the logit is the sum over selected layers only, plus the
// original bias. No parameters are retrained.
struct TrimmedModel {
    AggregationModel model;
    std::vector<int> selected_layers;
};

TrimmedModel trim(const AggregationModel& model, const TrimPlan& plan);

Aggregate trimmed_forward(const TrimmedModel& tm, const Image& img);
std::vector<double> trimmed_score_dataset(const TrimmedModel& tm, const AlignedDataset& ds, int batch_size = 16);
double trimmed_dataset_average_precision(const TrimmedModel& tm, const AlignedDataset& ds, int batch_size = 16);

// Mean absolute cell difference between two AP matrices, in percentage
// points.
double ap_degradation(const ExperimentMatrix& full, const ExperimentMatrix& trimmed);

struct ParamBudget {
    long long full = 0;
    long long trimmed = 0;
    double fraction = 0;
};

ParamBudget analysis_param_budget(const AggregationModel& model, const TrimPlan& plan);

struct Heatmap {
    int source_layer = 0;
    int size = 0;             // equals the model input size
    std::vector<double> values;  // row-major, in [0, 1]
};

// Score-CAM at one tapped layer: every non-constant channel is upsampled,
// min-max normalized and used to mask the input; channel weights are the
// softmax of the masked-input fake logits.
Heatmap score_cam(const AggregationModel& model, const Image& img, int layer_index);

// Top-k layers by signed per-image contribution (fake direction).
std::vector<int> select_cam_layers(const AggregationModel& model, const Image& img, int k);

// Mean heatmap value inside vs outside a disc region.
struct RegionMass {
    double inside = 0;
    double outside = 0;
};
RegionMass heatmap_region_mass(const Heatmap& hm, double cx, double cy, double radius);

}  // namespace laf
