#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "laf/analysis.hpp"
#include "laf/checkpoint.hpp"
#include "laf/preprocess.hpp"
#include "laf/synthgen.hpp"
#include "laf/train.hpp"

namespace laf {

struct PipelineConfig {
    std::vector<Family> families{Family::LocalBlend, Family::GridArtifact, Family::EyeTexture, Family::ColorShift};
    int train_pairs = 24;
    int val_pairs = 10;
    int test_pairs = 25;
    int image_size = 320;  // pre-crop
    uint64_t seed = 1;
    CanonicalFrame frame;
    ModelConfig model;
    TrainConfig train;
    std::vector<int> trim_sizes{1, 3};  // the all-layer point is always added
    RankCriterion criterion = RankCriterion::MeanAbs;
    int eval_batch = 16;
    std::string out_dir;
    std::function<void(const std::string&)> log;  // optional progress sink

    void validate() const;
};

// Scaled defaults for the cross-family desk experiment.
PipelineConfig pipeline_default_config();

struct TrimCurvePoint {
    int n = 0;  // layers kept
    double ap_deg = 0;
    double param_fraction_mean = 0;
    std::map<std::string, std::vector<int>> selected;   // family -> layers
    std::map<std::string, double> param_fraction;       // family -> fraction
};

struct PipelineResult {
    std::vector<Family> families;
    std::vector<Checkpoint> checkpoints;
    std::vector<TrainResult> train_results;
    std::vector<AlignedDataset> val_sets;
    std::vector<AlignedDataset> test_sets;
    ExperimentMatrix full_matrix;
    std::vector<ImportanceProfile> profiles;
    std::vector<TrimCurvePoint> trim_curve;
};

// Per-family aligned splits from the deterministic generator.
struct FamilySplits {
    AlignedDataset train;
    AlignedDataset val;
    AlignedDataset test;
};
FamilySplits make_family_splits(Family family, const PipelineConfig& config);

// generate -> preprocess -> train per family, full cross-family matrix,
// CoV summaries in both modes, importance profiles, trim curve; every
// artifact written under config.out_dir deterministically.
PipelineResult run_pipeline(const PipelineConfig& config);

std::string matrix_csv(const ExperimentMatrix& m);
std::string matrix_json(const ExperimentMatrix& m);

}  // namespace laf
