#pragma once

#include <functional>
#include <string>
#include <vector>

#include "laf/aggmodel.hpp"
#include "laf/dataset.hpp"

namespace laf {

struct APScore {
    double value = 0;  // in [0, 1]
    int n_pos = 0;
    int n_neg = 0;
};

// Average precision with a pessimistic tie rule: at equal scores, negatives
// rank ahead of positives. Requires finite scores and both classes present.
APScore average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

enum class SummaryMode { IncludeAll, ExcludeTrainColumn };

std::string summary_mode_name(SummaryMode m);
SummaryMode parse_summary_mode(const std::string& name);

struct CoVSummary {
    double mean = 0;
    double stddev = 0;   // population (divide by N)
    double inv_cov = 0;  // mean / stddev
    int n_values = 0;
    SummaryMode mode = SummaryMode::IncludeAll;
};

// values are AP percentages. exclude_index is dropped in
// ExcludeTrainColumn mode (pass the train column's position).
CoVSummary cov_summary(const std::vector<double>& values, SummaryMode mode, int exclude_index = -1);

// Eval-mode probabilities (higher = more likely fake), batched.
std::vector<double> score_dataset(const AggregationModel& model, const AlignedDataset& ds, int batch_size = 16);

double dataset_average_precision(const AggregationModel& model, const AlignedDataset& ds, int batch_size = 16);

struct MatrixCell {
    double ap_percent = 0;
    bool ok = false;
    std::string error;  // failure category + message when !ok
};

struct ExperimentMatrix {
    std::vector<std::string> train_labels;  // one per row
    std::vector<std::string> eval_labels;   // one per column
    std::vector<MatrixCell> cells;          // row-major

    const MatrixCell& at(int row, int col) const;
    int rows() const { return static_cast<int>(train_labels.size()); }
    int cols() const { return static_cast<int>(eval_labels.size()); }

    // APs of one row; throws UndefinedMetric if any cell in it failed.
    std::vector<double> row_values(int row) const;
};

// One scorer per row; a scorer maps a dataset to per-item AP (0..1).
using DatasetScorer = std::function<double(const AlignedDataset&)>;

// Evaluate every scorer against every dataset. A failing cell is recorded
// (ok = false) without aborting the rest of the matrix.
ExperimentMatrix cross_matrix_fn(const std::vector<DatasetScorer>& scorers,
                                 const std::vector<const AlignedDataset*>& eval_sets,
                                 const std::vector<std::string>& labels);

// Evaluate every model against every dataset. A failing cell is recorded
// (ok = false) without aborting the rest of the matrix.
ExperimentMatrix cross_matrix(const std::vector<const AggregationModel*>& models,
                              const std::vector<const AlignedDataset*>& eval_sets,
                              const std::vector<std::string>& labels, int batch_size = 16);

// Row summary; in ExcludeTrainColumn mode the diagonal (the row's own
// training family) is dropped.
CoVSummary matrix_row_summary(const ExperimentMatrix& m, int row, SummaryMode mode);

}  // namespace laf
