#include "laf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace laf {

APScore average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
    if (scores.empty()) throw UndefinedMetric("average precision of an empty set");
    APScore ap;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) throw InvalidArgument("scores must be finite");
        if (labels[i] != 0 && labels[i] != 1) throw InvalidArgument("labels must be 0 or 1");
        (labels[i] ? ap.n_pos : ap.n_neg)++;
    }
    if (ap.n_pos == 0 || ap.n_neg == 0)
        throw UndefinedMetric("average precision needs both classes present");

    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return labels[a] < labels[b];  // ties: negatives first (pessimistic)
    });

    double sum = 0;
    int hits = 0;
    for (size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]] == 1) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    ap.value = sum / ap.n_pos;
    return ap;
}

std::string summary_mode_name(SummaryMode m) {
    return m == SummaryMode::IncludeAll ? "include_all" : "exclude_train_column";
}

SummaryMode parse_summary_mode(const std::string& name) {
    if (name == "include_all") return SummaryMode::IncludeAll;
    if (name == "exclude_train_column") return SummaryMode::ExcludeTrainColumn;
    throw InvalidArgument("unknown summary mode: " + name);
}

CoVSummary cov_summary(const std::vector<double>& values, SummaryMode mode, int exclude_index) {
    std::vector<double> vals;
    for (size_t i = 0; i < values.size(); ++i) {
        if (mode == SummaryMode::ExcludeTrainColumn && static_cast<int>(i) == exclude_index) continue;
        vals.push_back(values[i]);
    }
    if (mode == SummaryMode::ExcludeTrainColumn && (exclude_index < 0 || exclude_index >= static_cast<int>(values.size())))
        throw InvalidArgument("exclude_index out of range");
    if (vals.empty()) throw UndefinedMetric("summary of an empty value set");
    CoVSummary s;
    s.mode = mode;
    s.n_values = static_cast<int>(vals.size());
    double m = 0;
    for (double v : vals) m += v;
    m /= vals.size();
    double var = 0;
    for (double v : vals) var += (v - m) * (v - m);
    var /= vals.size();
    s.mean = m;
    s.stddev = std::sqrt(var);
    if (s.stddev == 0) throw DegenerateVariance("zero variance across evaluations, CoV is undefined");
    s.inv_cov = s.mean / s.stddev;
    return s;
}

std::vector<double> score_dataset(const AggregationModel& model, const AlignedDataset& ds, int batch_size) {
    ds.validate();
    if (batch_size <= 0) throw InvalidArgument("batch_size must be positive");
    std::vector<double> probs;
    probs.reserve(ds.items.size());
    for (size_t start = 0; start < ds.items.size(); start += batch_size) {
        size_t end = std::min(ds.items.size(), start + batch_size);
        std::vector<int> idx(end - start);
        std::iota(idx.begin(), idx.end(), static_cast<int>(start));
        Tensor4 batch = assemble_batch(ds, idx);
        for (double logit : model_score_batch(model, batch)) probs.push_back(sigmoid(logit));
    }
    return probs;
}

double dataset_average_precision(const AggregationModel& model, const AlignedDataset& ds, int batch_size) {
    std::vector<double> probs = score_dataset(model, ds, batch_size);
    std::vector<int> labels;
    labels.reserve(ds.items.size());
    for (const auto& s : ds.items) labels.push_back(s.label);
    return average_precision(probs, labels).value;
}

const MatrixCell& ExperimentMatrix::at(int row, int col) const {
    if (row < 0 || row >= rows() || col < 0 || col >= cols()) throw InvalidArgument("matrix index out of range");
    return cells[static_cast<size_t>(row) * cols() + col];
}

std::vector<double> ExperimentMatrix::row_values(int row) const {
    std::vector<double> vals;
    for (int c = 0; c < cols(); ++c) {
        const MatrixCell& cell = at(row, c);
        if (!cell.ok) throw UndefinedMetric("matrix row " + std::to_string(row) + " has a failed cell: " + cell.error);
        vals.push_back(cell.ap_percent);
    }
    return vals;
}

ExperimentMatrix cross_matrix_fn(const std::vector<DatasetScorer>& scorers,
                                 const std::vector<const AlignedDataset*>& eval_sets,
                                 const std::vector<std::string>& labels) {
    if (scorers.size() != labels.size() || eval_sets.size() != labels.size())
        throw InvalidArgument("cross_matrix needs one scorer, one dataset and one label per family");
    ExperimentMatrix m;
    m.train_labels = labels;
    m.eval_labels = labels;
    m.cells.resize(labels.size() * labels.size());
    for (size_t r = 0; r < scorers.size(); ++r)
        for (size_t c = 0; c < eval_sets.size(); ++c) {
            MatrixCell& cell = m.cells[r * labels.size() + c];
            try {
                cell.ap_percent = 100.0 * scorers[r](*eval_sets[c]);
                cell.ok = true;
            } catch (const Error& e) {
                cell.ok = false;
                cell.error = e.what();
            }
        }
    return m;
}

ExperimentMatrix cross_matrix(const std::vector<const AggregationModel*>& models,
                              const std::vector<const AlignedDataset*>& eval_sets,
                              const std::vector<std::string>& labels, int batch_size) {
    std::vector<DatasetScorer> scorers;
    for (const AggregationModel* model : models)
        scorers.push_back(
            [model, batch_size](const AlignedDataset& ds) { return dataset_average_precision(*model, ds, batch_size); });
    return cross_matrix_fn(scorers, eval_sets, labels);
}

CoVSummary matrix_row_summary(const ExperimentMatrix& m, int row, SummaryMode mode) {
    return cov_summary(m.row_values(row), mode, mode == SummaryMode::ExcludeTrainColumn ? row : -1);
}

}  // namespace laf
