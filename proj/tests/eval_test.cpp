#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "laf/eval.hpp"
#include "laf/fixtures.hpp"

using namespace laf;

namespace {

// Independent oracle: sort with the same pessimistic tie rule, then walk the
// ranking and recount the prefix from scratch at every positive.
double ap_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return labels[a] < labels[b];
    });
    int n_pos = 0;
    for (int l : labels) n_pos += l;
    double sum = 0;
    for (size_t k = 0; k < order.size(); ++k) {
        if (labels[order[k]] != 1) continue;
        int hits = 0;
        for (size_t j = 0; j <= k; ++j) hits += labels[order[j]];
        sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    return sum / n_pos;
}

AlignedDataset tiny_dataset(Rng& rng, int size, int n_pairs, double shift) {
    AlignedDataset ds;
    ds.size = size;
    for (int i = 0; i < n_pairs; ++i) {
        for (int label = 0; label < 2; ++label) {
            AlignedSample s;
            s.label = label;
            s.item_seed = static_cast<uint64_t>(i);
            s.pixels.resize(static_cast<size_t>(size) * size * 3);
            for (auto& p : s.pixels) {
                double v = rng.uniform();
                if (label) v = std::min(1.0, v + shift);  // fakes are brighter
                p = quantize8(v);
            }
            ds.items.push_back(std::move(s));
        }
    }
    return ds;
}

}  // namespace

TEST_CASE("average precision on hand worked examples") {
    CHECK(average_precision({0.9, 0.8, 0.7, 0.6}, {1, 1, 0, 0}).value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(average_precision({0.9, 0.8, 0.7, 0.6}, {0, 1, 0, 1}).value == doctest::Approx(0.5).epsilon(1e-15));
    // Perfectly inverted ranking: positives at ranks 3 and 4.
    CHECK(average_precision({0.9, 0.8, 0.7, 0.6}, {0, 0, 1, 1}).value ==
          doctest::Approx((1.0 / 3 + 2.0 / 4) / 2).epsilon(1e-12));
}

TEST_CASE("tied scores rank negatives first") {
    // One positive, one negative, same score: positive lands at rank 2.
    CHECK(average_precision({0.5, 0.5}, {1, 0}).value == doctest::Approx(0.5).epsilon(1e-15));
    // Balanced all-tied set of 2n items: AP = (1/n) sum_k k/(n+k).
    for (int n : {2, 5, 50}) {
        std::vector<double> scores(2 * n, 0.25);
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) {
            labels.push_back(1);
            labels.push_back(0);
        }
        double expect = 0;
        for (int k = 1; k <= n; ++k) expect += static_cast<double>(k) / (n + k);
        expect /= n;
        CHECK(average_precision(scores, labels).value == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("average precision matches the oracle exhaustively for n <= 8") {
    Rng rng(17);
    for (int n = 2; n <= 8; ++n) {
        for (int mask = 1; mask < (1 << n) - 1; ++mask) {
            std::vector<int> labels(n);
            for (int i = 0; i < n; ++i) labels[i] = (mask >> i) & 1;
            // Continuous scores, heavily tied scores, and all-equal scores.
            for (int variant = 0; variant < 3; ++variant) {
                std::vector<double> scores(n);
                for (auto& s : scores)
                    s = variant == 0 ? rng.uniform() : variant == 1 ? (1 + rng.uniform_int(3)) * 0.1 : 0.5;
                double got = average_precision(scores, labels).value;
                double want = ap_oracle(scores, labels);
                CHECK(std::abs(got - want) < 1e-12);
            }
        }
    }
}

TEST_CASE("average precision matches the oracle on random inputs") {
    Rng rng(18);
    for (int iter = 0; iter < 300; ++iter) {
        int n = 10 + static_cast<int>(rng.uniform_int(60));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < n; ++i) {
            scores[i] = rng.uniform() < 0.4 ? (1 + rng.uniform_int(5)) * 0.2 : rng.uniform();
            labels[i] = rng.uniform() < 0.5;
            (labels[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos) labels[0] = 1;
        if (!has_neg) labels[n - 1] = 0;
        CHECK(std::abs(average_precision(scores, labels).value - ap_oracle(scores, labels)) < 1e-9);
    }
}

TEST_CASE("average precision rejects degenerate input") {
    CHECK_THROWS_AS(average_precision({}, {}), UndefinedMetric);
    CHECK_THROWS_AS(average_precision({0.5, 0.4}, {1, 1}), UndefinedMetric);
    CHECK_THROWS_AS(average_precision({0.5, 0.4}, {0, 0}), UndefinedMetric);
    CHECK_THROWS_AS(average_precision({0.5}, {1, 0}), InvalidArgument);
    CHECK_THROWS_AS(average_precision({std::nan(""), 0.4}, {1, 0}), InvalidArgument);
    CHECK_THROWS_AS(average_precision({0.5, 0.4}, {1, 2}), InvalidArgument);
}

TEST_CASE("cov summary uses population statistics") {
    std::vector<double> vals{2, 4, 4, 4, 5, 5, 7, 9};
    CoVSummary s = cov_summary(vals, SummaryMode::IncludeAll);
    CHECK(s.mean == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(s.stddev == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(s.inv_cov == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(s.n_values == 8);

    CoVSummary ex = cov_summary({100.0, 2, 4, 4, 4, 5, 5, 7, 9}, SummaryMode::ExcludeTrainColumn, 0);
    CHECK(ex.mean == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(ex.n_values == 8);

    CHECK_THROWS_AS(cov_summary({3, 3, 3}, SummaryMode::IncludeAll), DegenerateVariance);
    CHECK_THROWS_AS(cov_summary({}, SummaryMode::IncludeAll), UndefinedMetric);
    CHECK_THROWS_AS(cov_summary({1, 2}, SummaryMode::ExcludeTrainColumn, 5), InvalidArgument);
}

TEST_CASE("published tables reproduce from their cells") {
    PaperTables tables = load_paper_tables(std::string(LAF_SOURCE_DIR) + "/fixtures/paper_tables.json");
    REQUIRE(tables.tables.size() == 2);

    const FixtureTable& t1 = tables.table("table1");
    CHECK(t1.columns.size() == 7);
    CHECK(t1.rows.size() == 14);
    CHECK(t1.train_index == 0);
    TableReport r1 = reproduce_table(t1);
    for (const auto& row : r1.rows) {
        INFO("table1 row ", row.name);
        CHECK(row.pass);
    }
    CHECK(r1.all_pass());

    const FixtureTable& t2 = tables.table("table2");
    CHECK(t2.columns.size() == 16);
    CHECK(t2.rows.size() == 13);
    TableReport r2 = reproduce_table(t2);
    for (const auto& row : r2.rows) {
        INFO("table2 row ", row.name);
        CHECK(row.pass);
    }
    CHECK(r2.all_pass());
}

TEST_CASE("headline rows recompute to the published summaries") {
    PaperTables tables = load_paper_tables(std::string(LAF_SOURCE_DIR) + "/fixtures/paper_tables.json");
    const FixtureTable& t1 = tables.table("table1");

    auto check_row = [&](const FixtureRow& row, SummaryMode mode, double mean, double stddev, double inv_cov) {
        CHECK(row.mode == mode);
        CoVSummary s = cov_summary(row.cells, row.mode, 0);
        CHECK(std::round(s.mean * 100) / 100 == doctest::Approx(mean).epsilon(1e-12));
        CHECK(std::round(s.stddev * 100) / 100 == doctest::Approx(stddev).epsilon(1e-12));
        CHECK(std::round(s.inv_cov * 100) / 100 == doctest::Approx(inv_cov).epsilon(1e-12));
    };
    check_row(t1.row("Ours"), SummaryMode::ExcludeTrainColumn, 88.54, 8.23, 10.76);
    check_row(t1.row("Xception"), SummaryMode::ExcludeTrainColumn, 76.09, 21.86, 3.48);
    check_row(t1.row("Resnet-18"), SummaryMode::ExcludeTrainColumn, 58.21, 10.84, 5.37);
    // The two rows added in revision summarize over all seven columns.
    CHECK(t1.row("Xception++").mode == SummaryMode::IncludeAll);
    CHECK(t1.row("EfficientNet-V2").mode == SummaryMode::IncludeAll);

    const FixtureTable& t2 = tables.table("table2");
    const FixtureRow& ours2 = t2.row("Ours");
    CHECK(ours2.mode == SummaryMode::IncludeAll);
    CoVSummary s2 = cov_summary(ours2.cells, SummaryMode::IncludeAll);
    CHECK(std::abs(std::round(s2.mean * 100) / 100 - 75.57) <= 0.01 + 1e-12);
    CHECK(std::abs(std::round(s2.stddev * 100) / 100 - 14.94) <= 0.01 + 1e-12);
    CHECK(std::abs(std::round(s2.inv_cov * 100) / 100 - 5.06) <= 0.01 + 1e-12);
    CoVSummary sx = cov_summary(t2.row("Xception++").cells, SummaryMode::IncludeAll);
    CHECK(std::abs(std::round(sx.mean * 100) / 100 - 75.66) <= 0.01 + 1e-12);

    SUBCASE("a tampered published value fails reproduction") {
        FixtureTable copy = t1;
        copy.rows[0].published.mean += 0.05;
        TableReport rep = reproduce_table(copy);
        CHECK(!rep.rows[0].pass);
        CHECK(!rep.all_pass());
    }
}

TEST_CASE("fixture loader rejects malformed files") {
    CHECK_THROWS_AS(load_paper_tables("/nonexistent/tables.json"), FormatError);
    std::string bad = "/tmp/laf_bad_fixture.json";
    atomic_write_file(bad, "{\"tables\": [{\"id\": \"t\"}]}");
    CHECK_THROWS_AS(load_paper_tables(bad), FormatError);
    atomic_write_file(bad, "not json");
    CHECK_THROWS_AS(load_paper_tables(bad), FormatError);
}

TEST_CASE("cross matrix evaluates all pairs and isolates failures") {
    ModelConfig mc;
    mc.backbone.in_channels = 3;
    mc.backbone.input_size = 8;
    mc.backbone.layers = {ConvLayerSpec{4, 2}};
    mc.mlp_hidden1 = 6;
    mc.mlp_hidden2 = 4;
    mc.primitive_dim = 2;
    AggregationModel m1 = init_model(mc, 1);
    AggregationModel m2 = init_model(mc, 2);
    AggregationModel m3 = init_model(mc, 3);
    Rng rng(3);
    for (auto* mp : {&m1, &m2, &m3})
        for (auto& w : mp->head.weight) w = rng.normal();

    AlignedDataset d1 = tiny_dataset(rng, 8, 6, 0.02);
    AlignedDataset d2 = tiny_dataset(rng, 8, 6, 0.10);
    AlignedDataset d3 = tiny_dataset(rng, 8, 6, 0.40);
    std::vector<const AggregationModel*> models{&m1, &m2, &m3};
    std::vector<const AlignedDataset*> sets{&d1, &d2, &d3};
    std::vector<std::string> names{"a", "b", "c"};
    ExperimentMatrix m = cross_matrix(models, sets, names, 4);
    CHECK(m.rows() == 3);
    CHECK(m.cols() == 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            CHECK(m.at(r, c).ok);
            CHECK(m.at(r, c).ap_percent >= 0.0);
            CHECK(m.at(r, c).ap_percent <= 100.0);
        }

    // Deterministic across repeated evaluation.
    ExperimentMatrix m_again = cross_matrix(models, sets, names, 4);
    for (size_t i = 0; i < m.cells.size(); ++i) CHECK(m.cells[i].ap_percent == m_again.cells[i].ap_percent);

    // A dataset with one class poisons only its column.
    AlignedDataset single = d2;
    single.items.erase(std::remove_if(single.items.begin(), single.items.end(),
                                      [](const AlignedSample& s) { return s.label == 1; }),
                       single.items.end());
    ExperimentMatrix bad = cross_matrix(models, {&d1, &single, &d3}, names, 4);
    for (int r = 0; r < 3; ++r) {
        CHECK(bad.at(r, 0).ok);
        CHECK(!bad.at(r, 1).ok);
        CHECK(bad.at(r, 2).ok);
    }
    CHECK(bad.at(0, 1).error.find("undefined metric") != std::string::npos);
    CHECK_THROWS_AS(bad.row_values(0), UndefinedMetric);

    std::vector<double> row0 = m.row_values(0);
    double inc_mean = (row0[0] + row0[1] + row0[2]) / 3;
    double exc_mean = (row0[1] + row0[2]) / 2;
    auto summary_mean = [&](SummaryMode mode) {
        try {
            return matrix_row_summary(m, 0, mode).mean;
        } catch (const DegenerateVariance&) {
            return mode == SummaryMode::IncludeAll ? inc_mean : exc_mean;
        }
    };
    CHECK(summary_mean(SummaryMode::IncludeAll) == doctest::Approx(inc_mean).epsilon(1e-12));
    CHECK(summary_mean(SummaryMode::ExcludeTrainColumn) == doctest::Approx(exc_mean).epsilon(1e-12));
}

TEST_CASE("score_dataset is deterministic and ranks the brighter fakes higher") {
    ModelConfig mc;
    mc.backbone.in_channels = 3;
    mc.backbone.input_size = 8;
    mc.backbone.layers = {ConvLayerSpec{4, 2}};
    mc.mlp_hidden1 = 6;
    mc.mlp_hidden2 = 4;
    mc.primitive_dim = 2;
    AggregationModel m = init_model(mc, 9);
    Rng rng(10);
    for (auto& w : m.head.weight) w = rng.normal();
    AlignedDataset ds = tiny_dataset(rng, 8, 6, 0.3);
    auto s1 = score_dataset(m, ds, 4);
    auto s2 = score_dataset(m, ds, 4);
    CHECK(s1 == s2);
    for (double p : s1) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
}
