#pragma once

#include <string>
#include <vector>

#include "laf/eval.hpp"

namespace laf {

// Published result tables kept as per-cell fixtures so the summary
// statistics can be recomputed and checked rather than trusted.
struct PublishedSummary {
    double mean = 0;
    double stddev = 0;
    double inv_cov = 0;
};

struct FixtureRow {
    std::string name;
    std::vector<double> cells;  // AP percent
    PublishedSummary published;
    SummaryMode mode = SummaryMode::IncludeAll;
};

struct FixtureTable {
    std::string id;
    std::vector<std::string> columns;
    int train_index = -1;  // column excluded in ExcludeTrainColumn mode
    std::vector<FixtureRow> rows;

    const FixtureRow& row(const std::string& name) const;
};

struct PaperTables {
    std::vector<FixtureTable> tables;
    const FixtureTable& table(const std::string& id) const;
};

PaperTables load_paper_tables(const std::string& path);

struct RowReport {
    std::string name;
    SummaryMode mode = SummaryMode::IncludeAll;
    CoVSummary computed;
    PublishedSummary published;
    bool pass = false;  // all three stats within tolerance after rounding
};

struct TableReport {
    std::string id;
    std::vector<RowReport> rows;
    bool all_pass() const;
};

// Recompute each row's (mean, std, inv_cov) from its cells under the row's
// summary mode and compare with the published values to the tolerance.
TableReport reproduce_table(const FixtureTable& table, double tolerance = 0.01);

std::string table_report_csv(const TableReport& report);
std::string table_report_json(const TableReport& report);

}  // namespace laf
