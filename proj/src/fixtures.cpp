#include "laf/fixtures.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace laf {

using json = nlohmann::json;

const FixtureRow& FixtureTable::row(const std::string& name) const {
    for (const auto& r : rows)
        if (r.name == name) return r;
    throw InvalidArgument("table " + id + " has no row named " + name);
}

const FixtureTable& PaperTables::table(const std::string& want) const {
    for (const auto& t : tables)
        if (t.id == want) return t;
    throw InvalidArgument("no fixture table with id " + want);
}

PaperTables load_paper_tables(const std::string& path) {
    json root;
    try {
        root = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw FormatError("cannot parse " + path + ": " + e.what());
    }
    try {
        PaperTables out;
        for (const auto& jt : root.at("tables")) {
            FixtureTable t;
            t.id = jt.at("id");
            for (const auto& c : jt.at("columns")) t.columns.push_back(c);
            if (jt.contains("train_index") && !jt.at("train_index").is_null())
                t.train_index = jt.at("train_index");
            SummaryMode default_mode = parse_summary_mode(jt.at("default_summary_mode"));
            for (const auto& jr : jt.at("rows")) {
                FixtureRow r;
                r.name = jr.at("name");
                for (const auto& c : jr.at("cells")) r.cells.push_back(c);
                if (r.cells.size() != t.columns.size())
                    throw FormatError("row " + r.name + " has " + std::to_string(r.cells.size()) +
                                      " cells, table has " + std::to_string(t.columns.size()) + " columns");
                r.published.mean = jr.at("published").at("mean");
                r.published.stddev = jr.at("published").at("std");
                r.published.inv_cov = jr.at("published").at("inv_cov");
                r.mode = jr.contains("summary_mode") ? parse_summary_mode(jr.at("summary_mode")) : default_mode;
                if (r.mode == SummaryMode::ExcludeTrainColumn && t.train_index < 0)
                    throw FormatError("row " + r.name + " excludes the train column but the table has none");
                t.rows.push_back(std::move(r));
            }
            out.tables.push_back(std::move(t));
        }
        if (out.tables.empty()) throw FormatError(path + " contains no tables");
        return out;
    } catch (const json::exception& e) {
        throw FormatError("bad fixture schema in " + path + ": " + e.what());
    }
}

bool TableReport::all_pass() const {
    for (const auto& r : rows)
        if (!r.pass) return false;
    return !rows.empty();
}

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

bool within(double computed, double published, double tol) {
    return std::abs(round2(computed) - published) <= tol + 1e-12;
}

}  // namespace

TableReport reproduce_table(const FixtureTable& table, double tolerance) {
    TableReport rep;
    rep.id = table.id;
    for (const auto& row : table.rows) {
        RowReport rr;
        rr.name = row.name;
        rr.mode = row.mode;
        rr.published = row.published;
        rr.computed = cov_summary(row.cells, row.mode, table.train_index);
        rr.pass = within(rr.computed.mean, row.published.mean, tolerance) &&
                  within(rr.computed.stddev, row.published.stddev, tolerance) &&
                  within(rr.computed.inv_cov, row.published.inv_cov, tolerance);
        rep.rows.push_back(rr);
    }
    return rep;
}

std::string table_report_csv(const TableReport& report) {
    std::ostringstream out;
    out << "table,row,mode,mean,std,inv_cov,published_mean,published_std,published_inv_cov,pass\n";
    char buf[64];
    for (const auto& r : report.rows) {
        out << report.id << ',' << r.name << ',' << summary_mode_name(r.mode) << ',';
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.2f,", r.computed.mean, r.computed.stddev, r.computed.inv_cov);
        out << buf;
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.2f,", r.published.mean, r.published.stddev,
                      r.published.inv_cov);
        out << buf << (r.pass ? "pass" : "FAIL") << '\n';
    }
    return out.str();
}

std::string table_report_json(const TableReport& report) {
    json j;
    j["table"] = report.id;
    j["all_pass"] = report.all_pass();
    json rows = json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"row", r.name},
                        {"mode", summary_mode_name(r.mode)},
                        {"computed", {{"mean", r.computed.mean}, {"std", r.computed.stddev}, {"inv_cov", r.computed.inv_cov}}},
                        {"published", {{"mean", r.published.mean}, {"std", r.published.stddev}, {"inv_cov", r.published.inv_cov}}},
                        {"pass", r.pass}});
    }
    j["rows"] = rows;
    return j.dump(2) + "\n";
}

}  // namespace laf
