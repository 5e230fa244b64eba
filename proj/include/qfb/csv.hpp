// csv.hpp
// Numeric CSV tables with "# key = value" metadata headers.

#pragma once

#include "qfb/engine.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace qfb {

struct CsvTable {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<Real>> rows;
    /// Trailing "# fit,..." rows: a label followed by numbers.
    std::vector<std::pair<std::string, std::vector<Real>>> fits;
    std::vector<std::string> fit_columns;

    std::size_t column(const std::string& name) const;
    std::vector<Real> column_values(const std::string& name) const;
    const std::string* meta_value(const std::string& key) const;
};

void write_csv(std::ostream& out, const CsvTable& table);
std::string to_csv_text(const CsvTable& table);
CsvTable read_csv(std::istream& in);
CsvTable parse_csv_text(const std::string& text);
void write_csv_file(const std::string& path, const CsvTable& table);
CsvTable read_csv_file(const std::string& path);

/// Everything except comment lines.
std::string csv_body(const std::string& text);

CsvTable trajectory_table(const TrajectoryRecord& rec);
/// Aggregate curves plus fit rows for d0_mean and V_qsr_mean and the
/// per-trajectory slope quantiles.
CsvTable aggregate_table(const MonteCarloResult& mc, Real fit_start_fraction);
CsvTable deterministic_table(const DeterministicTrajectory& tr);

}  // namespace qfb
