#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "common/metric_series.hpp"

namespace crlab::store {

// Numbers are written with 9 significant digits, '.' decimal separator.
std::string format_number(double v);

using Cell = std::variant<std::string, double>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};

// Header row then one LF-terminated row per entry; byte-stable.
std::string table_text(const Table& table);
void write_table(const Table& table, const std::filesystem::path& path);

// Columns: x_label, name[, err_label].
std::string csv_text(const MetricSeries& series);
void write_csv(const MetricSeries& series, const std::filesystem::path& path);
MetricSeries parse_csv(const std::string& text, const std::string& what = "csv");
MetricSeries read_csv(const std::filesystem::path& path);

}  // namespace crlab::store
