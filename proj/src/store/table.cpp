#include "store/table.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "common/binio.hpp"
#include "common/error.hpp"

namespace crlab::store {

std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

namespace {

std::string cell_text(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) {
    if (s->find_first_of(",\n\"") != std::string::npos) throw_usage("csv cell contains a separator: " + *s);
    return *s;
  }
  return format_number(std::get<double>(c));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw_io(where + ": not a number: '" + s + "'");
  return v;
}

}  // namespace

std::string table_text(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += cell_text(table.header[i]);
  }
  out += '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw_usage("csv row width does not match the header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += cell_text(row[i]);
    }
    out += '\n';
  }
  return out;
}

void write_table(const Table& table, const std::filesystem::path& path) {
  write_text_file(path, table_text(table));
}

std::string csv_text(const MetricSeries& series) {
  series.validate();
  Table t;
  const bool err = series.has_errors();
  t.header = {series.x_label, series.name};
  if (err) t.header.push_back(series.err_label.empty() ? series.name + "_err" : series.err_label);
  for (const auto& p : series.points) {
    std::vector<Cell> row{p.x, p.y};
    if (err) row.emplace_back(p.y_err.value_or(0.0));
    t.rows.push_back(std::move(row));
  }
  return table_text(t);
}

void write_csv(const MetricSeries& series, const std::filesystem::path& path) {
  write_text_file(path, csv_text(series));
}

MetricSeries parse_csv(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw_io(what + ": empty file");
  const auto header = split(line);
  if (header.size() != 2 && header.size() != 3) throw_io(what + ": expected 2 or 3 columns");
  MetricSeries s;
  s.x_label = header[0];
  s.name = header[1];
  if (header.size() == 3) s.err_label = header[2];
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cells = split(line);
    const std::string where = what + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) throw_io(where + ": wrong column count");
    MetricPoint p{parse_double(cells[0], where), parse_double(cells[1], where), {}};
    if (cells.size() == 3) p.y_err = parse_double(cells[2], where);
    s.points.push_back(p);
  }
  return s;
}

MetricSeries read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text_file(path), path.string());
}

}  // namespace crlab::store
