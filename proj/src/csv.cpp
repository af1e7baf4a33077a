#include "rei/csv.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace rei {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim whitespace and quotes
    auto b = cell.find_first_not_of(" \t\r\"");
    auto e = cell.find_last_not_of(" \t\r\"");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

} // namespace

int CsvTable::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<int>(j);
  throw ConfigError("csv: no column named '" + name + "'");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("csv: empty file " + path);
  CsvTable t;
  t.header = split_line(line);

  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw ConfigError("csv: row " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(t.header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (cells[j].empty() || cells[j] == "NA" || cells[j] == "." || cells[j] == "nan")
        throw ConfigError("csv: missing value at row " + std::to_string(line_no) +
                          ", column '" + t.header[j] + "'");
      char* end = nullptr;
      row[j] = std::strtod(cells[j].c_str(), &end);
      if (end == cells[j].c_str() || *end != '\0')
        throw ConfigError("csv: non-numeric value '" + cells[j] + "' at row " +
                          std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("csv: no data rows in " + path);
  t.values.resize(static_cast<long>(rows.size()), static_cast<long>(t.header.size()));
  for (long i = 0; i < t.values.rows(); ++i)
    for (long j = 0; j < t.values.cols(); ++j)
      t.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return t;
}

Dataset load_dataset(const std::string& path, const ColumnMap& map) {
  CsvTable t = read_csv(path);
  const long n = t.values.rows();
  const int y_col = t.column_index(map.outcome);
  std::vector<int> x_cols;
  for (const auto& name : map.regressors) x_cols.push_back(t.column_index(name));

  const int d = static_cast<int>(x_cols.size()) + (map.add_intercept ? 1 : 0);
  Dataset out;
  out.rows.resize(n, 1 + d);
  for (long i = 0; i < n; ++i) {
    out.rows(i, 0) = t.values(i, y_col);
    int k = 1;
    for (int c : x_cols) out.rows(i, k++) = t.values(i, c);
    if (map.add_intercept) out.rows(i, k) = 1.0;
  }

  auto label_column = [&](const std::string& name) {
    const int c = t.column_index(name);
    // map raw labels to dense 0-based ids in order of first appearance
    std::map<double, int> ids;
    std::vector<int> labels(n);
    for (long i = 0; i < n; ++i) {
      auto [it, fresh] = ids.emplace(t.values(i, c), static_cast<int>(ids.size()));
      labels[i] = it->second;
      (void)fresh;
    }
    return labels;
  };

  if (!map.cluster.empty()) out.cluster_ids = label_column(map.cluster);
  if (!map.unit.empty() && !map.time.empty()) {
    out.unit_ids = label_column(map.unit);
    out.time_ids = label_column(map.time);
    int n_units = 1 + *std::max_element(out.unit_ids->begin(), out.unit_ids->end());
    int T = 1 + *std::max_element(out.time_ids->begin(), out.time_ids->end());
    out.panel = PanelShape{n_units, T};
  }
  out.validate();
  return out;
}

void write_dataset_csv(const std::string& path, const Dataset& data,
                       const std::vector<std::string>& column_names) {
  if (static_cast<long>(column_names.size()) != data.width())
    throw ConfigError("write_dataset_csv: column name count mismatch");
  std::ofstream out(path);
  if (!out) throw ConfigError("write_dataset_csv: cannot open " + path);
  for (std::size_t j = 0; j < column_names.size(); ++j)
    out << column_names[j] << (j + 1 < column_names.size() ? ',' : '\n');
  out.precision(17);
  for (long i = 0; i < data.n(); ++i)
    for (long j = 0; j < data.width(); ++j)
      out << data.rows(i, j) << (j + 1 < data.width() ? ',' : '\n');
}

} // namespace rei
