#pragma once

#include <string>
#include <vector>

#include "rei/types.hpp"

namespace rei {

struct CsvTable {
  std::vector<std::string> header;
  MatrixXd values;

  int column_index(const std::string& name) const;
};

// Plain numeric CSV with a header row. Missing/non-numeric cells are rejected.
CsvTable read_csv(const std::string& path);

// Column map for building a Dataset out of a CSV: outcome first, regressors
// after, optional intercept appended, optional cluster / panel columns.
struct ColumnMap {
  std::string outcome;
  std::vector<std::string> regressors;
  bool add_intercept = true;
  std::string cluster;   // optional
  std::string unit;      // optional, panel
  std::string time;      // optional, panel
};

Dataset load_dataset(const std::string& path, const ColumnMap& map);

void write_dataset_csv(const std::string& path, const Dataset& data,
                       const std::vector<std::string>& column_names);

} // namespace rei
