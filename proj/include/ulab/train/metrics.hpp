#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ulab/core/error.hpp"

namespace ulab::train {

// One row of the metric stream, sampled every eval_every steps plus the
// final step of each phase.
struct MetricsRecord {
  std::string phase;
  std::int64_t step = 0;  // global optimizer step (cumulative across phases)
  double test_acc = 0;
  double forget_ho_acc = 0;
  double train_loss = 0;
  double lr = 0;
};

inline std::string metrics_csv_header() { return "phase,step,test_acc,forget_ho_acc,train_loss,lr"; }

inline std::string to_csv_row(const MetricsRecord& r) {
  std::ostringstream os;
  os.precision(9);
  os << r.phase << ',' << r.step << ',' << r.test_acc << ',' << r.forget_ho_acc << ','
     << r.train_loss << ',' << r.lr;
  return os.str();
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows) {
  std::ofstream f(path, std::ios::trunc);
  ULAB_CHECK(f.good(), "cannot open metrics file for writing: " + path);
  f << metrics_csv_header() << '\n';
  for (const auto& r : rows) f << to_csv_row(r) << '\n';
  ULAB_CHECK(f.good(), "metrics write failed: " + path);
}

inline std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  ULAB_CHECK(f.good(), "cannot open metrics file: " + path);
  std::string line;
  ULAB_CHECK(std::getline(f, line) && line == metrics_csv_header(),
             "unexpected metrics header in " + path);
  std::vector<MetricsRecord> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    MetricsRecord r;
    std::string field;
    std::getline(is, r.phase, ',');
    std::getline(is, field, ',');
    r.step = std::stoll(field);
    std::getline(is, field, ',');
    r.test_acc = std::stod(field);
    std::getline(is, field, ',');
    r.forget_ho_acc = std::stod(field);
    std::getline(is, field, ',');
    r.train_loss = std::stod(field);
    std::getline(is, field, ',');
    r.lr = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace ulab::train
