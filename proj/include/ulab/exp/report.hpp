#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ulab/attack/quantize.hpp"
#include "ulab/diag/distance.hpp"
#include "ulab/diag/lmc.hpp"
#include "ulab/train/metrics.hpp"

namespace ulab::exp {

// Mean of a metric stream's tail: every record within the final 50 steps of
// the phase (the last 5 cadence records plus the final one). Streams shorter
// than the window are averaged whole and flagged.
struct ScatterPoint {
  double test_acc = 0;
  double forget_ho_acc = 0;
  std::size_t records = 0;
  bool short_window = false;
};

inline ScatterPoint aggregate_tail(const std::vector<train::MetricsRecord>& stream,
                                   std::int64_t window_steps = 50) {
  ScatterPoint p;
  ULAB_CHECK(!stream.empty(), "cannot aggregate an empty metric stream");
  const std::int64_t last = stream.back().step;
  const std::int64_t cutoff = last - window_steps;
  double t = 0, f = 0;
  std::size_t n = 0;
  for (const auto& r : stream) {
    if (r.step > cutoff) {
      t += r.test_acc;
      f += r.forget_ho_acc;
      ++n;
    }
  }
  if (n == stream.size() && stream.front().step > cutoff) p.short_window = true;
  p.records = n;
  p.test_acc = t / static_cast<double>(n);
  p.forget_ho_acc = f / static_cast<double>(n);
  return p;
}

// ---------------------------------------------------------------------------
// CSV emission. All floating point output uses a fixed format so reruns are
// byte-identical.

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header) : f_(path, std::ios::trunc) {
    ULAB_CHECK(f_.good(), "cannot open csv for writing: " + path);
    f_ << header << '\n';
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) f_ << (i ? "," : "") << cells[i];
    f_ << '\n';
  }
  ~CsvWriter() { f_.flush(); }

 private:
  std::ofstream f_;
};

inline void write_lmc_csv(const std::string& path, const diag::LmcCurve& curve) {
  CsvWriter w(path, "alpha,test_acc,forget_acc,retain_acc");
  for (const auto& p : curve.points)
    w.row({fmt(p.alpha), fmt(p.test_acc), fmt(p.forget_acc), fmt(p.retain_acc)});
}

inline void write_quant_csv(const std::string& path, const std::vector<attack::QuantRow>& rows) {
  CsvWriter w(path, "bits,test_acc,forget_acc");
  for (const auto& r : rows)
    w.row({std::to_string(r.bits), fmt(r.test_acc), fmt(r.forget_ho_acc)});
}

inline void write_distance_csv(const std::string& path, const diag::DistanceReport& rep) {
  CsvWriter w(path, "method,l2_distance");
  for (const auto& r : rep.rows) w.row({r.method, fmt(r.distance)});
  w.row({"retrain_from_scratch", fmt(rep.retrain_distance)});
}

}  // namespace ulab::exp
