#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ulab/core/error.hpp"
#include "ulab/core/tensor.hpp"

namespace ulab::data {

// Labeled examples with stable global ids. Ids are unique across the whole
// experiment (train and test live in disjoint id ranges), which is what the
// access audit keys on.
struct Dataset {
  Tensor<float> x;  // (N, ...) row-major
  std::vector<int> labels;
  std::vector<std::uint32_t> ids;
  int classes = 0;
  std::string provenance;  // "synthetic" | "idx" | derived tags

  std::size_t size() const { return labels.size(); }

  void validate() const {
    ULAB_CHECK(size() > 0, "dataset is empty");
    ULAB_CHECK(x.rows() == size() && ids.size() == size(), "dataset field lengths disagree");
    std::vector<bool> seen(static_cast<std::size_t>(classes), false);
    std::set<std::uint32_t> uniq;
    for (std::size_t i = 0; i < size(); ++i) {
      ULAB_CHECK(labels[i] >= 0 && labels[i] < classes, "label out of range");
      seen[static_cast<std::size_t>(labels[i])] = true;
      uniq.insert(ids[i]);
    }
    ULAB_CHECK(uniq.size() == size(), "example ids are not unique");
    for (bool s : seen) ULAB_CHECK(s, "a class has no examples");
  }
};

// Per-example typicality in [0, 1]; higher = more typical. Aligned with the
// dataset's example order.
struct TypicalityScores {
  std::vector<float> score;
  std::string method;  // "ground_truth" | "holdout_consistency"

  void validate(const Dataset& d) const {
    ULAB_CHECK(score.size() == d.size(), "one typicality score per example required");
    for (float s : score) ULAB_CHECK(s >= 0.0f && s <= 1.0f, "typicality score outside [0, 1]");
  }
};

// Materialize the rows at `index_list` (positions, not ids) as a new
// dataset; global ids are preserved.
inline Dataset subset(const Dataset& d, const std::vector<std::uint32_t>& index_list,
                      const std::string& tag = "") {
  Dataset out;
  out.classes = d.classes;
  out.provenance = tag.empty() ? d.provenance : d.provenance + ":" + tag;
  const std::size_t row = d.x.row_size();
  std::vector<std::size_t> shape = d.x.shape;
  shape[0] = index_list.size();
  out.x = Tensor<float>::zeros(shape);
  out.labels.resize(index_list.size());
  out.ids.resize(index_list.size());
  for (std::size_t i = 0; i < index_list.size(); ++i) {
    const std::uint32_t src = index_list[i];
    ULAB_CHECK(src < d.size(), "subset index out of range");
    std::copy(d.x.row(src), d.x.row(src) + row, out.x.row(i));
    out.labels[i] = d.labels[src];
    out.ids[i] = d.ids[src];
  }
  return out;
}

// Gather rows (by position) into a batch tensor plus labels and ids.
struct Batch {
  Tensor<float> x;
  std::vector<int> labels;
  std::vector<std::uint32_t> ids;
};

inline Batch gather(const Dataset& d, const std::uint32_t* index_list, std::size_t n) {
  Batch b;
  std::vector<std::size_t> shape = d.x.shape;
  shape[0] = n;
  b.x = Tensor<float>::zeros(shape);
  b.labels.resize(n);
  b.ids.resize(n);
  const std::size_t row = d.x.row_size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t src = index_list[i];
    std::copy(d.x.row(src), d.x.row(src) + row, b.x.row(i));
    b.labels[i] = d.labels[src];
    b.ids[i] = d.ids[src];
  }
  return b;
}

inline Batch gather(const Dataset& d, const std::vector<std::uint32_t>& idx) {
  return gather(d, idx.data(), idx.size());
}

}  // namespace ulab::data
