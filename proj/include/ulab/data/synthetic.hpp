#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "ulab/core/hash.hpp"
#include "ulab/core/rng.hpp"
#include "ulab/data/dataset.hpp"

namespace ulab::data {

// Desk-scale synthetic classification data with ground-truth typicality.
//
// Each class is a union of Gaussian modes around well-separated centers
// (modes_per_class = 1 degenerates to one cluster per class). Multi-modal
// classes make the learned function non-trivial: independent training runs
// assign modes to hidden units differently, which is what gives checkpoint
// interpolation something to break.
//
// The atypical subpopulation of class c consists of small, tight "islands"
// placed inside the territory of a different class c', still labeled c.
// A model that never saw an island predicts c' there, so island members are
// predictable only through memorization; fresh islands are drawn for the
// test split so that held-out atypical examples come from unseen islands.
struct SyntheticConfig {
  int classes = 10;
  int per_class = 500;
  double atypical_fraction = 0.10;
  int input_dim = 32;
  std::uint64_t seed = 0;

  int modes_per_class = 3;     // gaussian modes forming one class
  int island_size = 10;        // examples per island
  double cluster_sigma = 1.0;  // typical within-mode spread
  double island_sigma = 0.25;  // island spread
  double mean_radius = 6.0;    // mode centers live on a sphere of this radius
  double island_offset = 2.0;  // island center distance from the foreign mode center
};

namespace detail {

inline std::vector<double> unit_vector(int dim, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

// Mode centers, indexed [class * modes_per_class + mode].
inline std::vector<std::vector<double>> mode_centers(const SyntheticConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "class-means"));
  std::vector<std::vector<double>> centers;
  centers.reserve(static_cast<std::size_t>(cfg.classes * cfg.modes_per_class));
  for (int c = 0; c < cfg.classes * cfg.modes_per_class; ++c) {
    auto u = unit_vector(cfg.input_dim, rng);
    for (auto& x : u) x *= cfg.mean_radius;
    centers.push_back(std::move(u));
  }
  return centers;
}

struct SplitSizes {
  int atypical;
  int typical;
};

inline SplitSizes split_sizes(int per_class, double fraction) {
  const int atyp = static_cast<int>(std::llround(fraction * per_class));
  return {atyp, per_class - atyp};
}

inline std::pair<Dataset, TypicalityScores> generate(const SyntheticConfig& cfg, int per_class,
                                                     std::uint32_t id_offset,
                                                     std::uint64_t stream_tag) {
  ULAB_CHECK(cfg.classes >= 2, "need at least two classes");
  ULAB_CHECK(cfg.modes_per_class >= 1, "need at least one mode per class");
  ULAB_CHECK(cfg.atypical_fraction > 0.0 && cfg.atypical_fraction <= 0.2,
             "atypical_fraction must lie in (0, 0.2]");
  const auto sizes = split_sizes(per_class, cfg.atypical_fraction);
  ULAB_CHECK(sizes.atypical >= 1, "per_class * atypical_fraction rounds to zero");
  const auto centers = mode_centers(cfg);

  const std::size_t n = static_cast<std::size_t>(cfg.classes) * static_cast<std::size_t>(per_class);
  const auto dim = static_cast<std::size_t>(cfg.input_dim);
  Dataset d;
  d.classes = cfg.classes;
  d.provenance = "synthetic";
  d.x = Tensor<float>::zeros({n, dim});
  d.labels.resize(n);
  d.ids.resize(n);
  TypicalityScores scores;
  scores.method = "ground_truth";
  scores.score.assign(n, 1.0f);

  Rng rng(derive_seed(cfg.seed, "examples", stream_tag));
  const auto modes = static_cast<std::uint64_t>(cfg.modes_per_class);
  std::size_t row = 0;
  for (int c = 0; c < cfg.classes; ++c) {
    for (int i = 0; i < sizes.typical; ++i, ++row) {
      const auto m = static_cast<std::size_t>(c) * modes + rng.below(modes);
      float* out = d.x.row(row);
      for (std::size_t k = 0; k < dim; ++k)
        out[k] = static_cast<float>(centers[m][k] + cfg.cluster_sigma * rng.normal());
      d.labels[row] = c;
    }
    // islands: tight clusters of class-c points parked near a foreign mode
    int remaining = sizes.atypical;
    while (remaining > 0) {
      const int count = std::min(cfg.island_size, remaining);
      remaining -= count;
      const auto foreign_class =
          (static_cast<std::uint64_t>(c) + 1 + rng.below(static_cast<std::uint64_t>(cfg.classes - 1))) %
          static_cast<std::uint64_t>(cfg.classes);
      const auto foreign = foreign_class * modes + rng.below(modes);
      const auto dir = unit_vector(cfg.input_dim, rng);
      std::vector<double> center(dim);
      for (std::size_t k = 0; k < dim; ++k)
        center[k] = centers[foreign][k] + cfg.island_offset * dir[k];
      for (int i = 0; i < count; ++i, ++row) {
        float* out = d.x.row(row);
        for (std::size_t k = 0; k < dim; ++k)
          out[k] = static_cast<float>(center[k] + cfg.island_sigma * rng.normal());
        d.labels[row] = c;
        scores.score[row] = 0.0f;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) d.ids[i] = id_offset + static_cast<std::uint32_t>(i);
  d.validate();
  scores.validate(d);
  return {std::move(d), std::move(scores)};
}

}  // namespace detail

// Training split; ids start at 0.
inline std::pair<Dataset, TypicalityScores> make_synthetic(const SyntheticConfig& cfg) {
  ULAB_CHECK(detail::split_sizes(cfg.per_class, cfg.atypical_fraction).atypical >= 10,
             "per_class * atypical_fraction must be at least 10");
  return detail::generate(cfg, cfg.per_class, 0, 0);
}

// Test split with the same class geometry but fresh draws and fresh island
// locations. Ids continue after the training range.
inline std::pair<Dataset, TypicalityScores> make_synthetic_test(const SyntheticConfig& cfg,
                                                                int per_class_test) {
  const auto train_n = static_cast<std::uint32_t>(cfg.classes) *
                       static_cast<std::uint32_t>(cfg.per_class);
  return detail::generate(cfg, per_class_test, train_n, 1);
}

}  // namespace ulab::data
