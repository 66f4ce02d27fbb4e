#pragma once

#include <cstddef>
#include <vector>

#include "tda/linalg.hpp"

namespace tda {

/// An ordered labelled sample set. Sample i is (features.row(i), labels[i])
/// and carries the stable id ids[i].
struct Dataset {
  RowMatrix features;           // n x d
  std::vector<Label> labels;    // n entries in [0, num_classes)
  int num_classes = 0;
  std::vector<std::size_t> ids; // 0..n-1 unless produced by a subset view

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }

  /// Row i as a contiguous column vector view.
  auto x(std::size_t i) const { return features.row(static_cast<Eigen::Index>(i)).transpose(); }

  /// Throws tda::Error if any invariant is broken.
  void validate() const;

  /// Builds a dataset with ids 0..n-1 and validates it.
  static Dataset make(RowMatrix features, std::vector<Label> labels, int num_classes);

  /// Rows at the given positions, in order. Ids are carried over.
  Dataset select(const std::vector<std::size_t>& positions) const;

  /// Rows where mask[i] is true.
  Dataset select(const std::vector<bool>& mask) const;

  std::vector<std::size_t> class_counts() const;

  bool operator==(const Dataset& other) const;
};

}  // namespace tda
