#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "tda/dataset.hpp"
#include "tda/linalg.hpp"

namespace tda {

/// Number of samples selected by a fraction: floor(fraction * n), with a
/// 1e-9 guard so that e.g. 0.3 * 10 counts as 3.
std::size_t fraction_count(double fraction, std::size_t n);

/// Constant additive trigger on fixed coordinates. `offsets[k]` is added to
/// coordinate `coords[k]`; it equals magnitude * std(feature) of the dataset
/// the patch was fitted on.
struct ShortcutPatch {
  std::vector<std::size_t> coords;
  std::vector<double> offsets;
  double magnitude = 0.0;  // in feature standard deviations

  Vector apply(VectorRef x) const;
  RowMatrix apply_rows(const RowMatrix& xs) const;
  bool operator==(const ShortcutPatch&) const = default;
};

/// Ground truth left behind by a corruption. Fields a corruption does not
/// touch stay empty.
struct CorruptionRecord {
  std::vector<std::size_t> mislabeled_idx;         // sorted ascending
  std::map<std::size_t, Label> original_labels;    // id -> label before flipping
  std::vector<std::size_t> shortcut_idx;           // sorted ascending
  std::optional<Label> shortcut_class;
  std::optional<ShortcutPatch> shortcut_patch;
  std::vector<std::size_t> adversarial_idx;        // sorted ascending
  std::optional<Label> adversarial_label;
  std::map<Label, Label> subclass_map;             // original label -> group label
  std::map<std::size_t, Label> original_subclass;  // id -> original label

  bool empty() const;
  /// Undoes label-space corruptions (flips and class grouping).
  Dataset restore_labels(const Dataset& corrupted) const;
  bool operator==(const CorruptionRecord&) const = default;
};

struct Corrupted {
  Dataset dataset;
  CorruptionRecord record;
};

struct Blobs {
  Dataset dataset;
  std::vector<int> subcluster;  // per-sample id in [0, C * subclusters_per_class)
};

/// Gaussian clusters with unit isotropic noise. Class means sit at pairwise
/// distance class_sep (on scaled basis vectors when d >= C, otherwise on a
/// circle in the first two coordinates). Subclusters of a class are spread
/// along a random direction over a segment of length class_sep / 2. Sample i
/// belongs to group i mod (C * subclusters_per_class).
Blobs make_blobs(std::size_t n, std::size_t d, int num_classes, double class_sep,
                 int subclusters_per_class, std::uint64_t seed);

/// Flips floor(fraction * n) uniformly chosen labels to a uniformly chosen
/// different class.
Corrupted flip_labels(const Dataset& ds, double fraction, std::uint64_t seed);

struct PatchSpec {
  std::vector<std::size_t> coords;
  double magnitude = 10.0;  // in feature standard deviations
};

/// Adds the patch to floor(fraction * |target_class|) samples of target_class.
Corrupted inject_shortcut(const Dataset& ds, Label target_class, double fraction,
                          const PatchSpec& patch, std::uint64_t seed);

/// Relabels every sample with grouping[label]. Groups must be 0..G-1.
Corrupted group_classes(const Dataset& ds, const std::map<Label, Label>& grouping);

/// Random partition of [C] into k non-empty groups.
std::map<Label, Label> random_grouping(int num_classes, int num_groups, std::uint64_t seed);

/// Appends adversarial samples after the base samples, all labelled
/// adversarial_label. Requires base.size() >= 10 * adversarial rows.
Corrupted mix_datasets(const Dataset& base, const RowMatrix& adversarial_features,
                       Label adversarial_label);

struct SubsetSpec {
  std::vector<std::vector<bool>> masks;
  double fraction = 0.5;
  std::uint64_t seed = 0;

  std::size_t num_subsets() const noexcept { return masks.size(); }
  bool operator==(const SubsetSpec&) const = default;
};

inline constexpr std::size_t kDefaultLdsSubsets = 64;
inline constexpr double kDefaultLdsFraction = 0.5;

/// m independent masks over n samples, each selecting exactly
/// floor(fraction * n) samples without replacement. Duplicate masks are
/// redrawn.
SubsetSpec sample_subsets(std::size_t n, std::size_t m, double fraction, std::uint64_t seed);

}  // namespace tda
