#include "tda/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>

#include "tda/error.hpp"
#include "tda/rng.hpp"

namespace tda {

namespace {

// First k entries of a seeded Fisher-Yates shuffle of [0, n), sorted.
std::vector<std::size_t> choose(std::size_t n, std::size_t k, CounterRng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + rng.below(n - i)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

// Dataset --------------------------------------------------------------------

void Dataset::validate() const {
  require(size() >= 1, ErrorCode::invalid_argument, "dataset: must contain at least one sample");
  require(static_cast<std::size_t>(features.rows()) == size(), ErrorCode::shape_mismatch,
          "dataset: feature rows do not match label count");
  require(num_classes >= 1, ErrorCode::invalid_argument, "dataset: num_classes must be >= 1");
  require(ids.size() == size(), ErrorCode::shape_mismatch, "dataset: ids length mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes, ErrorCode::label_out_of_range,
            "dataset: label of sample " + std::to_string(i) + " out of range");
  }
  require(features.allFinite(), ErrorCode::numeric, "dataset: features must be finite");
  std::unordered_set<std::size_t> seen(ids.begin(), ids.end());
  require(seen.size() == ids.size(), ErrorCode::invalid_argument, "dataset: ids must be unique");
}

Dataset Dataset::make(RowMatrix features, std::vector<Label> labels, int num_classes) {
  Dataset ds;
  ds.features = std::move(features);
  ds.labels = std::move(labels);
  ds.num_classes = num_classes;
  ds.ids.resize(ds.labels.size());
  std::iota(ds.ids.begin(), ds.ids.end(), std::size_t{0});
  ds.validate();
  return ds;
}

Dataset Dataset::select(const std::vector<std::size_t>& positions) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(positions.size()), features.cols());
  for (std::size_t r = 0; r < positions.size(); ++r) {
    require(positions[r] < size(), ErrorCode::invalid_argument, "dataset: select out of range");
    out.features.row(static_cast<Eigen::Index>(r)) =
        features.row(static_cast<Eigen::Index>(positions[r]));
    out.labels.push_back(labels[positions[r]]);
    out.ids.push_back(ids[positions[r]]);
  }
  return out;
}

Dataset Dataset::select(const std::vector<bool>& mask) const {
  require(mask.size() == size(), ErrorCode::shape_mismatch, "dataset: mask length mismatch");
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) positions.push_back(i);
  }
  return select(positions);
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
  for (Label y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

bool Dataset::operator==(const Dataset& other) const {
  return num_classes == other.num_classes && labels == other.labels && ids == other.ids &&
         features.rows() == other.features.rows() && features.cols() == other.features.cols() &&
         features == other.features;
}

// Helpers ----------------------------------------------------------------------

std::size_t fraction_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

Vector ShortcutPatch::apply(VectorRef x) const {
  Vector out = x;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    require(coords[k] < static_cast<std::size_t>(x.size()), ErrorCode::shape_mismatch,
            "shortcut patch coordinate out of range");
    out[static_cast<Eigen::Index>(coords[k])] += offsets[k];
  }
  return out;
}

RowMatrix ShortcutPatch::apply_rows(const RowMatrix& xs) const {
  RowMatrix out = xs;
  for (Eigen::Index i = 0; i < xs.rows(); ++i) out.row(i) = apply(xs.row(i).transpose()).transpose();
  return out;
}

bool CorruptionRecord::empty() const {
  return mislabeled_idx.empty() && shortcut_idx.empty() && adversarial_idx.empty() &&
         subclass_map.empty() && original_subclass.empty();
}

Dataset CorruptionRecord::restore_labels(const Dataset& corrupted) const {
  Dataset out = corrupted;
  if (!original_subclass.empty()) {
    int max_label = 0;
    for (const auto& [orig, group] : subclass_map) max_label = std::max(max_label, orig);
    out.num_classes = max_label + 1;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t id = out.ids[i];
    if (auto it = original_subclass.find(id); it != original_subclass.end()) out.labels[i] = it->second;
    if (auto it = original_labels.find(id); it != original_labels.end()) out.labels[i] = it->second;
  }
  return out;
}

// Generators -------------------------------------------------------------------

Blobs make_blobs(std::size_t n, std::size_t d, int num_classes, double class_sep,
                 int subclusters_per_class, std::uint64_t seed) {
  require(d >= 1, ErrorCode::invalid_argument, "make_blobs: d must be >= 1");
  require(num_classes >= 2, ErrorCode::invalid_argument, "make_blobs: num_classes must be >= 2");
  require(subclusters_per_class >= 1, ErrorCode::invalid_argument,
          "make_blobs: subclusters_per_class must be >= 1");
  require(class_sep >= 0.0 && std::isfinite(class_sep), ErrorCode::invalid_argument,
          "make_blobs: class_sep must be finite and >= 0");
  const auto groups = static_cast<std::size_t>(num_classes) *
                      static_cast<std::size_t>(subclusters_per_class);
  require(n >= groups, ErrorCode::invalid_argument,
          "make_blobs: n must be at least num_classes * subclusters_per_class");

  const auto dim = static_cast<Eigen::Index>(d);
  RowMatrix means = RowMatrix::Zero(static_cast<Eigen::Index>(groups), dim);
  for (int c = 0; c < num_classes; ++c) {
    Vector center = Vector::Zero(dim);
    if (d >= static_cast<std::size_t>(num_classes)) {
      center[c] = class_sep / std::numbers::sqrt2;
    } else if (d >= 2) {
      const double angle = 2.0 * std::numbers::pi * c / num_classes;
      const double radius = class_sep / (2.0 * std::sin(std::numbers::pi / num_classes));
      center[0] = radius * std::cos(angle);
      center[1] = radius * std::sin(angle);
    } else {
      center[0] = class_sep * c;
    }
    Vector direction = Vector::Zero(dim);
    if (subclusters_per_class > 1) {
      CounterRng rng(derive_seed(seed, "blobs.subcluster", static_cast<std::uint64_t>(c)));
      for (Eigen::Index k = 0; k < dim; ++k) direction[k] = rng.normal();
      direction.normalize();
    }
    for (int s = 0; s < subclusters_per_class; ++s) {
      const double t = subclusters_per_class > 1
                           ? 2.0 * s / (subclusters_per_class - 1) - 1.0
                           : 0.0;
      means.row(c * subclusters_per_class + s) = (center + (class_sep / 4.0) * t * direction).transpose();
    }
  }

  Blobs out;
  RowMatrix xs(static_cast<Eigen::Index>(n), dim);
  std::vector<Label> labels(n);
  out.subcluster.resize(n);
  CounterRng noise(derive_seed(seed, "blobs.noise"));
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = static_cast<int>(i % groups);
    out.subcluster[i] = g;
    labels[i] = g / subclusters_per_class;
    for (Eigen::Index k = 0; k < dim; ++k) {
      xs(static_cast<Eigen::Index>(i), k) = means(g, k) + noise.normal();
    }
  }
  out.dataset = Dataset::make(std::move(xs), std::move(labels), num_classes);
  return out;
}

Corrupted flip_labels(const Dataset& ds, double fraction, std::uint64_t seed) {
  ds.validate();
  require(fraction >= 0.0 && fraction < 1.0, ErrorCode::invalid_argument,
          "flip_labels: fraction must lie in [0, 1)");
  require(ds.num_classes >= 2 || fraction == 0.0, ErrorCode::invalid_argument,
          "flip_labels: need at least two classes");
  Corrupted out{ds, {}};
  const std::size_t k = fraction_count(fraction, ds.size());
  CounterRng rng(derive_seed(seed, "flip_labels"));
  for (std::size_t pos : choose(ds.size(), k, rng)) {
    const Label old = ds.labels[pos];
    auto draw = static_cast<Label>(rng.below(static_cast<std::uint64_t>(ds.num_classes - 1)));
    if (draw >= old) ++draw;  // uniform over [C] \ {old}
    out.dataset.labels[pos] = draw;
    out.record.mislabeled_idx.push_back(ds.ids[pos]);
    out.record.original_labels[ds.ids[pos]] = old;
  }
  std::sort(out.record.mislabeled_idx.begin(), out.record.mislabeled_idx.end());
  return out;
}

Corrupted inject_shortcut(const Dataset& ds, Label target_class, double fraction,
                          const PatchSpec& patch, std::uint64_t seed) {
  ds.validate();
  require(fraction >= 0.0 && fraction <= 1.0, ErrorCode::invalid_argument,
          "inject_shortcut: fraction must lie in [0, 1]");
  require(target_class >= 0 && target_class < ds.num_classes, ErrorCode::label_out_of_range,
          "inject_shortcut: target_class out of range");
  require(!patch.coords.empty(), ErrorCode::invalid_argument,
          "inject_shortcut: patch needs at least one coordinate");
  for (std::size_t c : patch.coords) {
    require(c < ds.dim(), ErrorCode::shape_mismatch,
            "inject_shortcut: patch coordinate " + std::to_string(c) + " >= d");
  }
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == target_class) members.push_back(i);
  }
  require(!members.empty(), ErrorCode::invalid_argument,
          "inject_shortcut: class " + std::to_string(target_class) + " absent from dataset");

  ShortcutPatch fitted;
  fitted.coords = patch.coords;
  fitted.magnitude = patch.magnitude;
  const double n = static_cast<double>(ds.size());
  for (std::size_t c : patch.coords) {
    const auto col = ds.features.col(static_cast<Eigen::Index>(c));
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / n;
    const double sigma = var > 0.0 ? std::sqrt(var) : 1.0;
    fitted.offsets.push_back(patch.magnitude * sigma);
  }

  Corrupted out{ds, {}};
  const std::size_t k = fraction_count(fraction, members.size());
  CounterRng rng(derive_seed(seed, "inject_shortcut"));
  for (std::size_t pick : choose(members.size(), k, rng)) {
    const std::size_t pos = members[pick];
    out.dataset.features.row(static_cast<Eigen::Index>(pos)) =
        fitted.apply(ds.x(pos)).transpose();
    out.record.shortcut_idx.push_back(ds.ids[pos]);
  }
  std::sort(out.record.shortcut_idx.begin(), out.record.shortcut_idx.end());
  out.record.shortcut_class = target_class;
  out.record.shortcut_patch = std::move(fitted);
  return out;
}

Corrupted group_classes(const Dataset& ds, const std::map<Label, Label>& grouping) {
  ds.validate();
  std::set<Label> groups;
  for (Label c = 0; c < ds.num_classes; ++c) {
    auto it = grouping.find(c);
    require(it != grouping.end(), ErrorCode::invalid_argument,
            "group_classes: grouping does not cover label " + std::to_string(c));
    groups.insert(it->second);
  }
  const auto num_groups = static_cast<Label>(groups.size());
  require(*groups.begin() == 0 && *groups.rbegin() == num_groups - 1, ErrorCode::invalid_argument,
          "group_classes: group labels must be 0..G-1");

  Corrupted out{ds, {}};
  out.dataset.num_classes = num_groups;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.dataset.labels[i] = grouping.at(ds.labels[i]);
    out.record.original_subclass[ds.ids[i]] = ds.labels[i];
  }
  for (Label c = 0; c < ds.num_classes; ++c) out.record.subclass_map[c] = grouping.at(c);
  return out;
}

std::map<Label, Label> random_grouping(int num_classes, int num_groups, std::uint64_t seed) {
  require(num_groups >= 1 && num_groups <= num_classes, ErrorCode::invalid_argument,
          "random_grouping: need 1 <= groups <= classes");
  std::vector<Label> perm(static_cast<std::size_t>(num_classes));
  std::iota(perm.begin(), perm.end(), 0);
  CounterRng rng(derive_seed(seed, "random_grouping"));
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::map<Label, Label> grouping;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    grouping[perm[i]] = static_cast<Label>(i % static_cast<std::size_t>(num_groups));
  }
  return grouping;
}

Corrupted mix_datasets(const Dataset& base, const RowMatrix& adversarial_features,
                       Label adversarial_label) {
  base.validate();
  const auto adv_n = static_cast<std::size_t>(adversarial_features.rows());
  if (adv_n == 0) return {base, {}};
  require(static_cast<std::size_t>(adversarial_features.cols()) == base.dim(),
          ErrorCode::shape_mismatch, "mix_datasets: adversarial feature dimension mismatch");
  require(adversarial_label >= 0 && adversarial_label < base.num_classes,
          ErrorCode::label_out_of_range, "mix_datasets: adversarial_label out of range");
  require(base.size() >= 10 * adv_n, ErrorCode::invalid_argument,
          "mix_datasets: base set must be at least 10x the adversarial set");

  const std::size_t n = base.size() + adv_n;
  RowMatrix xs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(base.dim()));
  xs.topRows(static_cast<Eigen::Index>(base.size())) = base.features;
  xs.bottomRows(static_cast<Eigen::Index>(adv_n)) = adversarial_features;
  std::vector<Label> labels = base.labels;
  labels.resize(n, adversarial_label);

  Corrupted out;
  out.dataset = Dataset::make(std::move(xs), std::move(labels), base.num_classes);
  for (std::size_t i = base.size(); i < n; ++i) out.record.adversarial_idx.push_back(i);
  out.record.adversarial_label = adversarial_label;
  return out;
}

SubsetSpec sample_subsets(std::size_t n, std::size_t m, double fraction, std::uint64_t seed) {
  require(m >= 1, ErrorCode::invalid_argument, "sample_subsets: m must be >= 1");
  require(fraction > 0.0 && fraction < 1.0, ErrorCode::invalid_argument,
          "sample_subsets: fraction must lie in (0, 1)");
  const std::size_t k = fraction_count(fraction, n);
  require(k >= 1 && k < n, ErrorCode::invalid_argument,
          "sample_subsets: floor(fraction * n) must lie in [1, n)");

  constexpr int kMaxAttempts = 64;
  SubsetSpec spec;
  spec.fraction = fraction;
  spec.seed = seed;
  std::set<std::vector<bool>> seen;
  for (std::size_t j = 0; j < m; ++j) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      CounterRng rng(derive_seed(seed, "subset", (static_cast<std::uint64_t>(attempt) << 32) | j));
      std::vector<bool> mask(n, false);
      for (std::size_t pos : choose(n, k, rng)) mask[pos] = true;
      if (seen.insert(mask).second) {
        spec.masks.push_back(std::move(mask));
        placed = true;
      }
    }
    require(placed, ErrorCode::invalid_argument,
            "sample_subsets: could not draw " + std::to_string(m) + " distinct subsets");
  }
  return spec;
}

}  // namespace tda
