#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tda/attribution.hpp"
#include "tda/data.hpp"
#include "tda/metrics.hpp"
#include "tda/nn.hpp"
#include "tda/serialize.hpp"

namespace tda {

inline constexpr int kBundleSchemaVersion = 1;

enum class BenchmarkKind {
  lds,
  class_detection,
  subclass_detection,
  mislabeling,
  shortcut,
  mixed_datasets,
  model_randomization,
  topk_cardinality,
};

const char* to_string(BenchmarkKind k) noexcept;
BenchmarkKind parse_kind(const std::string& s);
const std::vector<BenchmarkKind>& all_kinds();

/// Metric arguments stored with a bundle. Only the fields of the bundle's
/// kind are meaningful.
struct MetricParams {
  std::string aggregator = "self_influence";  // mislabeling: self_influence | sum | sum_abs
  std::size_t top_k = 10;                     // topk_cardinality
  ParamScope randomization_scope = ParamScope::all;  // model_randomization

  bool operator==(const MetricParams&) const = default;
};

/// Retrained-model outputs for LDS. outputs(t, j) is the log-odds of
/// targets[t] under the model trained on subsets.masks[j].
struct LdsCache {
  SubsetSpec subsets;
  std::vector<Label> targets;
  RowMatrix outputs;  // num_test x m
  std::vector<std::uint64_t> train_seeds;

  bool operator==(const LdsCache& o) const {
    return subsets == o.subsets && targets == o.targets && train_seeds == o.train_seeds &&
           outputs.rows() == o.outputs.rows() && outputs.cols() == o.outputs.cols() &&
           outputs == o.outputs;
  }
};

struct Manifest {
  int schema_version = kBundleSchemaVersion;
  BenchmarkKind kind = BenchmarkKind::class_detection;
  std::uint64_t master_seed = 0;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> files;  // relative path -> sha256
  std::string created_at;
  std::vector<std::string> warnings;
  Json generate_config;  // null for assembled bundles
};

/// A controlled evaluation environment: data, trained model, training trace,
/// ground truth and metric arguments. Immutable once built.
struct BenchmarkBundle {
  BenchmarkKind kind = BenchmarkKind::class_detection;
  Dataset train;
  Dataset test;
  std::vector<Label> test_subclass;  // subclass_detection only
  Model model;
  std::vector<Checkpoint> checkpoints;
  std::optional<TrainConfig> train_config;  // unset for assembled bundles
  CorruptionRecord record;
  MetricParams metric;
  std::optional<LdsCache> lds;
  Manifest manifest;

  /// Throws on any cross-component inconsistency.
  void validate() const;
};

// Generation -------------------------------------------------------------------------

struct DataParams {
  std::size_t n = 200;  // training samples (after any mixing: base samples)
  std::size_t dim = 8;
  int num_classes = 4;
  double class_sep = 4.0;
  int subclusters_per_class = 1;
  double test_fraction = 0.2;  // share of all generated samples held out
};

struct CorruptionParams {
  double fraction = 0.3;                  // mislabeling: flipped share; shortcut: patched share of the class
  Label shortcut_class = 0;
  std::vector<std::size_t> patch_coords;  // empty: last feature
  double patch_magnitude = 10.0;
  int num_groups = 2;                     // subclass_detection
  std::size_t mix_ratio = 10;             // mixed_datasets: base : adversarial
  Label adversarial_label = 0;
};

struct LdsParams {
  std::size_t num_subsets = kDefaultLdsSubsets;
  double fraction = kDefaultLdsFraction;
};

struct GenerateConfig {
  BenchmarkKind kind = BenchmarkKind::class_detection;
  std::uint64_t seed = 0;
  DataParams data;
  std::vector<std::size_t> hidden_dims;
  Activation activation = Activation::relu;
  TrainConfig train;  // seed is replaced by a derived seed
  CorruptionParams corruption;
  LdsParams lds;
  MetricParams metric;
  unsigned threads = 0;  // LDS retraining workers; 0: hardware concurrency

  void validate() const;
};

Json to_json(const GenerateConfig& cfg);
GenerateConfig generate_config_from_json(const Json& j);

BenchmarkBundle generate(const GenerateConfig& cfg);

/// Wraps user assets without retraining. LDS bundles must bring their cache.
BenchmarkBundle assemble(BenchmarkKind kind, Dataset train, Dataset test, Model model,
                         std::vector<Checkpoint> checkpoints, CorruptionRecord record,
                         MetricParams metric, std::optional<LdsCache> lds = std::nullopt,
                         std::vector<Label> test_subclass = {});

/// Log-odds log(p / (1 - p)) of `target`, with p clamped away from 0 and 1.
double log_odds(const Model& model, VectorRef x, Label target);

// Bundle I/O ---------------------------------------------------------------------------

/// Writes the bundle directory and fills in the manifest file hashes.
void save(const BenchmarkBundle& bundle, const std::filesystem::path& dir);
BenchmarkBundle load(const std::filesystem::path& dir);

Json to_json(const Manifest& m);
Manifest manifest_from_json(const Json& j);

// Evaluation ------------------------------------------------------------------------------

struct Evaluation {
  metrics::MetricResult result;
  Json curves = Json::object();
};

/// Test batch the bundle's metric is evaluated on (after any filtering), with
/// the targets attributions are explained for.
TestBatch evaluation_batch(const BenchmarkBundle& bundle);

Evaluation evaluate(const BenchmarkBundle& bundle, const ExplainerConfig& explainer);

/// Drives the metric with attributions computed elsewhere for
/// evaluation_batch(bundle). Not available for model_randomization.
Evaluation evaluate_attributions(const BenchmarkBundle& bundle,
                                 const AttributionMatrix& attributions);

}  // namespace tda
