#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tda/attribution.hpp"
#include "tda/data.hpp"
#include "tda/linalg.hpp"
#include "tda/stats.hpp"

namespace tda::metrics {

struct MetricResult {
  std::string metric;
  double score = 0.0;
  std::size_t num_samples = 0;
  std::vector<std::string> warnings;
  nlohmann::json params = nlohmann::json::object();
};

/// Stateful metric: feed attribution batches through the subclass's update
/// overloads, then call compute. compute is idempotent; further updates are
/// rejected until reset().
class Metric {
 public:
  virtual ~Metric() = default;
  virtual std::string name() const = 0;

  MetricResult compute();
  void reset();
  bool finalized() const noexcept { return finalized_; }

  /// Plot data (detection or PR curves); empty object when the metric has none.
  virtual nlohmann::json curves() const { return nlohmann::json::object(); }

 protected:
  void begin_update() const;
  virtual MetricResult do_compute() const = 0;
  virtual void do_reset() = 0;

 private:
  bool finalized_ = false;
};

enum class AggregatorMode { sum, sum_abs };

const char* to_string(AggregatorMode m) noexcept;
AggregatorMode parse_aggregator(const std::string& s);

/// Reduces attribution rows into one global training-sample score.
class Aggregator {
 public:
  Aggregator(std::size_t num_train, AggregatorMode mode);
  void update(const AttributionMatrix& attributions);
  /// Adds a ready-made global score vector (counted as one row).
  void add(const Vector& scores);
  const Vector& scores() const noexcept { return scores_; }
  std::vector<std::size_t> ranking() const;
  std::size_t rows() const noexcept { return rows_; }
  AggregatorMode mode() const noexcept { return mode_; }
  void reset();

 private:
  AggregatorMode mode_;
  Vector scores_;
  std::size_t rows_ = 0;
};

// Ground truth ----------------------------------------------------------------------------

/// Linear datamodeling score. Per test row, Spearman between the additive
/// prediction sum_{i in mask_j} tau_i and the retrained output f(z; D'_j).
class LdsMetric final : public Metric {
 public:
  explicit LdsMetric(SubsetSpec subsets);
  std::string name() const override { return "lds"; }
  /// retrained_outputs is num_test x m.
  void update(const AttributionMatrix& attributions, const RowMatrix& retrained_outputs);
  const std::vector<double>& per_sample() const noexcept { return rho_; }

 private:
  MetricResult do_compute() const override;
  void do_reset() override;
  SubsetSpec subsets_;
  std::vector<double> rho_;
  std::size_t skipped_ = 0;
};

// Downstream tasks ----------------------------------------------------------------------------

/// Fraction of test rows whose top-1 training sample carries the test label.
/// Constant rows count as misses.
class LabelMatchMetric : public Metric {
 public:
  void update(const AttributionMatrix& attributions, const std::vector<Label>& test_labels);

 protected:
  explicit LabelMatchMetric(std::vector<Label> train_labels);

 private:
  MetricResult do_compute() const override;
  void do_reset() override;
  std::vector<Label> train_labels_;
  std::size_t hits_ = 0;
  std::size_t total_ = 0;
  std::size_t constant_rows_ = 0;
};

class ClassDetectionMetric final : public LabelMatchMetric {
 public:
  explicit ClassDetectionMetric(std::vector<Label> train_labels)
      : LabelMatchMetric(std::move(train_labels)) {}
  std::string name() const override { return "class_detection"; }
};

/// Same rule on original (pre-grouping) labels.
class SubclassDetectionMetric final : public LabelMatchMetric {
 public:
  explicit SubclassDetectionMetric(std::vector<Label> train_subclass)
      : LabelMatchMetric(std::move(train_subclass)) {}
  std::string name() const override { return "subclass_detection"; }
};

/// Detection AUC of a global ranking against the mislabeled samples. The
/// ranking comes either from set_global_scores (self-influence) or from
/// aggregating attribution rows.
class MislabelingMetric final : public Metric {
 public:
  MislabelingMetric(std::vector<std::size_t> mislabeled, std::size_t num_train,
                    AggregatorMode mode = AggregatorMode::sum);
  std::string name() const override { return "mislabeling"; }
  void update(const AttributionMatrix& attributions);
  void update_global(const Vector& scores);
  nlohmann::json curves() const override;

 private:
  MetricResult do_compute() const override;
  void do_reset() override;
  std::vector<std::size_t> ranking() const;
  std::vector<std::size_t> mislabeled_;
  Aggregator aggregator_;
  std::size_t global_updates_ = 0;
};

/// Mean per-row average precision of a known positive training set. Constant
/// rows score 0.
class PositiveRetrievalMetric : public Metric {
 public:
  void update(const AttributionMatrix& attributions);
  nlohmann::json curves() const override;

 protected:
  PositiveRetrievalMetric(std::vector<std::size_t> positives, std::size_t num_train);

 private:
  MetricResult do_compute() const override;
  void do_reset() override;
  std::vector<std::size_t> positives_;
  std::size_t num_train_;
  std::vector<double> ap_;
  std::vector<std::vector<stats::CurvePoint>> pr_;
  std::size_t constant_rows_ = 0;
};

class ShortcutDetectionMetric final : public PositiveRetrievalMetric {
 public:
  ShortcutDetectionMetric(std::vector<std::size_t> shortcut_idx, std::size_t num_train)
      : PositiveRetrievalMetric(std::move(shortcut_idx), num_train) {}
  std::string name() const override { return "shortcut"; }
};

/// Keeps a test sample when its patched copy is predicted as the shortcut
/// class and the clean copy is not.
bool shortcut_triggered(const Model& model, VectorRef clean_x, const ShortcutPatch& patch,
                        Label shortcut_class);

// Heuristics ------------------------------------------------------------------------------

class MixedDatasetsMetric final : public PositiveRetrievalMetric {
 public:
  MixedDatasetsMetric(std::vector<std::size_t> adversarial_idx, std::size_t num_train)
      : PositiveRetrievalMetric(std::move(adversarial_idx), num_train) {}
  std::string name() const override { return "mixed_datasets"; }
};

/// Mean Spearman between attributions of the original and randomized model.
/// Lower is better. Rows where either side is constant are skipped.
class ModelRandomizationMetric final : public Metric {
 public:
  std::string name() const override { return "model_randomization"; }
  void update(const AttributionMatrix& original, const AttributionMatrix& randomized);

 private:
  MetricResult do_compute() const override;
  void do_reset() override;
  std::vector<double> rho_;
  std::size_t skipped_ = 0;
};

/// |union of per-row top-k sets| / (rows * k).
class TopKCardinalityMetric final : public Metric {
 public:
  explicit TopKCardinalityMetric(std::size_t k);
  std::string name() const override { return "topk_cardinality"; }
  void update(const AttributionMatrix& attributions);

 private:
  MetricResult do_compute() const override;
  void do_reset() override;
  std::size_t k_;
  std::set<std::size_t> seen_;
  std::size_t rows_ = 0;
};

nlohmann::json to_json(const MetricResult& r);
MetricResult metric_result_from_json(const nlohmann::json& j);

}  // namespace tda::metrics
