#include "tda/metrics.hpp"

#include <algorithm>

#include "tda/error.hpp"
#include "tda/nn.hpp"

namespace tda::metrics {

namespace {

double mean(const std::vector<double>& v) {
  // Left-to-right sum so the result does not depend on how updates were batched.
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

std::string skipped_warning(std::size_t count, const char* what) {
  return std::to_string(count) + " " + what;
}

void require_updates(bool any, const std::string& name) {
  require(any, ErrorCode::empty_state, name + ": compute called before any update");
}

}  // namespace

MetricResult Metric::compute() {
  MetricResult r = do_compute();
  r.metric = name();
  finalized_ = true;
  return r;
}

void Metric::reset() {
  do_reset();
  finalized_ = false;
}

void Metric::begin_update() const {
  require(!finalized_, ErrorCode::invalid_argument,
          name() + ": update after compute; call reset() first");
}

// Aggregator ------------------------------------------------------------------------------

const char* to_string(AggregatorMode m) noexcept { return m == AggregatorMode::sum ? "sum" : "sum_abs"; }

AggregatorMode parse_aggregator(const std::string& s) {
  if (s == "sum") return AggregatorMode::sum;
  if (s == "sum_abs") return AggregatorMode::sum_abs;
  fail(ErrorCode::invalid_argument, "aggregator: unknown mode '" + s + "'");
}

Aggregator::Aggregator(std::size_t num_train, AggregatorMode mode)
    : mode_(mode), scores_(Vector::Zero(static_cast<Eigen::Index>(num_train))) {}

void Aggregator::update(const AttributionMatrix& attributions) {
  require(attributions.num_train() == static_cast<std::size_t>(scores_.size()),
          ErrorCode::shape_mismatch, "aggregator: attribution width does not match training set");
  for (Eigen::Index t = 0; t < attributions.values.rows(); ++t) {
    if (mode_ == AggregatorMode::sum) {
      scores_ += attributions.values.row(t).transpose();
    } else {
      scores_ += attributions.values.row(t).transpose().cwiseAbs();
    }
  }
  rows_ += attributions.num_test();
}

std::vector<std::size_t> Aggregator::ranking() const {
  return stats::descending_order({scores_.data(), static_cast<std::size_t>(scores_.size())});
}

void Aggregator::add(const Vector& scores) {
  require(scores.size() == scores_.size(), ErrorCode::shape_mismatch,
          "aggregator: score length does not match training set");
  scores_ += scores;
  ++rows_;
}

void Aggregator::reset() {
  scores_.setZero();
  rows_ = 0;
}

// LDS ------------------------------------------------------------------------------------

LdsMetric::LdsMetric(SubsetSpec subsets) : subsets_(std::move(subsets)) {
  require(subsets_.num_subsets() >= 3, ErrorCode::invalid_argument,
          "lds: need at least 3 subsets for a rank correlation");
}

void LdsMetric::update(const AttributionMatrix& attributions, const RowMatrix& retrained_outputs) {
  begin_update();
  attributions.validate();
  const std::size_t m = subsets_.num_subsets();
  require(static_cast<std::size_t>(retrained_outputs.rows()) == attributions.num_test() &&
              static_cast<std::size_t>(retrained_outputs.cols()) == m,
          ErrorCode::shape_mismatch, "lds: retrained outputs must be num_test x m");
  for (const auto& mask : subsets_.masks) {
    require(mask.size() == attributions.num_train(), ErrorCode::shape_mismatch,
            "lds: subset masks do not align with the attribution columns");
  }
  std::vector<double> predicted(m), actual(m);
  for (std::size_t t = 0; t < attributions.num_test(); ++t) {
    const auto row = attributions.row(t);
    for (std::size_t j = 0; j < m; ++j) {
      double g = 0.0;
      const auto& mask = subsets_.masks[j];
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (mask[i]) g += row[i];
      }
      predicted[j] = g;
      actual[j] = retrained_outputs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j));
    }
    if (stats::is_constant(predicted) || stats::is_constant(actual)) {
      ++skipped_;
      continue;
    }
    rho_.push_back(stats::spearman(predicted, actual));
  }
}

MetricResult LdsMetric::do_compute() const {
  require_updates(!rho_.empty() || skipped_ > 0, name());
  require(!rho_.empty(), ErrorCode::no_evidence, "lds: every test row was constant");
  MetricResult r;
  r.score = mean(rho_);
  r.num_samples = rho_.size();
  if (skipped_) r.warnings.push_back(skipped_warning(skipped_, "constant rows skipped"));
  r.params = {{"num_subsets", subsets_.num_subsets()}, {"fraction", subsets_.fraction}};
  return r;
}

void LdsMetric::do_reset() {
  rho_.clear();
  skipped_ = 0;
}

// Class / subclass detection ------------------------------------------------------------------------

LabelMatchMetric::LabelMatchMetric(std::vector<Label> train_labels)
    : train_labels_(std::move(train_labels)) {}

void LabelMatchMetric::update(const AttributionMatrix& attributions,
                              const std::vector<Label>& test_labels) {
  begin_update();
  attributions.validate();
  require(attributions.num_train() == train_labels_.size(), ErrorCode::shape_mismatch,
          name() + ": attribution width does not match training labels");
  require(test_labels.size() == attributions.num_test(), ErrorCode::shape_mismatch,
          name() + ": test label count does not match attribution rows");
  for (std::size_t t = 0; t < attributions.num_test(); ++t) {
    const auto row = attributions.row(t);
    ++total_;
    if (stats::is_constant(row)) {
      ++constant_rows_;
      continue;
    }
    const std::size_t top = stats::topk_indices(row, 1).front();
    hits_ += train_labels_[top] == test_labels[t];
  }
}

MetricResult LabelMatchMetric::do_compute() const {
  require_updates(total_ > 0, name());
  MetricResult r;
  r.score = static_cast<double>(hits_) / static_cast<double>(total_);
  r.num_samples = total_;
  if (constant_rows_) r.warnings.push_back(skipped_warning(constant_rows_, "constant rows counted as misses"));
  return r;
}

void LabelMatchMetric::do_reset() {
  hits_ = total_ = constant_rows_ = 0;
}

// Mislabeling -----------------------------------------------------------------------------------

MislabelingMetric::MislabelingMetric(std::vector<std::size_t> mislabeled, std::size_t num_train,
                                     AggregatorMode mode)
    : mislabeled_(std::move(mislabeled)), aggregator_(num_train, mode) {
  require(!mislabeled_.empty(), ErrorCode::invalid_argument,
          "mislabeling: the mislabeled set is empty");
  for (std::size_t id : mislabeled_) {
    require(id < num_train, ErrorCode::invalid_argument, "mislabeling: mislabeled id out of range");
  }
}

void MislabelingMetric::update(const AttributionMatrix& attributions) {
  begin_update();
  attributions.validate();
  aggregator_.update(attributions);
}

void MislabelingMetric::update_global(const Vector& scores) {
  begin_update();
  require(scores.size() == aggregator_.scores().size(), ErrorCode::shape_mismatch,
          "mislabeling: global score length does not match training set");
  require(scores.allFinite(), ErrorCode::numeric, "mislabeling: non-finite global scores");
  // Self-influence is already one score per sample; it is added unmodified.
  aggregator_.add(scores);
  ++global_updates_;
}

std::vector<std::size_t> MislabelingMetric::ranking() const { return aggregator_.ranking(); }

MetricResult MislabelingMetric::do_compute() const {
  require_updates(aggregator_.rows() > 0, name());
  MetricResult r;
  r.score = stats::detection_auc(ranking(), mislabeled_);
  r.num_samples = aggregator_.rows();
  r.params = {{"aggregator", global_updates_ ? "global" : to_string(aggregator_.mode())},
              {"num_mislabeled", mislabeled_.size()}};
  return r;
}

nlohmann::json MislabelingMetric::curves() const {
  if (aggregator_.rows() == 0) return nlohmann::json::object();
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : stats::detection_curve(ranking(), mislabeled_)) pts.push_back({p.x, p.y});
  return {{"detection_curve", std::move(pts)}};
}

void MislabelingMetric::do_reset() {
  aggregator_.reset();
  global_updates_ = 0;
}

// Shortcut / mixed datasets ---------------------------------------------------------------------------

PositiveRetrievalMetric::PositiveRetrievalMetric(std::vector<std::size_t> positives,
                                                 std::size_t num_train)
    : positives_(std::move(positives)), num_train_(num_train) {
  require(!positives_.empty(), ErrorCode::invalid_argument, "positive training set is empty");
  require(positives_.size() < num_train_, ErrorCode::invalid_argument,
          "positive set must leave at least one negative");
}

void PositiveRetrievalMetric::update(const AttributionMatrix& attributions) {
  begin_update();
  attributions.validate();
  require(attributions.num_train() == num_train_, ErrorCode::shape_mismatch,
          name() + ": attribution width does not match training set");
  for (std::size_t t = 0; t < attributions.num_test(); ++t) {
    const auto row = attributions.row(t);
    if (stats::is_constant(row)) {
      ++constant_rows_;
      ap_.push_back(0.0);
      pr_.emplace_back();
      continue;
    }
    ap_.push_back(stats::auprc(row, positives_));
    pr_.push_back(stats::pr_curve(row, positives_));
  }
}

MetricResult PositiveRetrievalMetric::do_compute() const {
  require(!ap_.empty(), ErrorCode::no_evidence,
          name() + ": no test rows to evaluate (none survived filtering or no update)");
  MetricResult r;
  r.score = mean(ap_);
  r.num_samples = ap_.size();
  if (constant_rows_) r.warnings.push_back(skipped_warning(constant_rows_, "constant rows counted as misses"));
  r.params = {{"num_positives", positives_.size()},
              {"prevalence", static_cast<double>(positives_.size()) / static_cast<double>(num_train_)}};
  return r;
}

nlohmann::json PositiveRetrievalMetric::curves() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& curve : pr_) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : curve) pts.push_back({p.x, p.y});
    rows.push_back(std::move(pts));
  }
  return {{"pr_curves", std::move(rows)}, {"average_precision", ap_}};
}

void PositiveRetrievalMetric::do_reset() {
  constant_rows_ = 0;
  ap_.clear();
  pr_.clear();
}

bool shortcut_triggered(const Model& model, VectorRef clean_x, const ShortcutPatch& patch,
                        Label shortcut_class) {
  const Vector patched = patch.apply(clean_x);
  return predict(model, patched) == shortcut_class && predict(model, clean_x) != shortcut_class;
}

// Model randomization ----------------------------------------------------------------------------------

void ModelRandomizationMetric::update(const AttributionMatrix& original,
                                      const AttributionMatrix& randomized) {
  begin_update();
  original.validate();
  randomized.validate();
  require(original.num_test() == randomized.num_test() &&
              original.num_train() == randomized.num_train(),
          ErrorCode::shape_mismatch, "model_randomization: attribution shapes differ");
  for (std::size_t t = 0; t < original.num_test(); ++t) {
    const auto a = original.row(t);
    const auto b = randomized.row(t);
    if (stats::is_constant(a) || stats::is_constant(b)) {
      ++skipped_;
      continue;
    }
    rho_.push_back(stats::spearman(a, b));
  }
}

MetricResult ModelRandomizationMetric::do_compute() const {
  require_updates(!rho_.empty() || skipped_ > 0, name());
  require(!rho_.empty(), ErrorCode::no_evidence, "model_randomization: every row was constant");
  MetricResult r;
  r.score = mean(rho_);
  r.num_samples = rho_.size();
  if (skipped_) r.warnings.push_back(skipped_warning(skipped_, "constant rows skipped"));
  return r;
}

void ModelRandomizationMetric::do_reset() {
  rho_.clear();
  skipped_ = 0;
}

// Top-k cardinality --------------------------------------------------------------------------------------

TopKCardinalityMetric::TopKCardinalityMetric(std::size_t k) : k_(k) {
  require(k_ >= 1, ErrorCode::invalid_argument, "topk_cardinality: k must be >= 1");
}

void TopKCardinalityMetric::update(const AttributionMatrix& attributions) {
  begin_update();
  attributions.validate();
  require(k_ <= attributions.num_train(), ErrorCode::invalid_argument,
          "topk_cardinality: k exceeds the training set size");
  for (std::size_t t = 0; t < attributions.num_test(); ++t) {
    for (std::size_t id : stats::topk_indices(attributions.row(t), k_)) seen_.insert(id);
  }
  rows_ += attributions.num_test();
}

MetricResult TopKCardinalityMetric::do_compute() const {
  require_updates(rows_ > 0, name());
  MetricResult r;
  r.score = static_cast<double>(seen_.size()) / static_cast<double>(rows_ * k_);
  r.num_samples = rows_;
  r.params = {{"k", k_}};
  return r;
}

void TopKCardinalityMetric::do_reset() {
  seen_.clear();
  rows_ = 0;
}

// JSON -----------------------------------------------------------------------------------------------------

nlohmann::json to_json(const MetricResult& r) {
  return {{"metric", r.metric},
          {"score", r.score},
          {"num_samples", r.num_samples},
          {"warnings", r.warnings},
          {"params", r.params}};
}

MetricResult metric_result_from_json(const nlohmann::json& j) {
  MetricResult r;
  r.metric = j.at("metric").get<std::string>();
  r.score = j.at("score").get<double>();
  r.num_samples = j.at("num_samples").get<std::size_t>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.params = j.value("params", nlohmann::json::object());
  return r;
}

}  // namespace tda::metrics
