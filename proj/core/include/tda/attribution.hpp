#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tda/dataset.hpp"
#include "tda/linalg.hpp"
#include "tda/nn.hpp"

namespace tda {

/// Test inputs plus the output index each row is explained for.
struct TestBatch {
  RowMatrix features;
  std::vector<Label> targets;

  std::size_t size() const noexcept { return targets.size(); }
  auto x(std::size_t t) const { return features.row(static_cast<Eigen::Index>(t)).transpose(); }

  /// Targets set to the model's predicted class.
  static TestBatch predicted(const Model& model, RowMatrix features);
  /// Targets set to the dataset labels.
  static TestBatch labelled(const Dataset& ds);
};

/// Scores tau(z_t, D)_i, one row per explained test sample.
struct AttributionMatrix {
  RowMatrix values;  // num_test x n
  std::vector<Label> test_targets;
  std::string method_name;
  std::vector<std::size_t> train_ids;

  std::size_t num_test() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t num_train() const noexcept { return static_cast<std::size_t>(values.cols()); }
  std::span<const double> row(std::size_t t) const {
    return {values.data() + t * num_train(), num_train()};
  }
  void validate() const;
  bool operator==(const AttributionMatrix& o) const {
    return method_name == o.method_name && test_targets == o.test_targets &&
           train_ids == o.train_ids && values.rows() == o.values.rows() &&
           values.cols() == o.values.cols() && values == o.values;
  }
};

// Configuration ----------------------------------------------------------------

enum class SimilarityMeasure { dot, cosine };

struct SimilarityConfig {
  SimilarityMeasure measure = SimilarityMeasure::dot;
};

struct InfluenceConfig {
  double damping = 1e-3;
  ParamScope scope = ParamScope::last_layer;
  std::optional<std::size_t> low_rank;  // unset: exact damped inverse
  std::size_t max_hessian_dim = kDefaultHessianCap;
};

struct TracInConfig {
  ParamScope scope = ParamScope::last_layer;
  std::size_t projection_dim = 0;  // 0: no projection
  std::uint64_t seed = 0;
  std::vector<int> checkpoint_epochs;  // empty: every supplied checkpoint
};

struct RepresenterConfig {
  double l2_strength = 1e-2;
  double tolerance = 1e-8;
  std::size_t max_iterations = 200000;
};

struct TrakConfig {
  std::size_t projection_dim = 0;  // 0: exact gradients
  std::uint64_t seed = 0;
};

struct RandomConfig {
  std::uint64_t seed = 0;
};

struct ExplainerConfig {
  std::variant<SimilarityConfig, InfluenceConfig, TracInConfig, RepresenterConfig, TrakConfig,
               RandomConfig>
      params;
  std::string name;  // display label; defaults to method()

  std::string method() const;
  std::string label() const { return name.empty() ? method() : name; }
  void validate() const;
  bool uses_seed() const;
  /// Copy with every seed field replaced (no-op for deterministic methods).
  ExplainerConfig with_seed(std::uint64_t seed) const;
};

// Explainers ---------------------------------------------------------------------

/// One attribution method bound to a model and training set. Construction does
/// all one-off work (factorizations, refits, projections); afterwards the
/// object is immutable and explain/self_influence may run concurrently.
class Explainer {
 public:
  virtual ~Explainer() = default;
  Explainer(const Explainer&) = delete;
  Explainer& operator=(const Explainer&) = delete;

  virtual std::string method_name() const = 0;

  /// One row per test sample. Throws on an empty batch or bad targets.
  AttributionMatrix explain(const TestBatch& batch) const;

  /// tau(z_i, D)_i for every training sample, using the training labels as targets.
  virtual Vector self_influence() const = 0;

  const Model& model() const noexcept { return model_; }
  const Dataset& train_set() const noexcept { return train_; }

 protected:
  Explainer(Model model, Dataset train);
  virtual RowMatrix explain_rows(const TestBatch& batch) const = 0;

  Model model_;
  Dataset train_;
};

std::unique_ptr<Explainer> make_explainer(const ExplainerConfig& cfg, const Model& model,
                                          const Dataset& train,
                                          std::span<const Checkpoint> checkpoints = {});

/// Functional shortcuts: build, use, discard.
AttributionMatrix explain(const ExplainerConfig& cfg, const Model& model, const Dataset& train,
                          std::span<const Checkpoint> checkpoints, const TestBatch& batch);
Vector self_influence(const ExplainerConfig& cfg, const Model& model, const Dataset& train,
                      std::span<const Checkpoint> checkpoints = {});

class SimilarityExplainer final : public Explainer {
 public:
  SimilarityExplainer(const Model& model, const Dataset& train, SimilarityConfig cfg);
  std::string method_name() const override { return "similarity"; }
  Vector self_influence() const override;

 private:
  RowMatrix explain_rows(const TestBatch& batch) const override;
  SimilarityConfig cfg_;
  RowMatrix train_features_;  // n x p, unit rows under cosine
};

class InfluenceExplainer final : public Explainer {
 public:
  InfluenceExplainer(const Model& model, const Dataset& train, InfluenceConfig cfg);
  std::string method_name() const override { return "influence"; }
  Vector self_influence() const override;

  /// (H + damping I)^{-1}, or its rank-r spectral truncation.
  const Matrix& inverse_hessian() const noexcept { return inverse_; }

 private:
  RowMatrix explain_rows(const TestBatch& batch) const override;
  InfluenceConfig cfg_;
  Matrix inverse_;
  RowMatrix train_grads_;  // n x |scope|
  Matrix solved_;          // |scope| x n, inverse_ * train_grads_^T
};

class TracInExplainer final : public Explainer {
 public:
  TracInExplainer(const Model& model, const Dataset& train,
                  std::span<const Checkpoint> checkpoints, TracInConfig cfg);
  std::string method_name() const override { return "tracin"; }
  Vector self_influence() const override;

 private:
  struct Term {
    double learning_rate;
    Model model;
    RowMatrix train_grads;  // n x k (projected) or n x |scope|
  };
  RowMatrix explain_rows(const TestBatch& batch) const override;
  Vector project(const Vector& g) const;

  TracInConfig cfg_;
  std::optional<RowMatrix> projection_;
  std::vector<Term> terms_;
};

/// Last layer refit (bias-free, L2-regularized) plus representer weights.
struct RepresenterState {
  RowMatrix features;  // n x p, h(z_i)
  Matrix weights;      // p x C, refit last layer
  RowMatrix alphas;    // n x C, -(1 / (2 lambda n)) dL/df(z_i)
  double l2_strength = 0.0;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;

  /// weights - features^T alphas, the representer-theorem residual.
  Matrix reconstruction_residual() const;
};

/// Gradient descent with Armijo backtracking (c = 1e-4, halving) on
/// mean CE(W^T h_i, y_i) + lambda |W|_F^2, started from the model's last layer.
RepresenterState representer_fit(const Model& model, const Dataset& train,
                                 const RepresenterConfig& cfg);

class RepresenterExplainer final : public Explainer {
 public:
  RepresenterExplainer(const Model& model, const Dataset& train, RepresenterConfig cfg);
  std::string method_name() const override { return "representer"; }
  Vector self_influence() const override;
  const RepresenterState& state() const noexcept { return state_; }

 private:
  RowMatrix explain_rows(const TestBatch& batch) const override;
  RepresenterState state_;
};

/// p is clamped to [1e-12, 1 - 1e-12] before the logit transform.
inline constexpr double kProbabilityClamp = 1e-12;
inline constexpr double kTrakGramDamping = 1e-8;

/// Gradient of r(x) = log(p / (1 - p)), p = softmax(f(x))_target, w.r.t. theta.
Vector grad_log_odds(const Model& model, VectorRef x, Label target,
                     ParamScope scope = ParamScope::all);

/// (Phi^T Phi + 1e-8 I)^{-1} Phi^T diag(q), dim x n. Solved in the smaller of
/// the parameter and sample spaces (push-through identity).
Matrix trak_operator(const RowMatrix& train_grads, const Vector& q);

/// Single-model TRAK core: rows of the result are
/// phi_t^T (Phi^T Phi + 1e-8 I)^{-1} Phi^T diag(q).
RowMatrix trak_scores(const RowMatrix& train_grads, const Vector& q, const RowMatrix& test_grads);

class TrakExplainer final : public Explainer {
 public:
  TrakExplainer(const Model& model, const Dataset& train, TrakConfig cfg);
  std::string method_name() const override { return "trak"; }
  Vector self_influence() const override;

 private:
  RowMatrix explain_rows(const TestBatch& batch) const override;
  Vector project(const Vector& g) const;

  TrakConfig cfg_;
  std::optional<RowMatrix> projection_;
  Matrix solved_;  // dim x n, (Phi^T Phi + eps I)^{-1} Phi^T diag(q)
  RowMatrix train_grads_;
};

class RandomExplainer final : public Explainer {
 public:
  RandomExplainer(const Model& model, const Dataset& train, RandomConfig cfg);
  std::string method_name() const override { return "random"; }
  Vector self_influence() const override;

 private:
  RowMatrix explain_rows(const TestBatch& batch) const override;
  RandomConfig cfg_;
};

/// Dense k x dim matrix with i.i.d. N(0, 1/k) entries.
RowMatrix gaussian_projection(std::size_t k, std::size_t dim, std::uint64_t seed);

}  // namespace tda
