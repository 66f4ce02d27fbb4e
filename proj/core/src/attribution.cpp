#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "tda/attribution.hpp"
#include "tda/error.hpp"
#include "tda/rng.hpp"

namespace tda {

TestBatch TestBatch::predicted(const Model& model, RowMatrix features) {
  TestBatch batch;
  batch.targets = predict_all(model, features);
  batch.features = std::move(features);
  return batch;
}

TestBatch TestBatch::labelled(const Dataset& ds) { return TestBatch{ds.features, ds.labels}; }

void AttributionMatrix::validate() const {
  require(num_test() >= 1, ErrorCode::invalid_argument, "attributions: no test rows");
  require(test_targets.size() == num_test(), ErrorCode::shape_mismatch,
          "attributions: test_targets length does not match row count");
  require(train_ids.size() == num_train(), ErrorCode::shape_mismatch,
          "attributions: train_ids length does not match column count");
  require(values.allFinite(), ErrorCode::numeric, "attributions: non-finite values");
}

std::string ExplainerConfig::method() const {
  struct Visitor {
    std::string operator()(const SimilarityConfig&) const { return "similarity"; }
    std::string operator()(const InfluenceConfig&) const { return "influence"; }
    std::string operator()(const TracInConfig&) const { return "tracin"; }
    std::string operator()(const RepresenterConfig&) const { return "representer"; }
    std::string operator()(const TrakConfig&) const { return "trak"; }
    std::string operator()(const RandomConfig&) const { return "random"; }
  };
  return std::visit(Visitor{}, params);
}

void ExplainerConfig::validate() const {
  struct Visitor {
    void operator()(const SimilarityConfig&) const {}
    void operator()(const InfluenceConfig& c) const {
      require(c.damping > 0.0, ErrorCode::invalid_argument, "influence.damping must be > 0");
      require(!c.low_rank || *c.low_rank >= 1, ErrorCode::invalid_argument,
              "influence.rank must be >= 1");
    }
    void operator()(const TracInConfig&) const {}
    void operator()(const RepresenterConfig& c) const {
      require(c.l2_strength > 0.0, ErrorCode::invalid_argument,
              "representer.l2_strength must be > 0");
      require(c.tolerance > 0.0, ErrorCode::invalid_argument, "representer.tolerance must be > 0");
      require(c.max_iterations >= 1, ErrorCode::invalid_argument,
              "representer.max_iterations must be >= 1");
    }
    void operator()(const TrakConfig&) const {}
    void operator()(const RandomConfig&) const {}
  };
  std::visit(Visitor{}, params);
}

bool ExplainerConfig::uses_seed() const {
  return std::holds_alternative<TracInConfig>(params) || std::holds_alternative<TrakConfig>(params) ||
         std::holds_alternative<RandomConfig>(params);
}

ExplainerConfig ExplainerConfig::with_seed(std::uint64_t seed) const {
  ExplainerConfig out = *this;
  if (auto* c = std::get_if<TracInConfig>(&out.params)) c->seed = seed;
  if (auto* c = std::get_if<TrakConfig>(&out.params)) c->seed = seed;
  if (auto* c = std::get_if<RandomConfig>(&out.params)) c->seed = seed;
  return out;
}

Explainer::Explainer(Model model, Dataset train) : model_(std::move(model)), train_(std::move(train)) {
  train_.validate();
  require(train_.dim() == model_.arch().input_dim, ErrorCode::incompatible,
          "explainer: training set dimension does not match the model input");
  require(static_cast<std::size_t>(train_.num_classes) <= model_.arch().num_classes,
          ErrorCode::incompatible, "explainer: training set has more classes than the model");
}

AttributionMatrix Explainer::explain(const TestBatch& batch) const {
  require(batch.size() >= 1, ErrorCode::invalid_argument, "explain: test batch is empty");
  require(static_cast<std::size_t>(batch.features.rows()) == batch.size(),
          ErrorCode::shape_mismatch, "explain: feature rows do not match target count");
  require(static_cast<std::size_t>(batch.features.cols()) == model_.arch().input_dim,
          ErrorCode::shape_mismatch, "explain: test features have the wrong dimension");
  for (Label y : batch.targets) {
    require(y >= 0 && static_cast<std::size_t>(y) < model_.arch().num_classes,
            ErrorCode::label_out_of_range, "explain: target " + std::to_string(y) + " out of range");
  }
  AttributionMatrix out{explain_rows(batch), batch.targets, method_name(), train_.ids};
  require(out.values.allFinite(), ErrorCode::numeric,
          method_name() + ": produced non-finite attributions");
  return out;
}

std::unique_ptr<Explainer> make_explainer(const ExplainerConfig& cfg, const Model& model,
                                          const Dataset& train,
                                          std::span<const Checkpoint> checkpoints) {
  cfg.validate();
  struct Visitor {
    const Model& model;
    const Dataset& train;
    std::span<const Checkpoint> checkpoints;
    std::unique_ptr<Explainer> operator()(const SimilarityConfig& c) const {
      return std::make_unique<SimilarityExplainer>(model, train, c);
    }
    std::unique_ptr<Explainer> operator()(const InfluenceConfig& c) const {
      return std::make_unique<InfluenceExplainer>(model, train, c);
    }
    std::unique_ptr<Explainer> operator()(const TracInConfig& c) const {
      return std::make_unique<TracInExplainer>(model, train, checkpoints, c);
    }
    std::unique_ptr<Explainer> operator()(const RepresenterConfig& c) const {
      return std::make_unique<RepresenterExplainer>(model, train, c);
    }
    std::unique_ptr<Explainer> operator()(const TrakConfig& c) const {
      return std::make_unique<TrakExplainer>(model, train, c);
    }
    std::unique_ptr<Explainer> operator()(const RandomConfig& c) const {
      return std::make_unique<RandomExplainer>(model, train, c);
    }
  };
  return std::visit(Visitor{model, train, checkpoints}, cfg.params);
}

AttributionMatrix explain(const ExplainerConfig& cfg, const Model& model, const Dataset& train,
                          std::span<const Checkpoint> checkpoints, const TestBatch& batch) {
  return make_explainer(cfg, model, train, checkpoints)->explain(batch);
}

Vector self_influence(const ExplainerConfig& cfg, const Model& model, const Dataset& train,
                      std::span<const Checkpoint> checkpoints) {
  return make_explainer(cfg, model, train, checkpoints)->self_influence();
}

RowMatrix gaussian_projection(std::size_t k, std::size_t dim, std::uint64_t seed) {
  require(k >= 1, ErrorCode::invalid_argument, "projection dimension must be >= 1");
  RowMatrix p(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
  CounterRng rng(derive_seed(seed, "projection"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = scale * rng.normal();
  }
  return p;
}

Vector grad_log_odds(const Model& model, VectorRef x, Label target, ParamScope scope) {
  require(target >= 0 && static_cast<std::size_t>(target) < model.arch().num_classes,
          ErrorCode::label_out_of_range, "grad_log_odds: target out of range");
  const Vector p = softmax(forward(model, x));
  const double pt = std::clamp(p[target], kProbabilityClamp, 1.0 - kProbabilityClamp);
  // d r / d f_k = (delta_{target,k} - p_k) / (1 - p_target)
  Vector dlogits = -p;
  dlogits[target] += 1.0;
  dlogits /= (1.0 - pt);
  return grad_output(model, x, dlogits, scope);
}

Matrix trak_operator(const RowMatrix& train_grads, const Vector& q) {
  const Eigen::Index n = train_grads.rows();
  const Eigen::Index dim = train_grads.cols();
  require(q.size() == n, ErrorCode::shape_mismatch, "trak: q length must equal training rows");
  Matrix solved;  // dim x n
  if (dim <= n) {
    Matrix gram = train_grads.transpose() * train_grads;
    gram.diagonal().array() += kTrakGramDamping;
    Eigen::LLT<Matrix> llt(gram);
    require(llt.info() == Eigen::Success, ErrorCode::numeric,
            "trak: gradient Gram matrix is singular after damping");
    solved = llt.solve(Matrix(train_grads.transpose()));
  } else {
    // (Phi^T Phi + eps I)^{-1} Phi^T = Phi^T (Phi Phi^T + eps I)^{-1}
    Matrix kernel = train_grads * train_grads.transpose();
    kernel.diagonal().array() += kTrakGramDamping;
    Eigen::LLT<Matrix> llt(kernel);
    require(llt.info() == Eigen::Success, ErrorCode::numeric,
            "trak: gradient kernel matrix is singular after damping");
    solved = train_grads.transpose() * llt.solve(Matrix::Identity(n, n));
  }
  return solved * q.asDiagonal();
}

RowMatrix trak_scores(const RowMatrix& train_grads, const Vector& q, const RowMatrix& test_grads) {
  require(test_grads.cols() == train_grads.cols(), ErrorCode::shape_mismatch,
          "trak: test and train gradient dimensions differ");
  return test_grads * trak_operator(train_grads, q);
}

}  // namespace tda
