#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "tda/attribution.hpp"
#include "tda/error.hpp"
#include "tda/rng.hpp"

namespace tda {

namespace {

RowMatrix feature_matrix(const Model& model, const RowMatrix& xs) {
  RowMatrix out(xs.rows(), static_cast<Eigen::Index>(model.arch().feature_dim()));
  for (Eigen::Index i = 0; i < xs.rows(); ++i) out.row(i) = features(model, xs.row(i).transpose());
  return out;
}

RowMatrix loss_gradients(const Model& model, const Dataset& ds, ParamScope scope) {
  const ParamRange r = scope_range(model.arch(), scope);
  RowMatrix out(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(r.length));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = grad_loss(model, ds.x(i), ds.labels[i], scope);
  }
  return out;
}

RowMatrix loss_gradients(const Model& model, const TestBatch& batch, ParamScope scope) {
  const ParamRange r = scope_range(model.arch(), scope);
  RowMatrix out(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(r.length));
  for (std::size_t t = 0; t < batch.size(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) = grad_loss(model, batch.x(t), batch.targets[t], scope);
  }
  return out;
}

}  // namespace

// Similarity ----------------------------------------------------------------------

SimilarityExplainer::SimilarityExplainer(const Model& model, const Dataset& train,
                                         SimilarityConfig cfg)
    : Explainer(model, train), cfg_(cfg), train_features_(feature_matrix(model_, train_.features)) {
  if (cfg_.measure == SimilarityMeasure::cosine) {
    for (Eigen::Index i = 0; i < train_features_.rows(); ++i) {
      const double norm = train_features_.row(i).norm();
      require(norm > 0.0, ErrorCode::numeric,
              "similarity: training sample " + std::to_string(train_.ids[static_cast<std::size_t>(i)]) +
                  " has a zero feature vector; cosine is undefined");
      train_features_.row(i) /= norm;
    }
  }
}

RowMatrix SimilarityExplainer::explain_rows(const TestBatch& batch) const {
  RowMatrix test = feature_matrix(model_, batch.features);
  if (cfg_.measure == SimilarityMeasure::cosine) {
    for (Eigen::Index t = 0; t < test.rows(); ++t) {
      const double norm = test.row(t).norm();
      require(norm > 0.0, ErrorCode::numeric,
              "similarity: test sample " + std::to_string(t) +
                  " has a zero feature vector; cosine is undefined");
      test.row(t) /= norm;
    }
  }
  return test * train_features_.transpose();
}

Vector SimilarityExplainer::self_influence() const {
  if (cfg_.measure == SimilarityMeasure::cosine) {
    return Vector::Ones(static_cast<Eigen::Index>(train_.size()));
  }
  return train_features_.rowwise().squaredNorm();
}

// Influence functions -------------------------------------------------------------------

InfluenceExplainer::InfluenceExplainer(const Model& model, const Dataset& train,
                                       InfluenceConfig cfg)
    : Explainer(model, train), cfg_(cfg) {
  require(cfg_.damping > 0.0, ErrorCode::invalid_argument, "influence: damping must be > 0");
  const Matrix hess = hessian_risk(model_, train_, cfg_.damping, cfg_.scope, cfg_.max_hessian_dim);
  const Eigen::Index dim = hess.rows();
  if (!cfg_.low_rank) {
    Eigen::LLT<Matrix> llt(hess);
    require(llt.info() == Eigen::Success, ErrorCode::numeric,
            "influence: damped Hessian is not positive definite; increase damping");
    inverse_ = llt.solve(Matrix::Identity(dim, dim));
    inverse_ = 0.5 * (inverse_ + inverse_.transpose());
  } else {
    const auto rank = static_cast<Eigen::Index>(*cfg_.low_rank);
    require(rank <= dim, ErrorCode::invalid_argument,
            "influence: rank " + std::to_string(rank) + " exceeds parameter scope " +
                std::to_string(dim));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(hess);
    require(eig.info() == Eigen::Success, ErrorCode::numeric,
            "influence: eigendecomposition failed");
    // Eigenvalues come back ascending; keep the top `rank`.
    const Vector values = eig.eigenvalues().tail(rank);
    const Matrix vectors = eig.eigenvectors().rightCols(rank);
    require(values.minCoeff() > 0.0, ErrorCode::numeric,
            "influence: retained eigenvalues are not positive; increase damping");
    inverse_ = vectors * values.cwiseInverse().asDiagonal() * vectors.transpose();
  }
  train_grads_ = loss_gradients(model_, train_, cfg_.scope);
  solved_ = inverse_ * train_grads_.transpose();
}

RowMatrix InfluenceExplainer::explain_rows(const TestBatch& batch) const {
  return loss_gradients(model_, batch, cfg_.scope) * solved_;
}

Vector InfluenceExplainer::self_influence() const {
  return (train_grads_.array() * solved_.transpose().array()).rowwise().sum();
}

// TracIn --------------------------------------------------------------------------------

TracInExplainer::TracInExplainer(const Model& model, const Dataset& train,
                                 std::span<const Checkpoint> checkpoints, TracInConfig cfg)
    : Explainer(model, train), cfg_(std::move(cfg)) {
  require(!checkpoints.empty(), ErrorCode::incompatible,
          "tracin: at least one checkpoint is required");
  std::vector<const Checkpoint*> chosen;
  if (cfg_.checkpoint_epochs.empty()) {
    for (const Checkpoint& c : checkpoints) chosen.push_back(&c);
  } else {
    for (int epoch : cfg_.checkpoint_epochs) {
      auto it = std::find_if(checkpoints.begin(), checkpoints.end(),
                             [&](const Checkpoint& c) { return c.epoch == epoch; });
      require(it != checkpoints.end(), ErrorCode::incompatible,
              "tracin: no checkpoint for epoch " + std::to_string(epoch));
      chosen.push_back(&*it);
    }
  }
  const ParamRange range = scope_range(model_.arch(), cfg_.scope);
  if (cfg_.projection_dim > 0) {
    projection_ = gaussian_projection(cfg_.projection_dim, range.length, cfg_.seed);
  }
  for (const Checkpoint* c : chosen) {
    require(static_cast<std::size_t>(c->params.size()) == model_.num_params(),
            ErrorCode::incompatible,
            "tracin: checkpoint for epoch " + std::to_string(c->epoch) +
                " does not match the model architecture");
    require(c->learning_rate > 0.0, ErrorCode::invalid_argument,
            "tracin: checkpoint learning rate must be positive");
    Term term{c->learning_rate, model_.with_params(c->params), {}};
    RowMatrix grads = loss_gradients(term.model, train_, cfg_.scope);
    term.train_grads = projection_ ? RowMatrix(grads * projection_->transpose()) : std::move(grads);
    terms_.push_back(std::move(term));
  }
}

Vector TracInExplainer::project(const Vector& g) const {
  return projection_ ? Vector(*projection_ * g) : g;
}

RowMatrix TracInExplainer::explain_rows(const TestBatch& batch) const {
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(batch.size()),
                                  static_cast<Eigen::Index>(train_.size()));
  for (const Term& term : terms_) {
    for (std::size_t t = 0; t < batch.size(); ++t) {
      const Vector g = project(grad_loss(term.model, batch.x(t), batch.targets[t], cfg_.scope));
      out.row(static_cast<Eigen::Index>(t)) += term.learning_rate * (term.train_grads * g).transpose();
    }
  }
  return out;
}

Vector TracInExplainer::self_influence() const {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(train_.size()));
  for (const Term& term : terms_) out += term.learning_rate * term.train_grads.rowwise().squaredNorm();
  return out;
}

// Representer points --------------------------------------------------------------------

namespace {

struct RepresenterObjective {
  const RowMatrix& h;  // n x p
  const std::vector<Label>& labels;
  double lambda;

  // Returns the objective and writes its gradient and dL/df per sample.
  double operator()(const Matrix& w, Matrix& grad, RowMatrix* dlogits) const {
    const Eigen::Index n = h.rows();
    const RowMatrix logits = h * w;  // n x C
    RowMatrix d(logits.rows(), logits.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector z = logits.row(i).transpose();
      const double m = z.maxCoeff();
      const Vector e = (z.array() - m).exp();
      const double s = e.sum();
      const auto y = labels[static_cast<std::size_t>(i)];
      total += m + std::log(s) - z[y];
      d.row(i) = (e / s).transpose();
      d(i, y) -= 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    grad = inv_n * (h.transpose() * d) + 2.0 * lambda * w;
    if (dlogits) *dlogits = std::move(d);
    return inv_n * total + lambda * w.squaredNorm();
  }
};

}  // namespace

Matrix RepresenterState::reconstruction_residual() const {
  return weights - features.transpose() * alphas;
}

RepresenterState representer_fit(const Model& model, const Dataset& train,
                                 const RepresenterConfig& cfg) {
  require(cfg.l2_strength > 0.0, ErrorCode::invalid_argument,
          "representer: l2_strength must be > 0");
  train.validate();
  RepresenterState state;
  state.l2_strength = cfg.l2_strength;
  state.features = feature_matrix(model, train.features);
  state.weights = unpack(model.arch(), model.params()).back().weights;

  const RepresenterObjective objective{state.features, train.labels, cfg.l2_strength};
  constexpr double kArmijo = 1e-4;
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  Matrix grad, next_grad;
  double value = objective(state.weights, grad, nullptr);
  double step = 1.0;
  std::size_t it = 0;
  for (; it < cfg.max_iterations; ++it) {
    const double gnorm2 = grad.squaredNorm();
    if (std::sqrt(gnorm2) <= cfg.tolerance) break;
    double t = step;
    Matrix candidate;
    double next_value = 0.0;
    for (;;) {
      candidate = state.weights - t * grad;
      next_value = objective(candidate, next_grad, nullptr);
      // Slack of a few ulps of |f| keeps the test meaningful once the decrease
      // drops below rounding.
      if (next_value <= value - kArmijo * t * gnorm2 + 4.0 * kEps * std::abs(value)) break;
      t *= 0.5;
      require(t > 1e-300, ErrorCode::not_converged,
              "representer: line search failed at gradient norm " + std::to_string(std::sqrt(gnorm2)));
    }
    // Barzilai-Borwein guess for the next trial step.
    const Matrix s = candidate - state.weights;
    const Matrix yv = next_grad - grad;
    const double sy = (s.array() * yv.array()).sum();
    step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-12, 1e12) : 2.0 * t;
    state.weights = std::move(candidate);
    grad = next_grad;
    value = next_value;
  }
  state.iterations = it;
  state.gradient_norm = grad.norm();
  require(state.gradient_norm <= cfg.tolerance, ErrorCode::not_converged,
          "representer: no convergence after " + std::to_string(cfg.max_iterations) +
              " iterations; gradient norm " + std::to_string(state.gradient_norm));

  RowMatrix dlogits;
  objective(state.weights, grad, &dlogits);
  const double n = static_cast<double>(train.size());
  state.alphas = (-1.0 / (2.0 * cfg.l2_strength * n)) * dlogits;
  return state;
}

RepresenterExplainer::RepresenterExplainer(const Model& model, const Dataset& train,
                                           RepresenterConfig cfg)
    : Explainer(model, train), state_(representer_fit(model_, train_, cfg)) {}

RowMatrix RepresenterExplainer::explain_rows(const TestBatch& batch) const {
  const RowMatrix test = feature_matrix(model_, batch.features);
  RowMatrix kernel = test * state_.features.transpose();  // T x n
  for (std::size_t t = 0; t < batch.size(); ++t) {
    kernel.row(static_cast<Eigen::Index>(t)).array() *=
        state_.alphas.col(batch.targets[t]).transpose().array();
  }
  return kernel;
}

Vector RepresenterExplainer::self_influence() const {
  Vector out(static_cast<Eigen::Index>(train_.size()));
  for (std::size_t i = 0; i < train_.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out[r] = state_.alphas(r, train_.labels[i]) * state_.features.row(r).squaredNorm();
  }
  return out;
}

// TRAK ----------------------------------------------------------------------------------

TrakExplainer::TrakExplainer(const Model& model, const Dataset& train, TrakConfig cfg)
    : Explainer(model, train), cfg_(cfg) {
  const std::size_t dim = model_.num_params();
  if (cfg_.projection_dim > 0) {
    require(cfg_.projection_dim <= dim, ErrorCode::invalid_argument,
            "trak: projection_dim exceeds the parameter count");
    projection_ = gaussian_projection(cfg_.projection_dim, dim, cfg_.seed);
  }
  const auto n = static_cast<Eigen::Index>(train_.size());
  train_grads_.resize(n, static_cast<Eigen::Index>(projection_ ? cfg_.projection_dim : dim));
  Vector q(n);
  for (std::size_t i = 0; i < train_.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    train_grads_.row(r) = project(grad_log_odds(model_, train_.x(i), train_.labels[i])).transpose();
    const double p = softmax(forward(model_, train_.x(i)))[train_.labels[i]];
    q[r] = 1.0 - std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  }
  solved_ = trak_operator(train_grads_, q);
}

Vector TrakExplainer::project(const Vector& g) const {
  return projection_ ? Vector(*projection_ * g) : g;
}

RowMatrix TrakExplainer::explain_rows(const TestBatch& batch) const {
  RowMatrix test(static_cast<Eigen::Index>(batch.size()), train_grads_.cols());
  for (std::size_t t = 0; t < batch.size(); ++t) {
    test.row(static_cast<Eigen::Index>(t)) =
        project(grad_log_odds(model_, batch.x(t), batch.targets[t])).transpose();
  }
  return test * solved_;
}

Vector TrakExplainer::self_influence() const {
  return (train_grads_.array() * solved_.transpose().array()).rowwise().sum();
}

// Random baseline -----------------------------------------------------------------------

RandomExplainer::RandomExplainer(const Model& model, const Dataset& train, RandomConfig cfg)
    : Explainer(model, train), cfg_(cfg) {}

RowMatrix RandomExplainer::explain_rows(const TestBatch& batch) const {
  RowMatrix out(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(train_.size()));
  for (Eigen::Index t = 0; t < out.rows(); ++t) {
    CounterRng rng(derive_seed(cfg_.seed, "random.row", static_cast<std::uint64_t>(t)));
    for (Eigen::Index i = 0; i < out.cols(); ++i) out(t, i) = rng.normal();
  }
  return out;
}

Vector RandomExplainer::self_influence() const {
  Vector out(static_cast<Eigen::Index>(train_.size()));
  CounterRng rng(derive_seed(cfg_.seed, "random.self"));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = rng.normal();
  return out;
}

}  // namespace tda
