// Independent oracles shared by the unit and acceptance tests. Nothing here
// calls the library's derivative code.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Cholesky>

#include "tda/data.hpp"
#include "tda/nn.hpp"
#include "tda/rng.hpp"

namespace tda::testing {

inline Vector random_vector(std::size_t n, CounterRng& rng, double scale = 1.0) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
  return v;
}

inline Model random_model(const ModelArch& arch, std::uint64_t seed, double scale = 0.7) {
  CounterRng rng(seed);
  return Model(arch, random_vector(parameter_count(arch), rng, scale));
}

inline Dataset random_dataset(std::size_t n, std::size_t d, int classes, std::uint64_t seed) {
  CounterRng rng(seed);
  RowMatrix xs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<Label> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) xs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rng.normal();
    ys[i] = static_cast<Label>(rng.below(static_cast<std::uint64_t>(classes)));
  }
  return Dataset::make(std::move(xs), std::move(ys), classes);
}

// Plain forward evaluation straight from the layer layout.
struct ManualForward {
  std::vector<Vector> pre;  // hidden pre-activations
  Vector logits;
};

inline ManualForward manual_forward(const Model& m, const Vector& x) {
  const auto layers = unpack(m.arch(), m.params());
  ManualForward out;
  Vector h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Vector z = layers[l].weights.transpose() * h + layers[l].bias;
    if (l + 1 == layers.size()) {
      out.logits = z;
    } else {
      out.pre.push_back(z);
      h = m.arch().activation == Activation::relu ? Vector(z.cwiseMax(0.0)) : Vector(z.array().tanh());
    }
  }
  return out;
}

inline double manual_loss(const Model& m, const Vector& x, Label y) {
  const Vector f = manual_forward(m, x).logits;
  const double mx = f.maxCoeff();
  return mx + std::log((f.array() - mx).exp().sum()) - f[y];
}

// Smallest |pre-activation|: finite differences are unreliable near ReLU kinks.
inline double kink_distance(const Model& m, const Vector& x) {
  double best = INFINITY;
  for (const auto& z : manual_forward(m, x).pre) best = std::min(best, z.cwiseAbs().minCoeff());
  return best;
}

inline Vector fd_gradient(const Model& m, const Vector& x, Label y, double step = 1e-5) {
  Vector g(m.params().size());
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    Vector plus = m.params(), minus = m.params();
    plus[k] += step;
    minus[k] -= step;
    g[k] = (manual_loss(m.with_params(plus), x, y) - manual_loss(m.with_params(minus), x, y)) /
           (2.0 * step);
  }
  return g;
}

inline Vector mean_gradient(const Model& m, const Dataset& ds, ParamScope scope) {
  Vector g;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Vector gi = grad_loss(m, ds.x(i), ds.labels[i], scope);
    g = i == 0 ? gi : Vector(g + gi);
  }
  return g / static_cast<double>(ds.size());
}

// Central differences of the mean analytic gradient.
inline Matrix fd_hessian(const Model& m, const Dataset& ds, ParamScope scope, double step = 1e-5) {
  const ParamRange r = scope_range(m.arch(), scope);
  Matrix h(static_cast<Eigen::Index>(r.length), static_cast<Eigen::Index>(r.length));
  for (std::size_t k = 0; k < r.length; ++k) {
    Vector plus = m.params(), minus = m.params();
    plus[static_cast<Eigen::Index>(r.offset + k)] += step;
    minus[static_cast<Eigen::Index>(r.offset + k)] -= step;
    h.col(static_cast<Eigen::Index>(k)) =
        (mean_gradient(m.with_params(plus), ds, scope) - mean_gradient(m.with_params(minus), ds, scope)) /
        (2.0 * step);
  }
  return h;
}

inline Vector softmax_of(const Vector& f) {
  const Vector e = (f.array() - f.maxCoeff()).exp();
  return e / e.sum();
}

// Linear softmax model, theta = [W (d x C, row-major), b]: closed-form
// gradient (p - onehot(y)) (x) [x; 1].
inline Vector linear_softmax_gradient(const Model& m, const Vector& x, Label y) {
  const std::size_t d = m.arch().input_dim, c = m.arch().num_classes;
  Vector r = softmax_of(manual_forward(m, x).logits);
  r[y] -= 1.0;
  Vector g(static_cast<Eigen::Index>((d + 1) * c));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < c; ++k) g[static_cast<Eigen::Index>(i * c + k)] = x[static_cast<Eigen::Index>(i)] * r[static_cast<Eigen::Index>(k)];
  }
  for (std::size_t k = 0; k < c; ++k) g[static_cast<Eigen::Index>(d * c + k)] = r[static_cast<Eigen::Index>(k)];
  return g;
}

// Closed-form mean Hessian of the linear softmax model:
// (1/n) sum_i [x;1][x;1]^T (x) (diag(p) - p p^T), in the same layout.
inline Matrix linear_softmax_hessian(const Model& m, const Dataset& ds) {
  const std::size_t d = m.arch().input_dim, c = m.arch().num_classes;
  const auto dim = static_cast<Eigen::Index>((d + 1) * c);
  Matrix h = Matrix::Zero(dim, dim);
  auto idx = [&](std::size_t i, std::size_t k) {
    return static_cast<Eigen::Index>(i < d ? i * c + k : d * c + k);
  };
  for (std::size_t s = 0; s < ds.size(); ++s) {
    Vector xa(static_cast<Eigen::Index>(d + 1));
    xa.head(static_cast<Eigen::Index>(d)) = ds.x(s);
    xa[static_cast<Eigen::Index>(d)] = 1.0;
    const Vector p = softmax_of(manual_forward(m, ds.x(s)).logits);
    const Matrix s_mat = Matrix(p.asDiagonal()) - p * p.transpose();
    for (std::size_t i = 0; i <= d; ++i) {
      for (std::size_t j = 0; j <= d; ++j) {
        for (std::size_t k = 0; k < c; ++k) {
          for (std::size_t l = 0; l < c; ++l) {
            h(idx(i, k), idx(j, l)) += xa[static_cast<Eigen::Index>(i)] * xa[static_cast<Eigen::Index>(j)] *
                                      s_mat(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
          }
        }
      }
    }
  }
  return h / static_cast<double>(ds.size());
}

// Newton's method on (1/n) sum_{i in keep} CE(z_i) + (l2/2)|theta|^2 for a
// linear softmax model, using the closed-form derivatives above. Runs until
// the gradient norm falls below tol.
inline Model newton_fit(const ModelArch& arch, const Dataset& ds, const std::vector<bool>& keep,
                        std::size_t normalizer, double l2, double tol = 1e-10) {
  Model m(arch, Vector::Zero(static_cast<Eigen::Index>(parameter_count(arch))));
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (keep[i]) rows.push_back(i);
  }
  const Dataset kept = ds.select(rows);
  for (int it = 0; it < 100; ++it) {
    Vector g = l2 * m.params();
    for (std::size_t i = 0; i < kept.size(); ++i) {
      g += linear_softmax_gradient(m, kept.x(i), kept.labels[i]) / static_cast<double>(normalizer);
    }
    if (g.norm() < tol) break;
    Matrix h = linear_softmax_hessian(m, kept) * (static_cast<double>(kept.size()) / static_cast<double>(normalizer));
    h.diagonal().array() += l2;
    m = m.with_params(m.params() - h.llt().solve(g));
  }
  return m;
}

}  // namespace tda::testing
