#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "support.hpp"
#include "tda/attribution.hpp"
#include "tda/error.hpp"
#include "tda/serialize.hpp"

using namespace tda;
using tda::testing::random_dataset;
using tda::testing::random_model;

namespace {

struct Fixture {
  Dataset train = random_dataset(30, 3, 3, 101);
  Model model = random_model({3, {4}, 3, Activation::tanh}, 5);
  std::vector<Checkpoint> checkpoints = {
      {0, 0.1, random_model({3, {4}, 3, Activation::tanh}, 6).params()},
      {1, 0.2, random_model({3, {4}, 3, Activation::tanh}, 7).params()},
  };
};

std::vector<ExplainerConfig> every_method() {
  return {
      {SimilarityConfig{SimilarityMeasure::dot}, ""},
      {SimilarityConfig{SimilarityMeasure::cosine}, ""},
      {InfluenceConfig{}, ""},
      {InfluenceConfig{1.0, ParamScope::all, std::nullopt, kDefaultHessianCap}, ""},
      {TracInConfig{}, ""},
      {TracInConfig{ParamScope::all, 8, 3, {}}, ""},
      {RepresenterConfig{}, ""},
      {TrakConfig{}, ""},
      {TrakConfig{16, 4}, ""},
      {RandomConfig{9}, ""},
  };
}

RowMatrix rows_of(std::initializer_list<std::initializer_list<double>> rows) {
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index k = 0;
    for (double v : r) m(i, k++) = v;
    ++i;
  }
  return m;
}

Model linear_model(std::size_t d, std::size_t c, std::uint64_t seed) {
  return random_model({d, {}, c, Activation::relu}, seed);
}

}  // namespace

TEST_CASE("explain contract holds for every method") {
  Fixture f;
  const TestBatch batch = TestBatch::predicted(f.model, random_dataset(7, 3, 3, 55).features);
  for (const auto& cfg : every_method()) {
    CAPTURE(cfg.method());
    const auto ex = make_explainer(cfg, f.model, f.train, f.checkpoints);
    const AttributionMatrix a = ex->explain(batch);
    CHECK(a.num_test() == 7);
    CHECK(a.num_train() == 30);
    CHECK(a.train_ids == f.train.ids);
    CHECK(a.test_targets == batch.targets);
    CHECK(a.method_name == cfg.method());
    CHECK(ex->explain(batch) == a);
    CHECK(make_explainer(cfg, f.model, f.train, f.checkpoints)->explain(batch) == a);
    CHECK_THROWS_AS(ex->explain(TestBatch{RowMatrix(0, 3), {}}), Error);
    TestBatch bad = batch;
    bad.targets[0] = 3;
    CHECK_THROWS_AS(ex->explain(bad), Error);
    CHECK_THROWS_AS(ex->explain(TestBatch{RowMatrix::Zero(1, 2), {0}}), Error);
  }
}

TEST_CASE("self influence is the diagonal of explaining the training set") {
  Fixture f;
  const TestBatch own = TestBatch::labelled(f.train);
  for (const auto& cfg : every_method()) {
    if (cfg.method() == "random") continue;
    CAPTURE(cfg.method());
    const auto ex = make_explainer(cfg, f.model, f.train, f.checkpoints);
    const Vector diag = ex->explain(own).values.diagonal();
    const Vector self = ex->self_influence();
    CHECK((diag - self).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + self.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("explainer must match the model") {
  Fixture f;
  const Dataset wide = random_dataset(10, 4, 3, 1);
  CHECK_THROWS_AS(make_explainer({SimilarityConfig{}, ""}, f.model, wide), Error);
  CHECK_THROWS_WITH_AS(make_explainer({TracInConfig{}, ""}, f.model, f.train), doctest::Contains("checkpoint"), Error);
  TracInConfig missing;
  missing.checkpoint_epochs = {4};
  CHECK_THROWS_AS(make_explainer({missing, ""}, f.model, f.train, f.checkpoints), Error);
}

TEST_CASE("similarity") {
  const ModelArch arch{2, {}, 2, Activation::relu};
  const Model m = linear_model(2, 2, 1);
  SUBCASE("unit dot") {
    const Dataset ds = Dataset::make(rows_of({{1, 0}}), {0}, 2);
    const auto a = explain({SimilarityConfig{}, ""}, m, ds, {}, TestBatch{rows_of({{1, 0}}), {0}});
    CHECK(a.values(0, 0) == 1.0);
  }
  SUBCASE("orthogonal cosine") {
    const Dataset ds = Dataset::make(rows_of({{0, 2}}), {0}, 2);
    const auto a = explain({SimilarityConfig{SimilarityMeasure::cosine}, ""}, m, ds, {},
                           TestBatch{rows_of({{3, 0}}), {0}});
    CHECK(a.values(0, 0) == 0.0);
  }
  SUBCASE("hand Gram rows") {
    const RowMatrix xs = rows_of({{1, 2}, {-1, 0.5}, {3, -2}});
    const Dataset ds = Dataset::make(xs, {0, 1, 0}, 2);
    const auto a = explain({SimilarityConfig{}, ""}, m, ds, {}, TestBatch::labelled(ds));
    const RowMatrix gram = rows_of({{5, 0, -1}, {0, 1.25, -4}, {-1, -4, 13}});
    CHECK(a.values == gram);
  }
  SUBCASE("cosine self influence and range") {
    const Dataset ds = random_dataset(20, 2, 2, 4);
    const auto ex = make_explainer({SimilarityConfig{SimilarityMeasure::cosine}, ""}, m, ds);
    CHECK(ex->self_influence() == Vector::Ones(20));
    const auto a = ex->explain(TestBatch::labelled(random_dataset(5, 2, 2, 8)));
    CHECK(a.values.maxCoeff() <= 1.0 + 1e-15);
    CHECK(a.values.minCoeff() >= -1.0 - 1e-15);
  }
  SUBCASE("zero feature under cosine names the sample") {
    const Dataset ds = Dataset::make(rows_of({{1, 0}, {0, 0}}), {0, 1}, 2);
    CHECK_THROWS_WITH_AS(make_explainer({SimilarityConfig{SimilarityMeasure::cosine}, ""}, m, ds),
                         doctest::Contains("sample 1"), Error);
  }
  (void)arch;
}

TEST_CASE("influence functions") {
  const Model m = linear_model(3, 3, 12);
  const Dataset ds = random_dataset(25, 3, 3, 13);

  SUBCASE("rows are g_t^T (H + lambda I)^-1 g_i") {
    const InfluenceConfig cfg{0.05, ParamScope::all, std::nullopt, kDefaultHessianCap};
    const InfluenceExplainer ex(m, ds, cfg);
    const Matrix h = testing::linear_softmax_hessian(m, ds) + 0.05 * Matrix::Identity(12, 12);
    const Eigen::LLT<Matrix> llt(h);
    const Dataset test = random_dataset(4, 3, 3, 14);
    const auto a = ex.explain(TestBatch::labelled(test));
    for (std::size_t t = 0; t < 4; ++t) {
      const Vector gt = testing::linear_softmax_gradient(m, test.x(t), test.labels[t]);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const Vector gi = testing::linear_softmax_gradient(m, ds.x(i), ds.labels[i]);
        CHECK(a.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) ==
              doctest::Approx(gt.dot(llt.solve(gi))).epsilon(1e-10));
      }
    }
  }
  SUBCASE("dominant damping reduces to scaled gradient dot products") {
    const double lambda = 1e8;
    const InfluenceExplainer ex(m, ds, {lambda, ParamScope::all, std::nullopt, kDefaultHessianCap});
    const Dataset test = random_dataset(2, 3, 3, 15);
    const auto a = ex.explain(TestBatch::labelled(test));
    const Vector gt = grad_loss(m, test.x(0), test.labels[0]);
    const Vector gi = grad_loss(m, ds.x(3), ds.labels[3]);
    CHECK(a.values(0, 3) == doctest::Approx(gt.dot(gi) / lambda).epsilon(1e-6));
  }
  SUBCASE("convex model has nonnegative self influence") {
    const Vector s = InfluenceExplainer(m, ds, {}).self_influence();
    CHECK(s.minCoeff() >= 0.0);
  }
  SUBCASE("quadratic form is symmetric on training points") {
    const auto a = InfluenceExplainer(m, ds, {}).explain(TestBatch::labelled(ds));
    CHECK((a.values - a.values.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * a.values.cwiseAbs().maxCoeff());
  }
  SUBCASE("full-rank low-rank mode equals the exact inverse") {
    const InfluenceExplainer exact(m, ds, {});
    const InfluenceExplainer full(m, ds, {1e-3, ParamScope::last_layer, 12, kDefaultHessianCap});
    CHECK((exact.inverse_hessian() - full.inverse_hessian()).cwiseAbs().maxCoeff() <
          1e-8 * exact.inverse_hessian().cwiseAbs().maxCoeff());
    const InfluenceExplainer trunc(m, ds, {1e-3, ParamScope::last_layer, 3, kDefaultHessianCap});
    Eigen::SelfAdjointEigenSolver<Matrix> eig(trunc.inverse_hessian());
    std::size_t nonzero = 0;
    for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k) nonzero += std::abs(eig.eigenvalues()[k]) > 1e-9;
    CHECK(nonzero == 3);
    CHECK_THROWS_AS(InfluenceExplainer(m, ds, {1e-3, ParamScope::last_layer, 13, kDefaultHessianCap}), Error);
  }
  SUBCASE("capacity") {
    CHECK_THROWS_AS(InfluenceExplainer(m, ds, {1e-3, ParamScope::all, std::nullopt, 5}), Error);
  }
}

TEST_CASE("tracin") {
  Fixture f;
  const Dataset test = random_dataset(5, 3, 3, 77);
  const TestBatch batch = TestBatch::labelled(test);
  const TracInConfig all_params{ParamScope::all, 0, 0, {}};

  SUBCASE("one checkpoint with unit rate is a gradient dot product") {
    const std::vector<Checkpoint> one = {{0, 1.0, f.model.params()}};
    const auto a = explain({all_params, ""}, f.model, f.train, one, batch);
    for (Eigen::Index t = 0; t < 5; ++t) {
      for (Eigen::Index i = 0; i < 30; i += 7) {
        const double expect = grad_loss(f.model, test.x(static_cast<std::size_t>(t)), test.labels[static_cast<std::size_t>(t)])
                                  .dot(grad_loss(f.model, f.train.x(static_cast<std::size_t>(i)), f.train.labels[static_cast<std::size_t>(i)]));
        CHECK(a.values(t, i) == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
  SUBCASE("weighted sum of single-checkpoint attributions") {
    const auto both = explain({all_params, ""}, f.model, f.train, f.checkpoints, batch).values;
    RowMatrix expect = RowMatrix::Zero(5, 30);
    for (const auto& c : f.checkpoints) {
      const Model mt = f.model.with_params(c.params);
      for (std::size_t t = 0; t < 5; ++t) {
        for (std::size_t i = 0; i < 30; ++i) {
          expect(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) +=
              c.learning_rate * grad_loss(mt, test.x(t), test.labels[t]).dot(grad_loss(mt, f.train.x(i), f.train.labels[i]));
        }
      }
    }
    CHECK((both - expect).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + expect.cwiseAbs().maxCoeff()));
  }
  SUBCASE("a duplicated checkpoint doubles every value") {
    const std::vector<Checkpoint> one = {f.checkpoints[0]};
    const std::vector<Checkpoint> twice = {f.checkpoints[0], f.checkpoints[0]};
    const auto a = explain({TracInConfig{}, ""}, f.model, f.train, one, batch).values;
    const auto b = explain({TracInConfig{}, ""}, f.model, f.train, twice, batch).values;
    CHECK(b == 2.0 * a);
  }
  SUBCASE("selecting checkpoints by epoch") {
    TracInConfig only_first;
    only_first.checkpoint_epochs = {0};
    const std::vector<Checkpoint> one = {f.checkpoints[0]};
    CHECK(explain({only_first, ""}, f.model, f.train, f.checkpoints, batch).values ==
          explain({TracInConfig{}, ""}, f.model, f.train, one, batch).values);
  }
  SUBCASE("projection is seeded") {
    const TracInConfig proj{ParamScope::all, 8, 3, {}};
    const auto a = explain({proj, ""}, f.model, f.train, f.checkpoints, batch);
    CHECK(a == explain({proj, ""}, f.model, f.train, f.checkpoints, batch));
    const TracInConfig other{ParamScope::all, 8, 4, {}};
    CHECK_FALSE(a.values == explain({other, ""}, f.model, f.train, f.checkpoints, batch).values);
  }
}

TEST_CASE("gaussian projection") {
  const RowMatrix p = gaussian_projection(200, 50, 3);
  CHECK(p.rows() == 200);
  CHECK(p == gaussian_projection(200, 50, 3));
  // Entries have variance 1/k, so columns have unit expected squared norm.
  CHECK(p.colwise().squaredNorm().mean() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("representer points") {
  const Model m = random_model({4, {6}, 3, Activation::tanh}, 31);
  const Dataset ds = random_dataset(40, 4, 3, 32);
  const RepresenterConfig cfg{0.05, 1e-10, 200000};
  const RepresenterExplainer ex(m, ds, cfg);
  const RepresenterState& st = ex.state();

  CHECK(st.gradient_norm <= 1e-10);
  CHECK(st.reconstruction_residual().norm() / st.weights.norm() < 1e-4);

  SUBCASE("rows sum to the refit model's target logit") {
    const Dataset test = random_dataset(6, 4, 3, 33);
    const TestBatch batch = TestBatch::predicted(m, test.features);
    const auto a = ex.explain(batch);
    for (std::size_t t = 0; t < 6; ++t) {
      const Vector h = features(m, test.x(t));
      const double logit = st.weights.col(batch.targets[t]).dot(h);
      CHECK(std::abs(a.values.row(static_cast<Eigen::Index>(t)).sum() - logit) < 1e-6);
    }
  }
  SUBCASE("bilinear in the test features") {
    const Model lin = linear_model(3, 2, 40);
    const Dataset lds = random_dataset(20, 3, 2, 41);
    const RepresenterExplainer lex(lin, lds, cfg);
    RowMatrix x = rows_of({{0.5, -1.0, 2.0}});
    const auto a = lex.explain(TestBatch{x, {1}});
    const auto b = lex.explain(TestBatch{3.0 * x, {1}});
    CHECK((b.values - 3.0 * a.values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("orthogonal test features give a zero row") {
    const Model lin = linear_model(3, 2, 40);
    const Dataset flat = Dataset::make(rows_of({{1, 0, 0}, {2, 1, 0}, {-1, 3, 0}}), {0, 1, 0}, 2);
    const auto a = RepresenterExplainer(lin, flat, cfg).explain(TestBatch{rows_of({{0, 0, 5}}), {0}});
    CHECK(a.values.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("single training point gives a rank-one layer along h") {
    const Model lin = linear_model(3, 3, 40);
    const Dataset one = Dataset::make(rows_of({{1, -2, 0.5}}), {1}, 3);
    const RepresenterExplainer oex(lin, one, cfg);
    const Vector h = one.x(0);
    for (Eigen::Index c = 0; c < 3; ++c) {
      const Vector col = oex.state().weights.col(c);
      CHECK((col - h * (h.dot(col) / h.squaredNorm())).norm() < 1e-8);
    }
  }
  SUBCASE("iteration budget") {
    CHECK_THROWS_AS(RepresenterExplainer(m, ds, {0.05, 1e-14, 3}), Error);
  }
}

TEST_CASE("trak") {
  SUBCASE("orthonormal gradient columns reduce to scaled inner products") {
    // Phi is n x dim with orthonormal columns, so Phi^T Phi = I.
    const Matrix q_full = Eigen::HouseholderQR<Matrix>(testing::random_dataset(6, 3, 2, 3).features).householderQ();
    const RowMatrix phi = q_full.leftCols(3);
    Vector q(6);
    q << 0.9, 0.1, 0.5, 0.7, 0.3, 0.2;
    const RowMatrix test = rows_of({{1, 2, -1}});
    const RowMatrix s = trak_scores(phi, q, test);
    for (Eigen::Index i = 0; i < 6; ++i) {
      CHECK(s(0, i) == doctest::Approx(test.row(0).dot(phi.row(i)) * q[i]).epsilon(1e-6));
    }
  }
  SUBCASE("wide gradients use the sample-space solve") {
    const RowMatrix phi = testing::random_dataset(5, 12, 2, 9).features;
    const Vector q = Vector::Constant(5, 0.5);
    const RowMatrix test = testing::random_dataset(2, 12, 2, 10).features;
    const Matrix gram = Matrix(phi.transpose() * phi) + kTrakGramDamping * Matrix::Identity(12, 12);
    const Matrix expect = test * gram.ldlt().solve(Matrix(phi.transpose())) * q.asDiagonal();
    CHECK((trak_scores(phi, q, test) - expect).cwiseAbs().maxCoeff() < 1e-6 * expect.cwiseAbs().maxCoeff());
  }
  SUBCASE("a perfectly fit sample contributes nothing") {
    const RowMatrix phi = testing::random_dataset(8, 3, 2, 11).features;
    Vector q = Vector::Constant(8, 0.4);
    q[2] = 0.0;
    const RowMatrix s = trak_scores(phi, q, rows_of({{1, 1, 1}}));
    CHECK(s(0, 2) == 0.0);
  }
  SUBCASE("log-odds gradient matches finite differences") {
    const Model m = random_model({3, {4}, 3, Activation::tanh}, 3);
    const Vector x = Vector::LinSpaced(3, -1.0, 1.0);
    const Vector g = grad_log_odds(m, x, 2);
    auto r = [&](const Vector& theta) {
      const Vector p = testing::softmax_of(testing::manual_forward(m.with_params(theta), x).logits);
      return std::log(p[2] / (1.0 - p[2]));
    };
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      Vector a = m.params(), b = m.params();
      a[k] += 1e-6;
      b[k] -= 1e-6;
      CHECK(g[k] == doctest::Approx((r(a) - r(b)) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("random baseline") {
  Fixture f;
  const TestBatch batch = TestBatch::predicted(f.model, random_dataset(50, 3, 3, 1).features);
  const auto a = explain({RandomConfig{1}, ""}, f.model, f.train, {}, batch);
  CHECK(a == explain({RandomConfig{1}, ""}, f.model, f.train, {}, batch));
  CHECK_FALSE(a.values == explain({RandomConfig{2}, ""}, f.model, f.train, {}, batch).values);
  const Dataset big = random_dataset(2000, 3, 3, 2);
  const auto wide = explain({RandomConfig{3}, ""}, f.model, big, {}, batch);
  CHECK(std::abs(wide.values.mean()) < 0.02);
}

TEST_CASE("explainer config serialization") {
  for (const auto& cfg : every_method()) {
    const Json j = to_json(cfg);
    CHECK(j.at("method") == cfg.method());
    CHECK(to_json(explainer_config_from_json(j)) == j);
  }
  CHECK_THROWS_WITH_AS(explainer_config_from_json({{"method", "magic"}}), doctest::Contains("method"), Error);
  CHECK_THROWS_WITH_AS(explainer_config_from_json({{"method", "influence"}, {"params", {{"dampnig", 1}}}}),
                       doctest::Contains("dampnig"), Error);
  CHECK_THROWS_AS(explainer_config_from_json({{"method", "influence"}, {"params", {{"damping", -1}}}}), Error);
  const ExplainerConfig seeded = ExplainerConfig{TrakConfig{4, 1}, ""}.with_seed(9);
  CHECK(std::get<TrakConfig>(seeded.params).seed == 9);
  CHECK_FALSE(ExplainerConfig{SimilarityConfig{}, ""}.uses_seed());
}
