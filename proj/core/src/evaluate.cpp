#include "tda/benchmark.hpp"
#include "tda/error.hpp"
#include "tda/rng.hpp"

namespace tda {

namespace {

using metrics::MetricResult;

// Training ids are positions for every bundle this library writes; map them
// anyway so assembled bundles with other ids still work.
std::vector<std::size_t> positions_of(const Dataset& train, const std::vector<std::size_t>& ids) {
  std::map<std::size_t, std::size_t> where;
  for (std::size_t i = 0; i < train.size(); ++i) where[train.ids[i]] = i;
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) {
    const auto it = where.find(id);
    require(it != where.end(), ErrorCode::invalid_argument,
            "evaluate: record id " + std::to_string(id) + " is not in the training set");
    out.push_back(it->second);
  }
  return out;
}

std::vector<Label> train_subclass(const BenchmarkBundle& b) {
  std::vector<Label> out;
  out.reserve(b.train.size());
  for (std::size_t id : b.train.ids) out.push_back(b.record.original_subclass.at(id));
  return out;
}

Evaluation finish(metrics::Metric& metric, Json params) {
  Evaluation e;
  e.result = metric.compute();
  for (auto& [k, v] : params.items()) e.result.params[k] = v;
  e.curves = metric.curves();
  return e;
}

// Shared by the live and precomputed paths: everything except producing rows.
Evaluation drive_metric(const BenchmarkBundle& b, const AttributionMatrix& a) {
  require(a.num_train() == b.train.size(), ErrorCode::shape_mismatch,
          "evaluate: attribution width does not match the bundle's training set");
  const std::size_t n = b.train.size();
  switch (b.kind) {
    case BenchmarkKind::lds: {
      metrics::LdsMetric m(b.lds->subsets);
      m.update(a, b.lds->outputs);
      return finish(m, Json::object());
    }
    case BenchmarkKind::class_detection: {
      metrics::ClassDetectionMetric m(b.train.labels);
      m.update(a, b.test.labels);
      return finish(m, Json::object());
    }
    case BenchmarkKind::subclass_detection: {
      metrics::SubclassDetectionMetric m(train_subclass(b));
      m.update(a, b.test_subclass);
      return finish(m, Json::object());
    }
    case BenchmarkKind::mislabeling: {
      require(b.metric.aggregator != "self_influence", ErrorCode::incompatible,
              "evaluate: mislabeling with the self_influence aggregator needs an explainer, "
              "not precomputed attributions");
      metrics::MislabelingMetric m(positions_of(b.train, b.record.mislabeled_idx), n,
                                   metrics::parse_aggregator(b.metric.aggregator));
      m.update(a);
      return finish(m, Json::object());
    }
    case BenchmarkKind::shortcut: {
      metrics::ShortcutDetectionMetric m(positions_of(b.train, b.record.shortcut_idx), n);
      m.update(a);
      return finish(m, Json::object());
    }
    case BenchmarkKind::mixed_datasets: {
      metrics::MixedDatasetsMetric m(positions_of(b.train, b.record.adversarial_idx), n);
      m.update(a);
      return finish(m, Json::object());
    }
    case BenchmarkKind::topk_cardinality: {
      metrics::TopKCardinalityMetric m(b.metric.top_k);
      m.update(a);
      return finish(m, Json::object());
    }
    case BenchmarkKind::model_randomization:
      fail(ErrorCode::incompatible,
           "evaluate: model_randomization needs an explainer, not precomputed attributions");
  }
  fail(ErrorCode::invalid_argument, "evaluate: unknown bundle kind");
}

std::vector<Checkpoint> randomized_trace(const BenchmarkBundle& b, const Model& randomized) {
  // TracIn reads only checkpoints, so the randomized model is presented as a
  // one-checkpoint trace at the final learning rate.
  if (b.checkpoints.empty()) return {};
  return {Checkpoint{b.checkpoints.back().epoch, b.checkpoints.back().learning_rate,
                     randomized.params()}};
}

}  // namespace

TestBatch evaluation_batch(const BenchmarkBundle& b) {
  switch (b.kind) {
    case BenchmarkKind::lds:
      return TestBatch{b.test.features, b.lds->targets};
    case BenchmarkKind::shortcut: {
      const Label cls = *b.record.shortcut_class;
      const ShortcutPatch& patch = *b.record.shortcut_patch;
      std::vector<std::size_t> keep;
      for (std::size_t t = 0; t < b.test.size(); ++t) {
        if (b.test.labels[t] == cls) continue;
        if (metrics::shortcut_triggered(b.model, b.test.x(t), patch, cls)) keep.push_back(t);
      }
      require(!keep.empty(), ErrorCode::no_evidence,
              "evaluate: no test sample triggers the shortcut (patched -> shortcut class, clean -> "
              "other)");
      return TestBatch::predicted(b.model, patch.apply_rows(b.test.select(keep).features));
    }
    case BenchmarkKind::mixed_datasets: {
      const Label adv = *b.record.adversarial_label;
      std::vector<std::size_t> keep;
      for (std::size_t t = 0; t < b.test.size(); ++t) {
        if (predict(b.model, b.test.x(t)) == adv) keep.push_back(t);
      }
      require(!keep.empty(), ErrorCode::no_evidence,
              "evaluate: the model predicts the adversarial label for no held-out adversarial sample");
      return TestBatch::predicted(b.model, b.test.select(keep).features);
    }
    default:
      return TestBatch::predicted(b.model, b.test.features);
  }
}

Evaluation evaluate(const BenchmarkBundle& b, const ExplainerConfig& cfg) {
  cfg.validate();
  const auto explainer = make_explainer(cfg, b.model, b.train, b.checkpoints);
  Json params = {{"explainer", to_json(cfg)}};

  if (b.kind == BenchmarkKind::mislabeling && b.metric.aggregator == "self_influence") {
    metrics::MislabelingMetric m(positions_of(b.train, b.record.mislabeled_idx), b.train.size());
    m.update_global(explainer->self_influence());
    Evaluation e = finish(m, params);
    e.result.params["aggregator"] = "self_influence";
    return e;
  }

  const TestBatch batch = evaluation_batch(b);
  const AttributionMatrix attributions = explainer->explain(batch);

  if (b.kind == BenchmarkKind::model_randomization) {
    const std::uint64_t seed = derive_seed(b.manifest.master_seed, "randomization");
    const Model randomized = randomize_parameters(b.model, seed, b.metric.randomization_scope);
    const auto trace = randomized_trace(b, randomized);
    const auto other = make_explainer(cfg, randomized, b.train, trace);
    metrics::ModelRandomizationMetric m;
    m.update(attributions, other->explain(batch));
    params["randomization_scope"] = to_string(b.metric.randomization_scope);
    return finish(m, params);
  }

  Evaluation e = drive_metric(b, attributions);
  for (auto& [k, v] : params.items()) e.result.params[k] = v;
  return e;
}

Evaluation evaluate_attributions(const BenchmarkBundle& b, const AttributionMatrix& a) {
  a.validate();
  const TestBatch batch = evaluation_batch(b);
  require(a.num_test() == batch.size(), ErrorCode::shape_mismatch,
          "evaluate: precomputed attributions have " + std::to_string(a.num_test()) +
              " rows, the bundle's evaluation batch has " + std::to_string(batch.size()));
  require(a.test_targets == batch.targets, ErrorCode::incompatible,
          "evaluate: precomputed attributions were explained for different targets");
  Evaluation e = drive_metric(b, a);
  e.result.params["explainer"] = {{"method", a.method_name}, {"precomputed", true}};
  return e;
}

}  // namespace tda
