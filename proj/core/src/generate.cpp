#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "tda/benchmark.hpp"
#include "tda/error.hpp"
#include "tda/rng.hpp"

namespace tda {

namespace {

std::size_t held_out_count(std::size_t n, double test_fraction) {
  const auto k = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * test_fraction / (1.0 - test_fraction)));
  return std::max<std::size_t>(k, 1);
}

// Unit-variance Gaussian cloud around -class_sep * 1/sqrt(d), away from every
// blob class mean.
RowMatrix adversarial_cloud(std::size_t count, std::size_t dim, double class_sep,
                            std::uint64_t seed) {
  CounterRng rng(seed);
  const double centre = -class_sep / std::sqrt(static_cast<double>(dim));
  RowMatrix xs(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    for (Eigen::Index k = 0; k < xs.cols(); ++k) xs(i, k) = centre + rng.normal();
  }
  return xs;
}

Dataset renumbered(const Dataset& ds) { return Dataset::make(ds.features, ds.labels, ds.num_classes); }

template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < count; j = next++) {
      try {
        fn(j);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

double log_odds(const Model& model, VectorRef x, Label target) {
  const Vector p = softmax(forward(model, x));
  const double pt = std::clamp(p[target], kProbabilityClamp, 1.0 - kProbabilityClamp);
  return std::log(pt) - std::log1p(-pt);
}

// Config -------------------------------------------------------------------------------

void GenerateConfig::validate() const {
  const std::string where = std::string("generate[") + to_string(kind) + "]";
  require(data.dim >= 1, ErrorCode::invalid_argument, "data.dim must be >= 1");
  require(data.num_classes >= 2, ErrorCode::invalid_argument, "data.num_classes must be >= 2");
  require(data.n >= static_cast<std::size_t>(2 * data.num_classes), ErrorCode::invalid_argument,
          "data.n must be at least twice num_classes");
  require(data.class_sep > 0.0, ErrorCode::invalid_argument, "data.class_sep must be > 0");
  require(data.subclusters_per_class >= 1, ErrorCode::invalid_argument,
          "data.subclusters_per_class must be >= 1");
  require(data.test_fraction > 0.0 && data.test_fraction < 1.0, ErrorCode::invalid_argument,
          "data.test_fraction must lie in (0, 1)");
  train.validate();
  switch (kind) {
    case BenchmarkKind::mislabeling:
      require(corruption.fraction > 0.0 && corruption.fraction < 1.0, ErrorCode::invalid_argument,
              "corruption.fraction must lie in (0, 1)");
      require(metric.aggregator == "self_influence" || metric.aggregator == "sum" ||
                  metric.aggregator == "sum_abs",
              ErrorCode::invalid_argument,
              "metric.aggregator: expected self_influence, sum or sum_abs");
      break;
    case BenchmarkKind::shortcut:
      require(corruption.fraction > 0.0 && corruption.fraction <= 1.0, ErrorCode::invalid_argument,
              "corruption.fraction must lie in (0, 1]");
      require(corruption.shortcut_class >= 0 && corruption.shortcut_class < data.num_classes,
              ErrorCode::label_out_of_range, "corruption.shortcut_class out of range");
      for (std::size_t c : corruption.patch_coords) {
        require(c < data.dim, ErrorCode::invalid_argument, "corruption.patch_coords out of range");
      }
      break;
    case BenchmarkKind::subclass_detection:
      require(corruption.num_groups >= 2 && corruption.num_groups < data.num_classes,
              ErrorCode::invalid_argument, "corruption.num_groups must lie in [2, num_classes)");
      break;
    case BenchmarkKind::mixed_datasets:
      require(corruption.mix_ratio >= 10, ErrorCode::invalid_argument,
              "corruption.mix_ratio must be >= 10");
      require(data.n / corruption.mix_ratio >= 1, ErrorCode::invalid_argument,
              "corruption.mix_ratio leaves no adversarial samples");
      require(corruption.adversarial_label >= 0 && corruption.adversarial_label < data.num_classes,
              ErrorCode::label_out_of_range, "corruption.adversarial_label out of range");
      break;
    case BenchmarkKind::lds:
      require(lds.num_subsets >= 3, ErrorCode::invalid_argument, "lds.num_subsets must be >= 3");
      require(lds.fraction > 0.0 && lds.fraction < 1.0, ErrorCode::invalid_argument,
              "lds.fraction must lie in (0, 1)");
      break;
    case BenchmarkKind::topk_cardinality:
      require(metric.top_k >= 1 && metric.top_k <= data.n, ErrorCode::invalid_argument,
              "metric.top_k must lie in [1, n]");
      break;
    default:
      break;
  }
}

Json to_json(const GenerateConfig& c) {
  Json train = to_json(c.train);
  train.erase("seed");
  return {
      {"kind", to_string(c.kind)},
      {"seed", c.seed},
      {"data",
       {{"n", c.data.n},
        {"dim", c.data.dim},
        {"num_classes", c.data.num_classes},
        {"class_sep", c.data.class_sep},
        {"subclusters_per_class", c.data.subclusters_per_class},
        {"test_fraction", c.data.test_fraction}}},
      {"model", {{"hidden_dims", c.hidden_dims}, {"activation", to_string(c.activation)}}},
      {"train", train},
      {"corruption",
       {{"fraction", c.corruption.fraction},
        {"shortcut_class", c.corruption.shortcut_class},
        {"patch_coords", c.corruption.patch_coords},
        {"patch_magnitude", c.corruption.patch_magnitude},
        {"num_groups", c.corruption.num_groups},
        {"mix_ratio", c.corruption.mix_ratio},
        {"adversarial_label", c.corruption.adversarial_label}}},
      {"lds", {{"num_subsets", c.lds.num_subsets}, {"fraction", c.lds.fraction}}},
      {"metric",
       {{"aggregator", c.metric.aggregator},
        {"top_k", c.metric.top_k},
        {"randomization_scope", to_string(c.metric.randomization_scope)}}},
      {"threads", c.threads}};
}

namespace {

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  require(j.is_object(), ErrorCode::invalid_argument, where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
    require(ok, ErrorCode::invalid_argument, where + "." + key + ": unknown field");
  }
}

template <class T>
void read(const Json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_argument, where + "." + key + ": " + e.what());
  }
}

}  // namespace

GenerateConfig generate_config_from_json(const Json& j) {
  reject_unknown(j, {"kind", "seed", "data", "model", "train", "corruption", "lds", "metric", "threads"},
                 "config");
  GenerateConfig c;
  require(j.contains("kind"), ErrorCode::invalid_argument, "config.kind: missing field");
  std::string kind;
  read(j, "kind", "config", kind);
  c.kind = parse_kind(kind);
  read(j, "seed", "config", c.seed);
  read(j, "threads", "config", c.threads);

  if (j.contains("data")) {
    const Json& d = j["data"];
    reject_unknown(d, {"n", "dim", "num_classes", "class_sep", "subclusters_per_class", "test_fraction"},
                   "data");
    read(d, "n", "data", c.data.n);
    read(d, "dim", "data", c.data.dim);
    read(d, "num_classes", "data", c.data.num_classes);
    read(d, "class_sep", "data", c.data.class_sep);
    read(d, "subclusters_per_class", "data", c.data.subclusters_per_class);
    read(d, "test_fraction", "data", c.data.test_fraction);
  }
  if (j.contains("model")) {
    const Json& m = j["model"];
    reject_unknown(m, {"hidden_dims", "activation"}, "model");
    read(m, "hidden_dims", "model", c.hidden_dims);
    std::string act = to_string(c.activation);
    read(m, "activation", "model", act);
    c.activation = parse_activation(act);
  }
  require(j.contains("train"), ErrorCode::invalid_argument, "config.train: missing field");
  c.train = train_config_from_json(j["train"]);
  if (j.contains("corruption")) {
    const Json& k = j["corruption"];
    reject_unknown(k, {"fraction", "shortcut_class", "patch_coords", "patch_magnitude", "num_groups",
                       "mix_ratio", "adversarial_label"},
                   "corruption");
    read(k, "fraction", "corruption", c.corruption.fraction);
    read(k, "shortcut_class", "corruption", c.corruption.shortcut_class);
    read(k, "patch_coords", "corruption", c.corruption.patch_coords);
    read(k, "patch_magnitude", "corruption", c.corruption.patch_magnitude);
    read(k, "num_groups", "corruption", c.corruption.num_groups);
    read(k, "mix_ratio", "corruption", c.corruption.mix_ratio);
    read(k, "adversarial_label", "corruption", c.corruption.adversarial_label);
  }
  if (j.contains("lds")) {
    const Json& l = j["lds"];
    reject_unknown(l, {"num_subsets", "fraction"}, "lds");
    read(l, "num_subsets", "lds", c.lds.num_subsets);
    read(l, "fraction", "lds", c.lds.fraction);
  }
  if (j.contains("metric")) {
    const Json& m = j["metric"];
    reject_unknown(m, {"aggregator", "top_k", "randomization_scope"}, "metric");
    read(m, "aggregator", "metric", c.metric.aggregator);
    read(m, "top_k", "metric", c.metric.top_k);
    std::string scope = to_string(c.metric.randomization_scope);
    read(m, "randomization_scope", "metric", scope);
    c.metric.randomization_scope = parse_scope(scope);
  }
  c.validate();
  return c;
}

// Generation -------------------------------------------------------------------------------

BenchmarkBundle generate(const GenerateConfig& cfg) {
  cfg.validate();
  Manifest manifest;
  manifest.kind = cfg.kind;
  manifest.master_seed = cfg.seed;
  manifest.generate_config = to_json(cfg);
  auto seed_for = [&](const char* tag) {
    const std::uint64_t s = derive_seed(cfg.seed, tag);
    manifest.seeds[tag] = s;
    return s;
  };

  const DataParams& dp = cfg.data;
  const std::size_t n_test = held_out_count(dp.n, dp.test_fraction);
  const Blobs blobs = make_blobs(dp.n + n_test, dp.dim, dp.num_classes, dp.class_sep,
                                 dp.subclusters_per_class, seed_for("data"));

  // Seeded split; both sides keep generation order.
  std::vector<std::size_t> order(dp.n + n_test);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng split_rng(seed_for("split"));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  std::vector<std::size_t> test_pos(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_pos(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test_pos.begin(), test_pos.end());
  std::sort(train_pos.begin(), train_pos.end());
  Dataset train = renumbered(blobs.dataset.select(train_pos));
  Dataset test = renumbered(blobs.dataset.select(test_pos));

  CorruptionRecord record;
  std::vector<Label> test_subclass;
  switch (cfg.kind) {
    case BenchmarkKind::mislabeling: {
      Corrupted c = flip_labels(train, cfg.corruption.fraction, seed_for("corruption"));
      train = std::move(c.dataset);
      record = std::move(c.record);
      break;
    }
    case BenchmarkKind::shortcut: {
      PatchSpec patch{cfg.corruption.patch_coords, cfg.corruption.patch_magnitude};
      if (patch.coords.empty()) patch.coords = {dp.dim - 1};
      Corrupted c = inject_shortcut(train, cfg.corruption.shortcut_class, cfg.corruption.fraction,
                                    patch, seed_for("corruption"));
      train = std::move(c.dataset);
      record = std::move(c.record);
      break;
    }
    case BenchmarkKind::subclass_detection: {
      const auto grouping =
          random_grouping(dp.num_classes, cfg.corruption.num_groups, seed_for("grouping"));
      test_subclass = test.labels;
      test = group_classes(test, grouping).dataset;
      Corrupted c = group_classes(train, grouping);
      train = std::move(c.dataset);
      record = std::move(c.record);
      break;
    }
    case BenchmarkKind::mixed_datasets: {
      const std::size_t adv_train = dp.n / cfg.corruption.mix_ratio;
      const std::size_t adv_test = held_out_count(adv_train, dp.test_fraction);
      const RowMatrix cloud =
          adversarial_cloud(adv_train + adv_test, dp.dim, dp.class_sep, seed_for("adversarial"));
      Corrupted c = mix_datasets(train, cloud.topRows(static_cast<Eigen::Index>(adv_train)),
                                 cfg.corruption.adversarial_label);
      train = std::move(c.dataset);
      record = std::move(c.record);
      test = Dataset::make(cloud.bottomRows(static_cast<Eigen::Index>(adv_test)),
                           std::vector<Label>(adv_test, cfg.corruption.adversarial_label),
                           dp.num_classes);
      break;
    }
    default:
      break;
  }

  const ModelArch arch{dp.dim, cfg.hidden_dims, static_cast<std::size_t>(train.num_classes),
                       cfg.activation};
  TrainConfig tc = cfg.train;
  tc.seed = seed_for("train");
  TrainResult fit = tda::train(arch, train, tc);

  std::optional<LdsCache> lds;
  if (cfg.kind == BenchmarkKind::lds) {
    LdsCache cache;
    cache.subsets = sample_subsets(train.size(), cfg.lds.num_subsets, cfg.lds.fraction,
                                   seed_for("subsets"));
    cache.targets = predict_all(fit.model, test.features);
    const std::size_t m = cache.subsets.num_subsets();
    cache.outputs.resize(static_cast<Eigen::Index>(test.size()), static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j) cache.train_seeds.push_back(derive_seed(cfg.seed, "lds.train", j));
    parallel_for(m, cfg.threads, [&](std::size_t j) {
      TrainConfig sub = tc;
      sub.seed = cache.train_seeds[j];
      const TrainResult r = tda::train(arch, train.select(cache.subsets.masks[j]), sub);
      for (std::size_t t = 0; t < test.size(); ++t) {
        cache.outputs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
            log_odds(r.model, test.x(t), cache.targets[t]);
      }
    });
    lds = std::move(cache);
  }
  if (cfg.kind == BenchmarkKind::model_randomization) seed_for("randomization");

  BenchmarkBundle b{.kind = cfg.kind,
                    .train = std::move(train),
                    .test = std::move(test),
                    .test_subclass = std::move(test_subclass),
                    .model = std::move(fit.model),
                    .checkpoints = std::move(fit.checkpoints),
                    .train_config = tc,
                    .record = std::move(record),
                    .metric = cfg.metric,
                    .lds = std::move(lds),
                    .manifest = std::move(manifest)};
  b.validate();
  return b;
}

}  // namespace tda
