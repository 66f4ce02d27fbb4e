#include <algorithm>
#include <chrono>
#include <ctime>
#include <set>

#include "tda/benchmark.hpp"
#include "tda/error.hpp"
#include "tda/sha256.hpp"

namespace tda {

namespace fs = std::filesystem;

namespace {

constexpr const char* kKindNames[] = {"lds",           "class_detection",    "subclass_detection",
                                      "mislabeling",   "shortcut",           "mixed_datasets",
                                      "model_randomization", "topk_cardinality"};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void check_ids(const std::vector<std::size_t>& ids, std::size_t n, const char* what) {
  for (std::size_t id : ids) {
    require(id < n, ErrorCode::invalid_argument,
            std::string("bundle: ") + what + " id " + std::to_string(id) + " out of range");
  }
}

Json metric_json(BenchmarkKind kind, const MetricParams& p) {
  return {{"kind", to_string(kind)},
          {"params",
           {{"aggregator", p.aggregator},
            {"top_k", p.top_k},
            {"randomization_scope", to_string(p.randomization_scope)}}}};
}

MetricParams metric_params_from_json(const Json& j) {
  MetricParams p;
  if (!j.is_object()) return p;
  p.aggregator = j.value("aggregator", p.aggregator);
  p.top_k = j.value("top_k", p.top_k);
  p.randomization_scope =
      parse_scope(j.value("randomization_scope", std::string(to_string(p.randomization_scope))));
  return p;
}

Json lds_json(const LdsCache& c) {
  return {{"subsets", to_json(c.subsets)},
          {"targets", c.targets},
          {"outputs", to_json(c.outputs)},
          {"train_seeds", c.train_seeds}};
}

LdsCache lds_from_json(const Json& j) {
  LdsCache c;
  c.subsets = subsets_from_json(j.at("subsets"));
  c.targets = j.at("targets").get<std::vector<Label>>();
  c.outputs = matrix_from_json(j.at("outputs"));
  c.train_seeds = j.at("train_seeds").get<std::vector<std::uint64_t>>();
  return c;
}

std::string checkpoint_path(const Checkpoint& c) {
  return "checkpoints/ckpt_" + std::to_string(c.epoch) + ".json";
}

}  // namespace

const char* to_string(BenchmarkKind k) noexcept { return kKindNames[static_cast<int>(k)]; }

BenchmarkKind parse_kind(const std::string& s) {
  for (BenchmarkKind k : all_kinds()) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorCode::invalid_argument, "kind: unknown benchmark kind '" + s + "'");
}

const std::vector<BenchmarkKind>& all_kinds() {
  static const std::vector<BenchmarkKind> kinds = {
      BenchmarkKind::lds,           BenchmarkKind::class_detection,
      BenchmarkKind::subclass_detection, BenchmarkKind::mislabeling,
      BenchmarkKind::shortcut,      BenchmarkKind::mixed_datasets,
      BenchmarkKind::model_randomization, BenchmarkKind::topk_cardinality};
  return kinds;
}

// Validation ---------------------------------------------------------------------------

void BenchmarkBundle::validate() const {
  train.validate();
  test.validate();
  const ModelArch& arch = model.arch();
  require(train.size() >= 2, ErrorCode::invalid_argument, "bundle: training set too small");
  require(test.size() >= 1, ErrorCode::invalid_argument, "bundle: test split is empty");
  require(train.dim() == arch.input_dim, ErrorCode::incompatible,
          "bundle: training features do not match model input_dim");
  require(test.dim() == arch.input_dim, ErrorCode::incompatible,
          "bundle: test features do not match model input_dim");
  require(static_cast<std::size_t>(train.num_classes) == arch.num_classes, ErrorCode::incompatible,
          "bundle: dataset num_classes differs from the model's");
  require(test.num_classes == train.num_classes, ErrorCode::incompatible,
          "bundle: test and training class counts differ");
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    require(static_cast<std::size_t>(checkpoints[k].params.size()) == model.num_params(),
            ErrorCode::incompatible, "bundle: checkpoint parameter length differs from the model");
    require(k == 0 || checkpoints[k].epoch > checkpoints[k - 1].epoch, ErrorCode::invalid_argument,
            "bundle: checkpoint epochs must be strictly increasing");
  }
  const std::size_t n = train.size();
  check_ids(record.mislabeled_idx, n, "mislabeled");
  check_ids(record.shortcut_idx, n, "shortcut");
  check_ids(record.adversarial_idx, n, "adversarial");

  switch (kind) {
    case BenchmarkKind::lds: {
      require(lds.has_value(), ErrorCode::invalid_argument, "bundle: lds kind needs an LDS cache");
      for (const auto& mask : lds->subsets.masks) {
        require(mask.size() == n, ErrorCode::shape_mismatch,
                "bundle: LDS masks do not cover the training set");
      }
      require(static_cast<std::size_t>(lds->outputs.rows()) == test.size() &&
                  static_cast<std::size_t>(lds->outputs.cols()) == lds->subsets.num_subsets(),
              ErrorCode::shape_mismatch, "bundle: LDS outputs must be num_test x m");
      require(lds->targets.size() == test.size(), ErrorCode::shape_mismatch,
              "bundle: LDS targets must cover the test split");
      break;
    }
    case BenchmarkKind::subclass_detection:
      require(test_subclass.size() == test.size(), ErrorCode::shape_mismatch,
              "bundle: test subclass labels must cover the test split");
      require(record.original_subclass.size() == n, ErrorCode::invalid_argument,
              "bundle: record lacks the training subclass labels");
      break;
    case BenchmarkKind::mislabeling:
      require(!record.mislabeled_idx.empty(), ErrorCode::invalid_argument,
              "bundle: mislabeling kind needs mislabeled ids");
      require(metric.aggregator == "self_influence" || metric.aggregator == "sum" ||
                  metric.aggregator == "sum_abs",
              ErrorCode::invalid_argument,
              "metric.aggregator: expected self_influence, sum or sum_abs");
      break;
    case BenchmarkKind::shortcut:
      require(!record.shortcut_idx.empty() && record.shortcut_class && record.shortcut_patch,
              ErrorCode::invalid_argument,
              "bundle: shortcut kind needs shortcut ids, class and patch");
      break;
    case BenchmarkKind::mixed_datasets:
      require(!record.adversarial_idx.empty() && record.adversarial_label,
              ErrorCode::invalid_argument, "bundle: mixed_datasets kind needs adversarial ids and label");
      break;
    case BenchmarkKind::topk_cardinality:
      require(metric.top_k >= 1 && metric.top_k <= n, ErrorCode::invalid_argument,
              "metric.top_k: must lie in [1, n]");
      break;
    default:
      break;
  }
}

BenchmarkBundle assemble(BenchmarkKind kind, Dataset train, Dataset test, Model model,
                         std::vector<Checkpoint> checkpoints, CorruptionRecord record,
                         MetricParams metric, std::optional<LdsCache> lds,
                         std::vector<Label> test_subclass) {
  BenchmarkBundle b{.kind = kind,
                    .train = std::move(train),
                    .test = std::move(test),
                    .test_subclass = std::move(test_subclass),
                    .model = std::move(model),
                    .checkpoints = std::move(checkpoints),
                    .train_config = std::nullopt,
                    .record = std::move(record),
                    .metric = std::move(metric),
                    .lds = std::move(lds),
                    .manifest = {}};
  b.validate();
  b.manifest.kind = kind;
  b.manifest.generate_config = nullptr;
  if (b.checkpoints.empty()) {
    b.manifest.warnings.push_back("no checkpoints: tracin cannot run on this bundle");
  }
  return b;
}

// Manifest ------------------------------------------------------------------------------

Json to_json(const Manifest& m) {
  return {{"schema_version", m.schema_version},
          {"kind", to_string(m.kind)},
          {"master_seed", m.master_seed},
          {"seeds", m.seeds},
          {"files", m.files},
          {"created_at", m.created_at},
          {"warnings", m.warnings},
          {"generate_config", m.generate_config}};
}

Manifest manifest_from_json(const Json& j) {
  Manifest m;
  require(j.is_object() && j.contains("schema_version"), ErrorCode::integrity,
          "manifest: missing schema_version");
  m.schema_version = j.at("schema_version").get<int>();
  require(m.schema_version == kBundleSchemaVersion, ErrorCode::unsupported_version,
          "manifest: unsupported schema_version " + std::to_string(m.schema_version) +
              " (this build reads version " + std::to_string(kBundleSchemaVersion) + ")");
  try {
    m.kind = parse_kind(j.at("kind").get<std::string>());
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.files = j.at("files").get<std::map<std::string, std::string>>();
    m.created_at = j.value("created_at", std::string());
    m.warnings = j.value("warnings", std::vector<std::string>{});
    m.generate_config = j.value("generate_config", Json(nullptr));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::integrity, std::string("manifest: ") + e.what());
  }
  return m;
}

// Save / load ---------------------------------------------------------------------------------

void save(const BenchmarkBundle& bundle, const fs::path& dir) {
  bundle.validate();
  fs::create_directories(dir / "checkpoints");
  Manifest manifest = bundle.manifest;
  manifest.kind = bundle.kind;
  manifest.schema_version = kBundleSchemaVersion;
  manifest.files.clear();
  manifest.created_at = utc_timestamp();

  auto put = [&](const std::string& rel, const Json& j) {
    const std::string text = dump(j);
    write_text(dir / rel, text);
    manifest.files[rel] = sha256_hex(text);
  };

  put("dataset.json", to_json(bundle.train));
  Json test = {{"dataset", to_json(bundle.test)}};
  if (!bundle.test_subclass.empty()) test["subclass_labels"] = bundle.test_subclass;
  put("test.json", test);
  put("model.json", {{"model", to_json(bundle.model)},
                     {"train_config", bundle.train_config ? to_json(*bundle.train_config) : Json(nullptr)}});
  for (const auto& c : bundle.checkpoints) put(checkpoint_path(c), to_json(c));
  put("record.json", to_json(bundle.record));
  put("metric.json", metric_json(bundle.kind, bundle.metric));
  if (bundle.lds) put("lds_cache.json", lds_json(*bundle.lds));

  write_json(dir / "manifest.json", to_json(manifest));
}

BenchmarkBundle load(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::io, "bundle: " + dir.string() + " is not a directory");
  const Manifest manifest = manifest_from_json(read_json(dir / "manifest.json"));

  std::map<std::string, Json> docs;
  for (const auto& [rel, digest] : manifest.files) {
    const fs::path path = dir / rel;
    require(fs::exists(path), ErrorCode::io, "bundle: missing file " + rel);
    const std::string text = read_text(path);
    require(sha256_hex(text) == digest, ErrorCode::integrity,
            "bundle: sha256 mismatch for " + rel);
    try {
      docs.emplace(rel, Json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::integrity, "bundle: " + rel + ": " + e.what());
    }
  }
  auto doc = [&](const std::string& rel) -> const Json& {
    const auto it = docs.find(rel);
    require(it != docs.end(), ErrorCode::integrity, "bundle: manifest does not list " + rel);
    return it->second;
  };

  const Json& model_doc = doc("model.json");
  const Json& test_doc = doc("test.json");
  const Json& metric_doc = doc("metric.json");
  require(metric_doc.value("kind", std::string()) == to_string(manifest.kind), ErrorCode::integrity,
          "bundle: metric.json kind differs from the manifest");

  std::vector<Checkpoint> checkpoints;
  for (const auto& [rel, j] : docs) {
    if (rel.rfind("checkpoints/", 0) == 0) checkpoints.push_back(checkpoint_from_json(j));
  }
  std::sort(checkpoints.begin(), checkpoints.end(),
            [](const Checkpoint& a, const Checkpoint& b) { return a.epoch < b.epoch; });

  std::optional<LdsCache> lds;
  if (docs.count("lds_cache.json")) lds = lds_from_json(docs.at("lds_cache.json"));

  BenchmarkBundle b{
      .kind = manifest.kind,
      .train = dataset_from_json(doc("dataset.json")),
      .test = dataset_from_json(test_doc.at("dataset")),
      .test_subclass = test_doc.value("subclass_labels", std::vector<Label>{}),
      .model = model_from_json(model_doc.at("model")),
      .checkpoints = std::move(checkpoints),
      .train_config = model_doc.value("train_config", Json(nullptr)).is_null()
                          ? std::nullopt
                          : std::optional(train_config_from_json(model_doc.at("train_config"))),
      .record = record_from_json(doc("record.json")),
      .metric = metric_params_from_json(metric_doc.value("params", Json::object())),
      .lds = std::move(lds),
      .manifest = manifest};
  b.validate();
  return b;
}

}  // namespace tda
