#include "tda/serialize.hpp"

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "tda/error.hpp"

namespace tda {

namespace {

// Looks up `key` and converts it, reporting the dotted field path on failure.
template <class T>
T field(const Json& j, const char* key, const std::string& where) {
  const std::string path = where + "." + key;
  require(j.is_object(), ErrorCode::invalid_argument, where + ": expected a JSON object");
  const auto it = j.find(key);
  require(it != j.end(), ErrorCode::invalid_argument, path + ": missing field");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_argument, path + ": " + e.what());
  }
}

template <class T>
T field_or(const Json& j, const char* key, const std::string& where, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return field<T>(j, key, where);
}

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    require(known.count(key) > 0, ErrorCode::invalid_argument,
            where + "." + key + ": unknown field");
  }
}

Json index_list(const std::vector<std::size_t>& v) { return Json(v); }

// Integer-keyed maps become JSON objects with decimal string keys.
template <class K, class V>
Json map_object(const std::map<K, V>& m) {
  Json out = Json::object();
  for (const auto& [k, v] : m) out[std::to_string(k)] = v;
  return out;
}

template <class K, class V>
std::map<K, V> object_map(const Json& j, const std::string& where) {
  require(j.is_object(), ErrorCode::invalid_argument, where + ": expected an object");
  std::map<K, V> out;
  for (const auto& [key, value] : j.items()) {
    std::size_t used = 0;
    long long k = 0;
    try {
      k = std::stoll(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == key.size() && !key.empty(), ErrorCode::invalid_argument,
            where + ": key '" + key + "' is not an integer");
    out.emplace(static_cast<K>(k), value.template get<V>());
  }
  return out;
}

}  // namespace

// Linear algebra ------------------------------------------------------------------

Json to_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const Json& j) {
  require(j.is_array(), ErrorCode::invalid_argument, "vector: expected an array");
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json to_json(const RowMatrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

RowMatrix matrix_from_json(const Json& j) {
  const auto rows = field<Eigen::Index>(j, "rows", "matrix");
  const auto cols = field<Eigen::Index>(j, "cols", "matrix");
  const auto data = field<std::vector<double>>(j, "data", "matrix");
  require(rows >= 0 && cols >= 0 && static_cast<std::size_t>(rows * cols) == data.size(),
          ErrorCode::shape_mismatch, "matrix: data length does not match rows x cols");
  return Eigen::Map<const RowMatrix>(data.data(), rows, cols);
}

// Models -------------------------------------------------------------------------

Json to_json(const ModelArch& arch) {
  return {{"input_dim", arch.input_dim},
          {"hidden_dims", arch.hidden_dims},
          {"num_classes", arch.num_classes},
          {"activation", to_string(arch.activation)}};
}

ModelArch arch_from_json(const Json& j) {
  reject_unknown(j, {"input_dim", "hidden_dims", "num_classes", "activation"}, "arch");
  ModelArch a;
  a.input_dim = field<std::size_t>(j, "input_dim", "arch");
  a.hidden_dims = field_or<std::vector<std::size_t>>(j, "hidden_dims", "arch", {});
  a.num_classes = field<std::size_t>(j, "num_classes", "arch");
  a.activation = parse_activation(field_or<std::string>(j, "activation", "arch", "relu"));
  a.validate();
  return a;
}

Json to_json(const Model& model) {
  return {{"arch", to_json(model.arch())}, {"params", to_json(model.params())}};
}

Model model_from_json(const Json& j) {
  return Model(arch_from_json(field<Json>(j, "arch", "model")),
               vector_from_json(field<Json>(j, "params", "model")));
}

Json to_json(const Checkpoint& c) {
  return {{"epoch", c.epoch}, {"learning_rate", c.learning_rate}, {"params", to_json(c.params)}};
}

Checkpoint checkpoint_from_json(const Json& j) {
  Checkpoint c;
  c.epoch = field<int>(j, "epoch", "checkpoint");
  c.learning_rate = field<double>(j, "learning_rate", "checkpoint");
  c.params = vector_from_json(field<Json>(j, "params", "checkpoint"));
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr_schedule", c.lr_schedule},
          {"l2_weight", c.l2_weight},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const Json& j) {
  reject_unknown(j, {"epochs", "lr_schedule", "lr", "l2_weight", "batch_size", "seed",
                     "checkpoint_every"},
                 "train");
  TrainConfig c;
  c.epochs = field<int>(j, "epochs", "train");
  if (j.contains("lr_schedule")) {
    c.lr_schedule = field<std::vector<double>>(j, "lr_schedule", "train");
  } else {
    // Shorthand: a single constant learning rate.
    c.lr_schedule.assign(static_cast<std::size_t>(std::max(c.epochs, 0)),
                         field<double>(j, "lr", "train"));
  }
  c.l2_weight = field_or<double>(j, "l2_weight", "train", 0.0);
  c.batch_size = field_or<std::size_t>(j, "batch_size", "train", 32);
  c.seed = field_or<std::uint64_t>(j, "seed", "train", 0);
  c.checkpoint_every = field_or<int>(j, "checkpoint_every", "train", 1);
  c.validate();
  return c;
}

// Data ------------------------------------------------------------------------------

Json to_json(const Dataset& ds) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    const auto r = ds.features.row(i);
    rows.push_back(std::vector<double>(r.data(), r.data() + r.size()));
  }
  return {{"n", ds.size()},
          {"d", ds.dim()},
          {"num_classes", ds.num_classes},
          {"features", std::move(rows)},
          {"labels", ds.labels},
          {"ids", ds.ids}};
}

Dataset dataset_from_json(const Json& j) {
  const auto n = field<std::size_t>(j, "n", "dataset");
  const auto d = field<std::size_t>(j, "d", "dataset");
  const auto rows = field<std::vector<std::vector<double>>>(j, "features", "dataset");
  require(rows.size() == n, ErrorCode::shape_mismatch, "dataset.features: expected n rows");
  Dataset ds;
  ds.num_classes = field<int>(j, "num_classes", "dataset");
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    require(rows[i].size() == d, ErrorCode::shape_mismatch, "dataset.features: expected d columns");
    for (std::size_t k = 0; k < d; ++k) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  ds.labels = field<std::vector<Label>>(j, "labels", "dataset");
  if (j.contains("ids")) {
    ds.ids = field<std::vector<std::size_t>>(j, "ids", "dataset");
  } else {
    ds.ids.resize(n);
    std::iota(ds.ids.begin(), ds.ids.end(), std::size_t{0});
  }
  ds.validate();
  return ds;
}

Json to_json(const ShortcutPatch& p) {
  return {{"coords", p.coords}, {"offsets", p.offsets}, {"magnitude", p.magnitude}};
}

ShortcutPatch patch_from_json(const Json& j) {
  ShortcutPatch p;
  p.coords = field<std::vector<std::size_t>>(j, "coords", "patch");
  p.offsets = field<std::vector<double>>(j, "offsets", "patch");
  p.magnitude = field<double>(j, "magnitude", "patch");
  require(p.coords.size() == p.offsets.size(), ErrorCode::shape_mismatch,
          "patch: coords and offsets differ in length");
  return p;
}

Json to_json(const CorruptionRecord& r) {
  Json j = {{"mislabeled_idx", index_list(r.mislabeled_idx)},
            {"original_labels", map_object(r.original_labels)},
            {"shortcut_idx", index_list(r.shortcut_idx)},
            {"adversarial_idx", index_list(r.adversarial_idx)},
            {"subclass_map", map_object(r.subclass_map)},
            {"original_subclass", map_object(r.original_subclass)}};
  j["shortcut_class"] = r.shortcut_class ? Json(*r.shortcut_class) : Json(nullptr);
  j["shortcut_patch"] = r.shortcut_patch ? to_json(*r.shortcut_patch) : Json(nullptr);
  j["adversarial_label"] = r.adversarial_label ? Json(*r.adversarial_label) : Json(nullptr);
  return j;
}

CorruptionRecord record_from_json(const Json& j) {
  CorruptionRecord r;
  r.mislabeled_idx = field<std::vector<std::size_t>>(j, "mislabeled_idx", "record");
  r.original_labels = object_map<std::size_t, Label>(field<Json>(j, "original_labels", "record"),
                                                    "record.original_labels");
  r.shortcut_idx = field<std::vector<std::size_t>>(j, "shortcut_idx", "record");
  r.adversarial_idx = field<std::vector<std::size_t>>(j, "adversarial_idx", "record");
  r.subclass_map =
      object_map<Label, Label>(field<Json>(j, "subclass_map", "record"), "record.subclass_map");
  r.original_subclass = object_map<std::size_t, Label>(
      field<Json>(j, "original_subclass", "record"), "record.original_subclass");
  if (j.contains("shortcut_class") && !j["shortcut_class"].is_null()) {
    r.shortcut_class = j["shortcut_class"].get<Label>();
  }
  if (j.contains("shortcut_patch") && !j["shortcut_patch"].is_null()) {
    r.shortcut_patch = patch_from_json(j["shortcut_patch"]);
  }
  if (j.contains("adversarial_label") && !j["adversarial_label"].is_null()) {
    r.adversarial_label = j["adversarial_label"].get<Label>();
  }
  return r;
}

Json to_json(const SubsetSpec& s) {
  Json masks = Json::array();
  for (const auto& mask : s.masks) {
    std::string bits(mask.size(), '0');
    for (std::size_t i = 0; i < mask.size(); ++i) bits[i] = mask[i] ? '1' : '0';
    masks.push_back(std::move(bits));
  }
  return {{"fraction", s.fraction}, {"seed", s.seed}, {"masks", std::move(masks)}};
}

SubsetSpec subsets_from_json(const Json& j) {
  SubsetSpec s;
  s.fraction = field<double>(j, "fraction", "subsets");
  s.seed = field<std::uint64_t>(j, "seed", "subsets");
  for (const auto& bits : field<std::vector<std::string>>(j, "masks", "subsets")) {
    std::vector<bool> mask(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
      require(bits[i] == '0' || bits[i] == '1', ErrorCode::invalid_argument,
              "subsets.masks: expected a string of 0/1");
      mask[i] = bits[i] == '1';
    }
    s.masks.push_back(std::move(mask));
  }
  return s;
}

// Explainer configs -------------------------------------------------------------------

Json to_json(const ExplainerConfig& cfg) {
  struct Visitor {
    Json operator()(const SimilarityConfig& c) const {
      return {{"measure", c.measure == SimilarityMeasure::dot ? "dot" : "cosine"}};
    }
    Json operator()(const InfluenceConfig& c) const {
      Json j = {{"damping", c.damping},
                {"scope", to_string(c.scope)},
                {"max_hessian_dim", c.max_hessian_dim}};
      if (c.low_rank) j["rank"] = *c.low_rank;
      return j;
    }
    Json operator()(const TracInConfig& c) const {
      return {{"scope", to_string(c.scope)},
              {"projection_dim", c.projection_dim},
              {"seed", c.seed},
              {"checkpoint_epochs", c.checkpoint_epochs}};
    }
    Json operator()(const RepresenterConfig& c) const {
      return {{"l2_strength", c.l2_strength},
              {"tolerance", c.tolerance},
              {"max_iterations", c.max_iterations}};
    }
    Json operator()(const TrakConfig& c) const {
      return {{"projection_dim", c.projection_dim}, {"seed", c.seed}};
    }
    Json operator()(const RandomConfig& c) const { return {{"seed", c.seed}}; }
  };
  Json j = {{"method", cfg.method()}, {"params", std::visit(Visitor{}, cfg.params)}};
  if (!cfg.name.empty()) j["name"] = cfg.name;
  return j;
}

ExplainerConfig explainer_config_from_json(const Json& j) {
  reject_unknown(j, {"method", "params", "name"}, "explainer");
  const auto method = field<std::string>(j, "method", "explainer");
  const Json params = j.contains("params") ? j["params"] : Json::object();
  const std::string where = "explainer.params";
  ExplainerConfig cfg;
  cfg.name = field_or<std::string>(j, "name", "explainer", "");
  if (method == "similarity") {
    reject_unknown(params, {"measure"}, where);
    SimilarityConfig c;
    const auto measure = field_or<std::string>(params, "measure", where, "dot");
    require(measure == "dot" || measure == "cosine", ErrorCode::invalid_argument,
            where + ".measure: expected 'dot' or 'cosine', got '" + measure + "'");
    c.measure = measure == "dot" ? SimilarityMeasure::dot : SimilarityMeasure::cosine;
    cfg.params = c;
  } else if (method == "influence") {
    reject_unknown(params, {"damping", "scope", "rank", "max_hessian_dim"}, where);
    InfluenceConfig c;
    c.damping = field_or(params, "damping", where, c.damping);
    c.scope = parse_scope(field_or<std::string>(params, "scope", where, to_string(c.scope)));
    if (params.contains("rank") && !params["rank"].is_null()) {
      c.low_rank = field<std::size_t>(params, "rank", where);
    }
    c.max_hessian_dim = field_or(params, "max_hessian_dim", where, c.max_hessian_dim);
    cfg.params = c;
  } else if (method == "tracin") {
    reject_unknown(params, {"scope", "projection_dim", "seed", "checkpoint_epochs"}, where);
    TracInConfig c;
    c.scope = parse_scope(field_or<std::string>(params, "scope", where, to_string(c.scope)));
    c.projection_dim = field_or(params, "projection_dim", where, c.projection_dim);
    c.seed = field_or(params, "seed", where, c.seed);
    c.checkpoint_epochs = field_or(params, "checkpoint_epochs", where, c.checkpoint_epochs);
    cfg.params = c;
  } else if (method == "representer") {
    reject_unknown(params, {"l2_strength", "tolerance", "max_iterations"}, where);
    RepresenterConfig c;
    c.l2_strength = field_or(params, "l2_strength", where, c.l2_strength);
    c.tolerance = field_or(params, "tolerance", where, c.tolerance);
    c.max_iterations = field_or(params, "max_iterations", where, c.max_iterations);
    cfg.params = c;
  } else if (method == "trak") {
    reject_unknown(params, {"projection_dim", "seed"}, where);
    TrakConfig c;
    c.projection_dim = field_or(params, "projection_dim", where, c.projection_dim);
    c.seed = field_or(params, "seed", where, c.seed);
    cfg.params = c;
  } else if (method == "random") {
    reject_unknown(params, {"seed"}, where);
    RandomConfig c;
    c.seed = field_or(params, "seed", where, c.seed);
    cfg.params = c;
  } else {
    fail(ErrorCode::invalid_argument, "explainer.method: unknown method '" + method + "'");
  }
  cfg.validate();
  return cfg;
}

Json to_json(const AttributionMatrix& a) {
  Json rows = Json::array();
  for (std::size_t t = 0; t < a.num_test(); ++t) {
    const auto r = a.row(t);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"method_name", a.method_name},
          {"train_ids", a.train_ids},
          {"test_targets", a.test_targets},
          {"values", std::move(rows)}};
}

AttributionMatrix attribution_from_json(const Json& j) {
  AttributionMatrix a;
  a.method_name = field<std::string>(j, "method_name", "attributions");
  a.test_targets = field<std::vector<Label>>(j, "test_targets", "attributions");
  a.train_ids = field<std::vector<std::size_t>>(j, "train_ids", "attributions");
  const auto rows = field<std::vector<std::vector<double>>>(j, "values", "attributions");
  const std::size_t n = a.train_ids.size();
  a.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    require(rows[t].size() == n, ErrorCode::shape_mismatch,
            "attributions.values: row " + std::to_string(t) + " does not match train_ids length");
    for (std::size_t i = 0; i < n; ++i) {
      a.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = rows[t][i];
    }
  }
  a.validate();
  return a;
}

// Files ---------------------------------------------------------------------------------

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::invalid_argument, path.string() + ": malformed JSON: " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, dump(j)); }

}  // namespace tda
