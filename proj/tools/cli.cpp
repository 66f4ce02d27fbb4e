#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <map>
#include <set>
#include <sstream>
#include <algorithm>

#include <CLI11.hpp>

#include "tda/error.hpp"
#include "tda/serialize.hpp"

namespace tda::cli {

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

template <class Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    log << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_status(e.code());
  } catch (const fs::filesystem_error& e) {
    log << "error [io]: " << e.what() << "\n";
    return exit_status(ErrorCode::io);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

// Makes labels unique by suffixing repeats with #2, #3, ...
std::vector<std::string> unique_labels(std::vector<std::string> labels) {
  std::map<std::string, int> seen;
  for (auto& l : labels) {
    const int k = ++seen[l];
    if (k > 1) l += "#" + std::to_string(k);
  }
  return labels;
}

struct Cell {
  double sum = 0.0;
  std::size_t count = 0;
};

// Accumulates results and writes whatever exists so far, so a failure still
// leaves partial reports behind.
class ReportWriter {
 public:
  ReportWriter(fs::path out, std::vector<std::string> formats, Json config)
      : out_(std::move(out)), formats_(std::move(formats)) {
    report_ = {{"tool_version", kToolVersion},
               {"created_at", utc_now()},
               {"config", std::move(config)},
               {"bundles", Json::array()},
               {"results", Json::array()},
               {"errors", Json::array()}};
    curves_ = Json::array();
  }

  void add_bundle(const std::string& column, const fs::path& path, const BenchmarkBundle& b) {
    columns_.push_back(column);
    report_["bundles"].push_back({{"column", column},
                                  {"path", path.string()},
                                  {"kind", to_string(b.kind)},
                                  {"master_seed", b.manifest.master_seed},
                                  {"files", b.manifest.files}});
  }

  void add_row(const std::string& row) { rows_.push_back(row); }

  void add_result(const std::string& row, const std::string& column, std::size_t repeat,
                  std::optional<std::uint64_t> seed, const Evaluation& e) {
    Json entry = {{"explainer", row},
                  {"bundle", column},
                  {"repeat", repeat},
                  {"seed", seed ? Json(*seed) : Json(nullptr)},
                  {"result", metrics::to_json(e.result)}};
    report_["results"].push_back(std::move(entry));
    curves_.push_back({{"explainer", row}, {"bundle", column}, {"repeat", repeat}, {"curves", e.curves}});
    Cell& c = cells_[{row, column}];
    c.sum += e.result.score;
    ++c.count;
  }

  void add_error(const std::string& row, const std::string& column, const Error& err) {
    report_["errors"].push_back({{"explainer", row},
                                 {"bundle", column},
                                 {"code", to_string(err.code())},
                                 {"message", err.what()}});
  }

  void flush() const {
    const bool json = has("json");
    if (json) {
      write_json(out_ / "report.json", report_);
      write_json(out_ / "curves.json", curves_);
    }
    if (has("csv")) write_text(out_ / "scores.csv", csv());
  }

 private:
  bool has(const char* f) const {
    return std::find(formats_.begin(), formats_.end(), f) != formats_.end();
  }

  std::string csv() const {
    std::ostringstream s;
    s << "explainer";
    for (const auto& c : columns_) s << "," << c;
    s << "\n";
    for (const auto& r : rows_) {
      s << r;
      for (const auto& c : columns_) {
        s << ",";
        const auto it = cells_.find({r, c});
        if (it != cells_.end() && it->second.count > 0) {
          s << format_score(it->second.sum / static_cast<double>(it->second.count));
        }
      }
      s << "\n";
    }
    return s.str();
  }

  fs::path out_;
  std::vector<std::string> formats_;
  Json report_;
  Json curves_;
  std::vector<std::string> columns_;
  std::vector<std::string> rows_;
  std::map<std::pair<std::string, std::string>, Cell> cells_;
};

void ensure_writable_dir(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path probe = dir / ".tdabench_write_probe";
  write_text(probe, "");
  fs::remove(probe);
}

}  // namespace

// RunConfig --------------------------------------------------------------------------------

void RunConfig::validate() const {
  require(!explainers.empty(), ErrorCode::invalid_argument, "run.explainers: list is empty");
  require(!bundles.empty() || !generate.empty(), ErrorCode::invalid_argument,
          "run.bundles: no bundle paths or generate configs given");
  require(repeat >= 1, ErrorCode::invalid_argument, "run.repeat must be >= 1");
  require(!formats.empty(), ErrorCode::invalid_argument, "run.formats: list is empty");
  for (const auto& f : formats) {
    require(f == "json" || f == "csv", ErrorCode::invalid_argument,
            "run.formats: expected json or csv, got '" + f + "'");
  }
  for (const auto& e : explainers) e.validate();
}

RunConfig run_config_from_json(const Json& j) {
  require(j.is_object(), ErrorCode::invalid_argument, "run: expected a JSON object");
  static const std::set<std::string> known = {"bundles", "generate",    "explainers",
                                              "repeat",  "seed_stride", "formats"};
  for (const auto& [key, value] : j.items()) {
    require(known.count(key) > 0, ErrorCode::invalid_argument, "run." + key + ": unknown field");
  }
  RunConfig c;
  try {
    for (const auto& p : j.value("bundles", std::vector<std::string>{})) c.bundles.emplace_back(p);
    c.repeat = j.value("repeat", c.repeat);
    c.seed_stride = j.value("seed_stride", c.seed_stride);
    c.formats = j.value("formats", c.formats);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_argument, std::string("run: ") + e.what());
  }
  if (j.contains("generate")) {
    for (const auto& g : j["generate"]) c.generate.push_back(generate_config_from_json(g));
  }
  if (j.contains("explainers")) {
    for (const auto& e : j["explainers"]) c.explainers.push_back(explainer_config_from_json(e));
  }
  return c;
}

Json to_json(const RunConfig& c) {
  Json bundles = Json::array();
  for (const auto& b : c.bundles) bundles.push_back(b.string());
  Json generate = Json::array();
  for (const auto& g : c.generate) generate.push_back(tda::to_json(g));
  Json explainers = Json::array();
  for (const auto& e : c.explainers) explainers.push_back(tda::to_json(e));
  return {{"bundles", bundles},          {"generate", generate},
          {"explainers", explainers},    {"repeat", c.repeat},
          {"seed_stride", c.seed_stride}, {"formats", c.formats}};
}

// Commands -----------------------------------------------------------------------------------

int cmd_generate(const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed,
                 std::ostream& log) {
  return guarded(log, [&] {
    GenerateConfig cfg = generate_config_from_json(read_json(config));
    if (seed) cfg.seed = *seed;
    const BenchmarkBundle bundle = generate(cfg);
    save(bundle, out);
    log << "wrote " << to_string(bundle.kind) << " bundle to " << out.string() << " ("
        << bundle.train.size() << " train, " << bundle.test.size() << " test, "
        << bundle.checkpoints.size() << " checkpoints)\n";
    return 0;
  });
}

int cmd_attribute(const fs::path& bundle_dir, const fs::path& explainer, const fs::path& out,
                  std::optional<std::uint64_t> seed, std::ostream& log) {
  return guarded(log, [&] {
    ExplainerConfig cfg = explainer_config_from_json(read_json(explainer));
    if (seed) cfg = cfg.with_seed(*seed);
    const BenchmarkBundle bundle = load(bundle_dir);
    const auto ex = make_explainer(cfg, bundle.model, bundle.train, bundle.checkpoints);
    const AttributionMatrix a = ex->explain(evaluation_batch(bundle));
    write_json(out, tda::to_json(a));
    log << "wrote " << a.num_test() << " x " << a.num_train() << " attributions to "
        << out.string() << "\n";
    return 0;
  });
}

int cmd_evaluate(const EvaluateOptions& opts, std::ostream& log) {
  std::optional<ReportWriter> writer;
  std::string row, column;
  auto body = [&]() -> int {
    RunConfig rc;
    if (opts.config) rc = run_config_from_json(read_json(*opts.config));
    for (const auto& b : opts.bundles) rc.bundles.push_back(b);
    for (const auto& e : opts.explainers) rc.explainers.push_back(explainer_config_from_json(read_json(e)));
    if (opts.repeat) rc.repeat = *opts.repeat;

    std::optional<AttributionMatrix> precomputed;
    if (opts.attributions) {
      precomputed = attribution_from_json(read_json(*opts.attributions));
      require(rc.bundles.size() + rc.generate.size() == 1, ErrorCode::invalid_argument,
              "evaluate: --attributions needs exactly one bundle");
    } else {
      rc.validate();
    }

    ensure_writable_dir(opts.out);
    Json resolved = to_json(rc);
    if (opts.seed) resolved["seed_override"] = *opts.seed;
    writer.emplace(opts.out, rc.formats, resolved);

    std::vector<std::pair<fs::path, BenchmarkBundle>> bundles;
    for (std::size_t g = 0; g < rc.generate.size(); ++g) {
      const fs::path dir = opts.out / "bundles" /
                           (std::to_string(g) + "_" + to_string(rc.generate[g].kind));
      save(generate(rc.generate[g]), dir);
      bundles.emplace_back(dir, load(dir));
    }
    for (const auto& p : rc.bundles) bundles.emplace_back(p, load(p));

    std::vector<std::string> kinds;
    for (const auto& [path, b] : bundles) kinds.push_back(to_string(b.kind));
    const auto columns = unique_labels(kinds);
    for (std::size_t k = 0; k < bundles.size(); ++k) {
      writer->add_bundle(columns[k], bundles[k].first, bundles[k].second);
    }

    if (precomputed) {
      row = "precomputed:" + precomputed->method_name;
      column = columns.front();
      writer->add_row(row);
      writer->add_result(row, column, 0, std::nullopt,
                         evaluate_attributions(bundles.front().second, *precomputed));
      writer->flush();
      log << "evaluated precomputed attributions on " << column << "\n";
      return 0;
    }

    std::vector<std::string> labels;
    for (const auto& e : rc.explainers) labels.push_back(e.label());
    const auto rows = unique_labels(labels);
    for (const auto& r : rows) writer->add_row(r);

    for (std::size_t e = 0; e < rc.explainers.size(); ++e) {
      row = rows[e];
      for (std::size_t k = 0; k < bundles.size(); ++k) {
        column = columns[k];
        const BenchmarkBundle& b = bundles[k].second;
        const std::uint64_t base = opts.seed.value_or(b.manifest.master_seed);
        for (std::size_t r = 0; r < rc.repeat; ++r) {
          const ExplainerConfig& cfg = rc.explainers[e];
          std::optional<std::uint64_t> seed;
          ExplainerConfig run = cfg;
          if (cfg.uses_seed()) {
            seed = base + r * rc.seed_stride;
            run = cfg.with_seed(*seed);
          }
          const Evaluation ev = evaluate(b, run);
          writer->add_result(row, column, r, seed, ev);
          log << row << " on " << column << " [" << r << "]: " << ev.result.metric << " = "
              << format_score(ev.result.score) << "\n";
        }
      }
    }
    writer->flush();
    return 0;
  };
  return guarded(log, [&]() -> int {
    try {
      return body();
    } catch (const Error& err) {
      if (writer) {
        writer->add_error(row, column, err);
        writer->flush();
      }
      throw;
    }
  });
}

// Entry point -------------------------------------------------------------------------------

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Training data attribution benchmarks", "tdabench"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("generate", "Build a benchmark bundle from a JSON config");
  gen->add_option("--config", gen_config, "Generate config (JSON)")->required();
  gen->add_option("--out", gen_out, "Bundle directory to write")->required();
  gen->add_option("--seed", gen_seed, "Override the config's master seed");

  EvaluateOptions ev;
  std::vector<std::string> ev_bundles, ev_explainers;
  std::string ev_config, ev_out, ev_attr;
  auto* evc = app.add_subcommand("evaluate", "Score explainers on bundles");
  evc->add_option("--bundle", ev_bundles, "Bundle directory (repeatable)");
  evc->add_option("--config", ev_config, "Run config (JSON)");
  evc->add_option("--explainer", ev_explainers, "Explainer config file (repeatable)");
  evc->add_option("--attributions", ev_attr, "Precomputed attributions to score");
  evc->add_option("--out", ev_out, "Report directory")->required();
  evc->add_option("--repeat", ev.repeat, "Repeats per (explainer, bundle)");
  evc->add_option("--seed", ev.seed, "Base explainer seed (default: bundle master seed)");

  std::string at_bundle, at_explainer, at_out;
  std::optional<std::uint64_t> at_seed;
  auto* att = app.add_subcommand("attribute", "Write attributions for a bundle's test split");
  att->add_option("--bundle", at_bundle, "Bundle directory")->required();
  att->add_option("--explainer", at_explainer, "Explainer config (JSON)")->required();
  att->add_option("--out", at_out, "Output file")->required();
  att->add_option("--seed", at_seed, "Override the explainer seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_status(ErrorCode::invalid_argument);
  }

  if (gen->parsed()) return cmd_generate(gen_config, gen_out, gen_seed, err);
  if (att->parsed()) return cmd_attribute(at_bundle, at_explainer, at_out, at_seed, err);

  for (const auto& b : ev_bundles) ev.bundles.emplace_back(b);
  for (const auto& e : ev_explainers) ev.explainers.emplace_back(e);
  if (!ev_config.empty()) ev.config = ev_config;
  if (!ev_attr.empty()) ev.attributions = ev_attr;
  ev.out = ev_out;
  return cmd_evaluate(ev, err);
}

}  // namespace tda::cli
