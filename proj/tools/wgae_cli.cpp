// Command-line front end. Links only the C interface.
#include <openssl/evp.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wgae/wgae.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = WGAE_OK;
constexpr int kExitUsage = WGAE_ERR_USAGE;
constexpr int kExitData = WGAE_ERR_DATA;
constexpr int kExitNumeric = WGAE_ERR_NUMERIC;
constexpr int kExitIo = WGAE_ERR_IO;

// Carries a status out of a subcommand.
struct Failure {
  int code;
  std::string message;
};

void check(wgae_status status, const std::string& what) {
  if (status != WGAE_OK) throw Failure{status, what + ": " + wgae_last_error()};
}

template <typename T, void (*Destroy)(T*)>
struct Deleter {
  void operator()(T* p) const { Destroy(p); }
};
using Config = std::unique_ptr<wgae_config, Deleter<wgae_config, wgae_config_destroy>>;
using Dataset = std::unique_ptr<wgae_dataset, Deleter<wgae_dataset, wgae_dataset_destroy>>;
using Model = std::unique_ptr<wgae_model, Deleter<wgae_model, wgae_model_destroy>>;
using Report = std::unique_ptr<wgae_report, Deleter<wgae_report, wgae_report_destroy>>;

std::string take(char* text) {
  std::string s = text ? text : "";
  wgae_string_free(text);
  return s;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitIo, "cannot read " + path.string()};
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Failure{5, "sha256 unavailable"};
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Failure{kExitIo, "cannot write " + path.string()};
}

// Relative paths missing from the working directory fall back to the data
// directory given by WGAE_DATA_DIR.
fs::path resolve_input(const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || fs::exists(path)) return path;
  if (const char* dir = std::getenv("WGAE_DATA_DIR"); dir && *dir) {
    const fs::path alt = fs::path(dir) / path;
    if (fs::exists(alt)) return alt;
  }
  return path;
}

// Collects what a run read and wrote; serialized next to the main output.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  ordered_json config = nullptr;
  ordered_json inputs = ordered_json::array();
  ordered_json artifacts = ordered_json::array();
  ordered_json extra = ordered_json::object();

  void input(const fs::path& p) { inputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}}); }
  void input_dataset(const fs::path& dir) {
    char* list = nullptr;
    check(wgae_dataset_files(dir.string().c_str(), &list), "dataset " + dir.string());
    std::istringstream in(take(list));
    for (std::string line; std::getline(in, line);) input(line);
  }
  void artifact(const fs::path& p) { artifacts.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}}); }

  void set_config(const wgae_config* cfg) {
    config = ordered_json::object();
    for (std::size_t i = 0; i < wgae_config_key_count(); ++i) {
      const char* key = wgae_config_key(i);
      const char* value = nullptr;
      check(wgae_config_get(cfg, key, &value), "config");
      config[key] = value;
    }
  }

  void write(const fs::path& path) const {
    ordered_json j;
    j["version"] = wgae_version();
    j["command"] = command;
    j["argv"] = argv;
    j["cwd"] = fs::current_path().string();
    if (!config.is_null()) {
      j["seed"] = std::stoull(config["seed"].get<std::string>());
      j["config"] = config;
    }
    j["inputs"] = inputs;
    j["artifacts"] = artifacts;
    for (const auto& [k, v] : extra.items()) j[k] = v;
    write_text(path, j.dump(2) + "\n");
  }
};

fs::path manifest_path_for(const fs::path& out) {
  if (fs::is_directory(out)) return out / "manifest.json";
  return fs::path(out.string() + ".manifest.json");
}

// ---- config flags -----------------------------------------------------------

struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> overrides;  // key -> value as typed
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
    for (std::size_t i = 0; i < wgae_config_key_count(); ++i) {
      const std::string key = wgae_config_key(i);
      std::string names = "--" + key;
      std::string dashed = key;
      for (char& c : dashed) c = c == '_' ? '-' : c;
      if (dashed != key) names += ",--" + dashed;
      auto* opt = app->add_option(names, overrides[key], "config key " + key)->group("Config keys");
      options.emplace_back(key, opt);
    }
  }

  Config resolve(Manifest& manifest) const {
    wgae_config* raw = nullptr;
    if (!config_file.empty()) {
      check(wgae_config_load(config_file.c_str(), &raw), "config");
      Config cfg(raw);
      manifest.input(config_file);
      apply(cfg.get());
      return cfg;
    }
    check(wgae_config_create(&raw), "config");
    Config cfg(raw);
    apply(cfg.get());
    return cfg;
  }

 private:
  void apply(wgae_config* cfg) const {
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      check(wgae_config_set(cfg, key.c_str(), overrides.at(key).c_str()), "--" + key);
    }
    check(wgae_config_validate(cfg), "config");
  }
};

Dataset load_data(const std::string& dir, Manifest& manifest) {
  const fs::path path = resolve_input(dir);
  wgae_dataset* raw = nullptr;
  check(wgae_dataset_load(path.string().c_str(), &raw), "dataset");
  Dataset data(raw);
  manifest.input_dataset(path);
  return data;
}

Model load_model(const std::string& file, Manifest& manifest) {
  wgae_model* raw = nullptr;
  check(wgae_model_load(file.c_str(), &raw), "checkpoint");
  Model model(raw);
  manifest.input(file);
  return model;
}

// ---- recipes ----------------------------------------------------------------

// Recipe: "key = value" lines with keys format, features, edges, labels,
// vocabulary, tau_a and sha256.<file key>. File paths are relative to the
// data directory.
struct Recipe {
  std::map<std::string, std::string> values;
  std::string get(const std::string& key) const {
    auto it = values.find(key);
    return it == values.end() ? std::string() : it->second;
  }
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

Recipe read_recipe(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Failure{kExitIo, "cannot read recipe " + path.string()};
  static const std::vector<std::string> allowed{"name",   "format",     "features", "edges", "labels",
                                                "vocabulary", "tau_a", "source", "note"};
  Recipe r;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Failure{kExitUsage, path.string() + ":" + std::to_string(n) + ": expected key = value"};
    const std::string key = trim(line.substr(0, eq));
    if (key.rfind("sha256.", 0) != 0 && std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Failure{kExitUsage, path.string() + ":" + std::to_string(n) + ": unknown recipe key '" + key + "'"};
    }
    r.values[key] = trim(line.substr(eq + 1));
  }
  return r;
}

// ---- subcommands ------------------------------------------------------------

struct IngestArgs {
  std::string recipe, features, format, edges, labels, vocabulary, data_dir, out;
  double tau_a = 0.0;
};

int run_ingest(const IngestArgs& a, Manifest& m) {
  std::string features = a.features, format = a.format, edges = a.edges, labels = a.labels, vocab = a.vocabulary;
  double tau_a = a.tau_a;
  if (!a.recipe.empty()) {
    const Recipe recipe = read_recipe(a.recipe);
    m.input(a.recipe);
    fs::path base = a.data_dir;
    if (base.empty()) {
      const char* env = std::getenv("WGAE_DATA_DIR");
      base = env && *env ? fs::path(env) : fs::path(".");
    }
    auto file = [&](const std::string& key, std::string& slot) {
      const std::string rel = recipe.get(key);
      if (rel.empty() || !slot.empty()) return;
      const fs::path p = base / rel;
      if (!fs::exists(p)) throw Failure{kExitIo, "recipe file missing: " + p.string()};
      const std::string digest = sha256_file(p);
      const std::string expected = recipe.get("sha256." + key);
      if (expected.empty()) {
        std::cerr << "warning: no pinned digest for " << key << "; sha256 " << digest << "\n";
      } else if (expected != digest) {
        throw Failure{kExitData, p.string() + ": sha256 " + digest + " does not match recipe " + expected};
      }
      slot = p.string();
    };
    file("features", features);
    file("edges", edges);
    file("labels", labels);
    file("vocabulary", vocab);
    if (format.empty()) format = recipe.get("format");
    if (tau_a == 0.0 && !recipe.get("tau_a").empty()) tau_a = std::stod(recipe.get("tau_a"));
  }
  if (features.empty()) throw Failure{kExitUsage, "ingest needs --features or --recipe"};

  wgae_ingest_options opt{};
  opt.features = features.c_str();
  opt.format = format.empty() ? nullptr : format.c_str();
  opt.edges = edges.empty() ? nullptr : edges.c_str();
  opt.labels = labels.empty() ? nullptr : labels.c_str();
  opt.vocabulary = vocab.empty() ? nullptr : vocab.c_str();
  opt.tau_a = tau_a;
  for (const auto* p : {&features, &edges, &labels, &vocab}) {
    if (!p->empty()) m.input(*p);
  }
  wgae_dataset* raw = nullptr;
  check(wgae_dataset_ingest(&opt, &raw), "ingest");
  Dataset data(raw);
  check(wgae_dataset_save(data.get(), a.out.c_str()), "save");
  char* list = nullptr;
  check(wgae_dataset_files(a.out.c_str(), &list), "save");
  std::istringstream files(take(list));
  for (std::string f; std::getline(files, f);) m.artifact(f);

  wgae_dataset_info info{};
  check(wgae_dataset_info_get(data.get(), &info), "info");
  m.extra["dataset"] = {{"nodes", info.nodes}, {"vocab", info.vocab},   {"nonzeros", info.nonzeros},
                        {"edges", info.edges}, {"labeled", info.labeled}, {"classes", info.classes}};
  std::cout << "nodes=" << info.nodes << " vocab=" << info.vocab << " nonzeros=" << info.nonzeros
            << " edges=" << info.edges << " classes=" << info.classes << "\n";
  m.write(manifest_path_for(a.out));
  return kExitOk;
}

struct LogSink {
  std::ofstream* file = nullptr;
  int every = 100;
  int lines = 0;

  static int call(const char* line, void* user) {
    auto* self = static_cast<LogSink*>(user);
    ++self->lines;
    if (self->file) *self->file << line << '\n';
    if (self->every > 0 && self->lines % self->every == 0) std::cerr << line << '\n';
    return 1;
  }
};

struct TrainArgs {
  std::string data, out, log;
  int progress = 100;
};

int run_train(const TrainArgs& a, const ConfigFlags& flags, Manifest& m) {
  Config cfg = flags.resolve(m);
  m.set_config(cfg.get());
  Dataset data = load_data(a.data, m);
  std::ofstream log_file;
  LogSink sink;
  sink.every = a.progress;
  if (!a.log.empty()) {
    log_file.open(a.log);
    if (!log_file) throw Failure{kExitIo, "cannot write " + a.log};
    sink.file = &log_file;
  }
  wgae_model* raw = nullptr;
  check(wgae_train(data.get(), cfg.get(), a.out.c_str(), LogSink::call, &sink, &raw), "train");
  Model model(raw);
  check(wgae_model_save(model.get(), a.out.c_str()), "save");
  log_file.close();
  m.artifact(a.out);
  if (!a.log.empty()) m.artifact(a.log);
  m.write(manifest_path_for(a.out));
  return kExitOk;
}

struct EvalArgs {
  std::string task, data, checkpoint, out;
};

int run_eval(const EvalArgs& a, const ConfigFlags& flags, Manifest& m) {
  Dataset data = load_data(a.data, m);
  wgae_report* raw = nullptr;
  if (!a.checkpoint.empty()) {
    Model model = load_model(a.checkpoint, m);
    wgae_config* mc = nullptr;
    check(wgae_model_config(model.get(), &mc), "checkpoint");
    Config model_cfg(mc);
    m.set_config(model_cfg.get());
    check(wgae_evaluate_model(data.get(), model.get(), a.task.c_str(), &raw), "eval");
  } else {
    Config cfg = flags.resolve(m);
    m.set_config(cfg.get());
    auto log = [](const char* line, void*) {
      std::cerr << line << '\n';
      return 1;
    };
    check(wgae_evaluate(data.get(), cfg.get(), a.task.c_str(), log, nullptr, &raw), "eval");
  }
  Report report(raw);
  const std::string records = wgae_report_records(report.get());
  const std::string table = wgae_report_table(report.get());
  write_text(a.out, records + "\n" + table);
  std::cout << table;
  ordered_json metrics = ordered_json::object();
  std::istringstream names(table);
  // Metric names come from the table header: "metric mean std".
  for (std::string line; std::getline(names, line);) {
    std::istringstream row(line);
    std::string name;
    row >> name;
    double mean = 0, sd = 0;
    if (!name.empty() && wgae_report_metric(report.get(), name.c_str(), &mean, &sd) == WGAE_OK) {
      metrics[name] = {{"mean", mean}, {"std", sd}};
    }
  }
  m.extra["metrics"] = metrics;
  m.artifact(a.out);
  m.write(manifest_path_for(a.out));
  return kExitOk;
}

struct ExportArgs {
  std::string kind, checkpoint, data, out;
  int layer = 0, topic = 0, top_words = 10;
  std::vector<double> tau_phi;
  std::uint64_t node = 0;
  double tau_u = -1.0;
  bool json = false;
};

int run_export(const ExportArgs& a, Manifest& m) {
  Model model = load_model(a.checkpoint, m);
  Dataset data;
  if (!a.data.empty()) data = load_data(a.data, m);
  wgae_config* mc = nullptr;
  check(wgae_model_config(model.get(), &mc), "checkpoint");
  Config model_cfg(mc);
  m.set_config(model_cfg.get());
  char* text = nullptr;
  if (a.kind == "topic-tree") {
    int layer = a.layer;
    if (layer == 0) {
      const char* widths = nullptr;
      check(wgae_config_get(model_cfg.get(), "widths", &widths), "config");
      layer = 1 + static_cast<int>(std::count(widths, widths + std::strlen(widths), ','));
    }
    check(wgae_export_topic_tree(model.get(), data.get(), layer, a.topic, a.tau_phi.data(), a.tau_phi.size(),
                                 a.top_words, a.json, &text),
          "export");
  } else {
    check(wgae_export_subnetwork(model.get(), data.get(), a.node, a.tau_u, a.top_words, a.json, &text), "export");
  }
  write_text(a.out, take(text));
  m.artifact(a.out);
  m.write(manifest_path_for(a.out));
  return kExitOk;
}

struct SelftestArgs {
  std::vector<std::string> suites;
  std::string out;
};

int run_selftest(const SelftestArgs& a, Manifest& m) {
  std::vector<std::string> suites = a.suites;
  if (suites.empty()) {
    for (std::size_t i = 0; i < wgae_selftest_suite_count(); ++i) suites.emplace_back(wgae_selftest_suite_name(i));
  }
  std::ostringstream text;
  auto log = [](const char* line, void* user) {
    std::cout << line << '\n';
    *static_cast<std::ostringstream*>(user) << line << '\n';
    return 1;
  };
  bool all = true;
  ordered_json results = ordered_json::object();
  for (const auto& suite : suites) {
    int passed = 0;
    check(wgae_selftest_run(suite.c_str(), log, &text, &passed), "selftest");
    results[suite] = passed == 1;
    all = all && passed == 1;
  }
  std::cout << (all ? "selftest: all suites passed" : "selftest: FAILED") << "\n";
  if (!a.out.empty()) {
    write_text(a.out, text.str());
    m.artifact(a.out);
    m.extra["suites"] = results;
    m.write(manifest_path_for(a.out));
  }
  return all ? kExitOk : kExitNumeric;
}

int dispatch(const std::vector<std::string>& args);

// Re-runs the recorded command in its recorded directory and compares
// artifact digests.
int run_replay(const std::string& manifest_file) {
  std::ifstream in(manifest_file);
  if (!in) throw Failure{kExitIo, "cannot read " + manifest_file};
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw Failure{kExitData, manifest_file + ": " + e.what()};
  }
  if (!j.contains("argv") || !j.contains("cwd")) throw Failure{kExitData, manifest_file + ": not a run manifest"};
  const fs::path original = fs::current_path();
  fs::current_path(j["cwd"].get<std::string>());
  for (const auto& input : j["inputs"]) {
    const std::string path = input["path"];
    if (sha256_file(path) != input["sha256"].get<std::string>()) {
      fs::current_path(original);
      throw Failure{kExitData, "input changed since the manifest was written: " + path};
    }
  }
  std::vector<std::string> argv = j["argv"];
  const int status = dispatch(argv);
  int mismatches = 0;
  if (status == kExitOk) {
    for (const auto& art : j["artifacts"]) {
      const std::string path = art["path"];
      if (sha256_file(path) != art["sha256"].get<std::string>()) {
        std::cerr << "replay: " << path << " differs from the recorded output\n";
        ++mismatches;
      }
    }
  }
  fs::current_path(original);
  if (status != kExitOk) return status;
  if (mismatches > 0) return kExitNumeric;
  std::cout << "replay: " << j["artifacts"].size() << " artifact(s) reproduced\n";
  return kExitOk;
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Deep relational topic models on document networks."};
  app.name("wgae");
  app.require_subcommand(1);
  app.set_version_flag("--version", wgae_version());
  app.footer(
      "Exit status: 0 ok, 1 usage, 2 data error, 3 numerical failure, 4 i/o error, 5 internal error.\n"
      "WGAE_DATA_DIR supplies the base directory for recipe files and relative dataset paths.");

  Manifest manifest;
  manifest.argv = args;

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Convert a corpus and edge list into a dataset directory");
  c_ingest->add_option("--recipe", ingest.recipe, "ingestion recipe")->check(CLI::ExistingFile);
  c_ingest->add_option("--data-dir", ingest.data_dir, "base directory of recipe files (default $WGAE_DATA_DIR)");
  c_ingest->add_option("--features", ingest.features, "features file");
  c_ingest->add_option("--format", ingest.format, "triples or cora");
  c_ingest->add_option("--edges", ingest.edges, "edge list (cites file for cora)");
  c_ingest->add_option("--labels", ingest.labels, "'node label' lines");
  c_ingest->add_option("--vocab", ingest.vocabulary, "one word per line");
  c_ingest->add_option("--tau-a", ingest.tau_a, "cosine threshold for a feature-built graph");
  c_ingest->add_option("--out", ingest.out, "dataset directory")->required();

  TrainArgs train;
  ConfigFlags train_flags;
  auto* c_train = app.add_subcommand("train", "Train a model and write a checkpoint");
  c_train->add_option("--data", train.data, "dataset directory")->required();
  c_train->add_option("--out", train.out, "checkpoint file")->required();
  c_train->add_option("--log", train.log, "write every iteration record to this file");
  c_train->add_option("--progress", train.progress, "print every n-th record to stderr (0: quiet)");
  train_flags.attach(c_train);

  EvalArgs eval;
  ConfigFlags eval_flags;
  auto* c_eval = app.add_subcommand("eval", "Evaluate over seeds: link-pred, cluster or classify");
  c_eval->add_option("task", eval.task, "task")->required()->check(CLI::IsMember({"link-pred", "cluster", "classify"}));
  c_eval->add_option("--data", eval.data, "dataset directory")->required();
  c_eval->add_option("--checkpoint", eval.checkpoint, "score this model instead of training (cluster, classify)");
  c_eval->add_option("--out", eval.out, "report file")->required();
  eval_flags.attach(c_eval);

  ExportArgs exp;
  auto* c_export = app.add_subcommand("export", "Export a topic tree or a node's subnetwork");
  c_export->add_option("kind", exp.kind, "topic-tree or subnetwork")
      ->required()
      ->check(CLI::IsMember({"topic-tree", "subnetwork"}));
  c_export->add_option("--checkpoint", exp.checkpoint, "model checkpoint")->required();
  c_export->add_option("--data", exp.data, "dataset directory (vocabulary and node ids)");
  c_export->add_option("--layer", exp.layer, "root layer, 1-based (default: top)");
  c_export->add_option("--topic", exp.topic, "root topic");
  c_export->add_option("--tau-phi", exp.tau_phi, "tree thresholds, one per layer or one for all");
  c_export->add_option("--node", exp.node, "source node of the subnetwork");
  c_export->add_option("--tau-u", exp.tau_u, "subnetwork threshold (default: model config)");
  c_export->add_option("--top-words", exp.top_words, "words per topic");
  c_export->add_flag("--json", exp.json, "machine-readable graph instead of indented text");
  c_export->add_option("--out", exp.out, "output file")->required();

  SelftestArgs st;
  auto* c_selftest = app.add_subcommand("selftest", "Run the property and oracle suites");
  c_selftest->add_option("--suite", st.suites, "suite to run (repeatable; default all)");
  c_selftest->add_option("--out", st.out, "also write the report here");

  std::string replay_file;
  auto* c_replay = app.add_subcommand("replay", "Re-run a manifest and verify its outputs");
  c_replay->add_option("manifest", replay_file, "manifest file")->required();

  const auto commands = app.get_subcommands({});
  if (!args.empty() && !args.front().empty() && args.front()[0] != '-' &&
      std::none_of(commands.begin(), commands.end(),
                   [&](const CLI::App* sub) { return sub->get_name() == args.front(); })) {
    std::cerr << "wgae: unknown subcommand '" << args.front() << "'\n\n" << app.help();
    return kExitUsage;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "wgae: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*c_ingest) return manifest.command = "ingest", run_ingest(ingest, manifest);
    if (*c_train) return manifest.command = "train", run_train(train, train_flags, manifest);
    if (*c_eval) return manifest.command = "eval " + eval.task, run_eval(eval, eval_flags, manifest);
    if (*c_export) return manifest.command = "export " + exp.kind, run_export(exp, manifest);
    if (*c_selftest) return manifest.command = "selftest", run_selftest(st, manifest);
    if (*c_replay) return run_replay(replay_file);
  } catch (const Failure& f) {
    std::cerr << "wgae: " << f.message << "\n";
    return f.code;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "wgae: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return dispatch(args);
  } catch (const std::exception& e) {
    std::cerr << "wgae: " << e.what() << "\n";
    return WGAE_ERR_INTERNAL;
  }
}
