#include "wgae/wgae.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <optional>
#include <sstream>
#include <string>

#include "wgae/error.hpp"
#include "wgae/export.hpp"
#include "wgae/selftest.hpp"
#include "wgae/tasks.hpp"

struct wgae_config {
  wgae::TrainConfig value;
  std::string scratch;
};

struct wgae_dataset {
  wgae::Dataset value;
};

struct wgae_model {
  wgae::Checkpoint value;
};

struct wgae_report {
  wgae::MetricsReport value;
  std::string records, table;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
wgae_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return WGAE_OK;
  } catch (const wgae::Error& e) {
    g_last_error = e.what();
    return static_cast<wgae_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown failure";
  }
  return WGAE_ERR_INTERNAL;
}

template <typename T>
const T& need(const T* p, const char* what) {
  if (!p) wgae::fail(wgae::ErrorCode::kUsage, std::string(what) + " is NULL");
  return *p;
}

template <typename T>
T& need(T* p, const char* what) {
  if (!p) wgae::fail(wgae::ErrorCode::kUsage, std::string(what) + " is NULL");
  return *p;
}

// Strings are passed through; only their presence is checked.
const char* need(const char* p, const char* what) {
  if (!p) wgae::fail(wgae::ErrorCode::kUsage, std::string(what) + " is NULL");
  return p;
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::optional<std::filesystem::path> optional_path(const char* p) {
  if (!p || !*p) return std::nullopt;
  return std::filesystem::path(p);
}

// Forwards each complete line of `text` to the callback.
void emit_lines(const std::string& text, wgae_log_fn log, void* user) {
  if (!log) return;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) log(line.c_str(), user);
}

std::span<const std::string> vocabulary_of(const wgae_dataset* data) {
  return data ? std::span<const std::string>(data->value.vocabulary) : std::span<const std::string>();
}

std::span<const std::string> names_of(const wgae_dataset* data) {
  return data ? std::span<const std::string>(data->value.node_ids) : std::span<const std::string>();
}

}  // namespace

extern "C" {

const char* wgae_version(void) { return "1.0.0"; }

const char* wgae_last_error(void) { return g_last_error.c_str(); }

void wgae_string_free(char* text) { std::free(text); }

// ---- configuration ----------------------------------------------------------

wgae_status wgae_config_create(wgae_config** out) {
  return guarded([&] { need(out, "out") = new wgae_config{}; });
}

wgae_status wgae_config_load(const char* path, wgae_config** out) {
  return guarded([&] {
    auto cfg = wgae::load_config(need(path, "path"));
    need(out, "out") = new wgae_config{std::move(cfg), {}};
  });
}

wgae_status wgae_config_copy(const wgae_config* config, wgae_config** out) {
  return guarded([&] { need(out, "out") = new wgae_config{need(config, "config").value, {}}; });
}

wgae_status wgae_config_set(wgae_config* config, const char* key, const char* value) {
  return guarded([&] { need(config, "config").value.set(need(key, "key"), need(value, "value")); });
}

wgae_status wgae_config_get(const wgae_config* config, const char* key, const char** value) {
  return guarded([&] {
    auto& c = const_cast<wgae_config&>(need(config, "config"));
    c.scratch = c.value.get(need(key, "key"));
    need(value, "value") = c.scratch.c_str();
  });
}

wgae_status wgae_config_validate(const wgae_config* config) {
  return guarded([&] { need(config, "config").value.validate(); });
}

wgae_status wgae_config_text(const wgae_config* config, const char** text) {
  return guarded([&] {
    auto& c = const_cast<wgae_config&>(need(config, "config"));
    c.scratch = wgae::to_text(c.value);
    need(text, "text") = c.scratch.c_str();
  });
}

size_t wgae_config_key_count(void) { return wgae::TrainConfig::keys().size(); }

const char* wgae_config_key(size_t index) {
  const auto& keys = wgae::TrainConfig::keys();
  return index < keys.size() ? keys[index].c_str() : nullptr;
}

void wgae_config_destroy(wgae_config* config) { delete config; }

// ---- datasets ---------------------------------------------------------------

wgae_status wgae_dataset_ingest(const wgae_ingest_options* options, wgae_dataset** out) {
  return guarded([&] {
    const auto& o = need(options, "options");
    wgae::IngestOptions in;
    in.features = need(o.features, "options.features");
    const std::string format = o.format ? o.format : "triples";
    if (format == "triples") {
      in.format = wgae::CorpusFormat::kTsvTriples;
    } else if (format == "cora") {
      in.format = wgae::CorpusFormat::kCoraContent;
    } else {
      wgae::fail(wgae::ErrorCode::kUsage, "unknown corpus format '" + format + "' (expected triples or cora)");
    }
    in.edges = optional_path(o.edges);
    in.labels = optional_path(o.labels);
    in.vocabulary = optional_path(o.vocabulary);
    in.tau_a = o.tau_a;
    auto data = wgae::ingest(in);
    need(out, "out") = new wgae_dataset{std::move(data)};
  });
}

wgae_status wgae_dataset_save(const wgae_dataset* data, const char* dir) {
  return guarded([&] { wgae::save_dataset(need(data, "data").value, need(dir, "dir")); });
}

wgae_status wgae_dataset_load(const char* dir, wgae_dataset** out) {
  return guarded([&] {
    auto data = wgae::load_dataset(need(dir, "dir"));
    need(out, "out") = new wgae_dataset{std::move(data)};
  });
}

wgae_status wgae_dataset_info_get(const wgae_dataset* data, wgae_dataset_info* out) {
  return guarded([&] {
    const auto& d = need(data, "data").value;
    auto& info = need(out, "out");
    info = {};
    info.nodes = d.features.num_nodes();
    info.vocab = d.features.vocab_size();
    info.nonzeros = d.features.nnz();
    info.edges = d.graph.num_edges();
    if (d.labels) {
      info.classes = d.labels->num_classes;
      for (int y : d.labels->labels) info.labeled += y >= 0;
    }
    info.has_vocabulary = !d.vocabulary.empty();
  });
}

wgae_status wgae_dataset_files(const char* dir, char** out) {
  return guarded([&] {
    std::string list;
    for (const auto& p : wgae::dataset_files(need(dir, "dir"))) list += p.string() + '\n';
    need(out, "out") = duplicate(list);
  });
}

void wgae_dataset_destroy(wgae_dataset* data) { delete data; }

// ---- training ---------------------------------------------------------------

wgae_status wgae_train(const wgae_dataset* data, const wgae_config* config, const char* checkpoint, wgae_log_fn log,
                       void* user, wgae_model** out) {
  return guarded([&] {
    const auto& d = need(data, "data").value;
    const auto& c = need(config, "config").value;
    need(out, "out");
    wgae::TrainHooks hooks;
    hooks.checkpoint_path = optional_path(checkpoint);
    if (log) {
      hooks.on_iteration = [&](const wgae::IterationRecord& r, const wgae::DecoderState&, const wgae::EncoderWeights&) {
        return log(wgae::to_text(r).c_str(), user) != 0;
      };
    }
    auto result = wgae::train_on_dataset(d, c, hooks);
    *out = new wgae_model{{c, std::move(result.decoder), std::move(result.encoder)}};
  });
}

wgae_status wgae_model_save(const wgae_model* model, const char* path) {
  return guarded([&] { wgae::save_checkpoint(need(path, "path"), need(model, "model").value); });
}

wgae_status wgae_model_load(const char* path, wgae_model** out) {
  return guarded([&] {
    auto c = wgae::load_checkpoint(need(path, "path"));
    need(out, "out") = new wgae_model{std::move(c)};
  });
}

wgae_status wgae_model_config(const wgae_model* model, wgae_config** out) {
  return guarded([&] { need(out, "out") = new wgae_config{need(model, "model").value.config, {}}; });
}

void wgae_model_destroy(wgae_model* model) { delete model; }

// ---- evaluation -------------------------------------------------------------

wgae_status wgae_evaluate(const wgae_dataset* data, const wgae_config* config, const char* task, wgae_log_fn log,
                          void* user, wgae_report** out) {
  return guarded([&] {
    const auto& d = need(data, "data").value;
    const auto& c = need(config, "config").value;
    const std::string t = need(task, "task");
    need(out, "out");
    std::ostringstream progress;
    wgae::MetricsReport report;
    if (t == "link-pred") {
      report = wgae::evaluate_link_prediction(d, c, &progress);
    } else if (t == "cluster") {
      report = wgae::evaluate_clustering(d, c, &progress);
    } else if (t == "classify") {
      report = wgae::evaluate_classification(d, c, &progress);
    } else {
      wgae::fail(wgae::ErrorCode::kUsage, "unknown task '" + t + "' (expected link-pred, cluster or classify)");
    }
    emit_lines(progress.str(), log, user);
    *out = new wgae_report{report, report.to_records(), report.to_table()};
  });
}

wgae_status wgae_evaluate_model(const wgae_dataset* data, const wgae_model* model, const char* task,
                                wgae_report** out) {
  return guarded([&] {
    const auto& d = need(data, "data").value;
    const auto& m = need(model, "model").value;
    const std::string t = need(task, "task");
    need(out, "out");
    wgae::MetricsReport report;
    if (t == "cluster") {
      report = wgae::evaluate_clustering(d, m);
    } else if (t == "classify") {
      report = wgae::evaluate_classification(d, m);
    } else if (t == "link-pred") {
      wgae::fail(wgae::ErrorCode::kUsage, "link-pred trains on each seed's own split; evaluate it from a config");
    } else {
      wgae::fail(wgae::ErrorCode::kUsage, "unknown task '" + t + "' (expected cluster or classify)");
    }
    *out = new wgae_report{report, report.to_records(), report.to_table()};
  });
}

const char* wgae_report_records(const wgae_report* report) { return report ? report->records.c_str() : ""; }

const char* wgae_report_table(const wgae_report* report) { return report ? report->table.c_str() : ""; }

wgae_status wgae_report_metric(const wgae_report* report, const char* metric, double* mean, double* stddev) {
  return guarded([&] {
    const auto& r = need(report, "report").value;
    const std::string name = need(metric, "metric");
    const auto names = r.metric_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      wgae::fail(wgae::ErrorCode::kUsage, "report has no metric '" + name + "'");
    }
    if (mean) *mean = r.mean(name);
    if (stddev) *stddev = r.stddev(name);
  });
}

void wgae_report_destroy(wgae_report* report) { delete report; }

// ---- export -----------------------------------------------------------------

wgae_status wgae_export_topic_tree(const wgae_model* model, const wgae_dataset* data, int layer, int topic,
                                   const double* tau_phi, size_t n_tau, int top_words, int json, char** out) {
  return guarded([&] {
    const auto& m = need(model, "model").value;
    need(out, "out");
    std::vector<double> tau = m.config.tau_phi;
    if (n_tau > 0) tau.assign(&need(tau_phi, "tau_phi"), tau_phi + n_tau);
    const auto tree = wgae::export_topic_tree(m.decoder, layer, topic, tau, vocabulary_of(data), top_words);
    *out = duplicate(json ? wgae::to_json(tree) + "\n" : wgae::to_text(tree));
  });
}

wgae_status wgae_export_subnetwork(const wgae_model* model, const wgae_dataset* data, uint64_t node, double tau_u,
                                   int top_words, int json, char** out) {
  return guarded([&] {
    const auto& m = need(model, "model").value;
    need(out, "out");
    if (node >= m.decoder.num_nodes) {
      wgae::fail(wgae::ErrorCode::kUsage, "subnetwork source node " + std::to_string(node) + " out of range (" +
                                              std::to_string(m.decoder.num_nodes) + " nodes)");
    }
    const double tau = tau_u < 0 ? m.config.tau_u : tau_u;
    const auto net = wgae::export_subnetwork(m.decoder, static_cast<wgae::Index>(node), tau, vocabulary_of(data),
                                             top_words);
    *out = duplicate(json ? wgae::to_json(net, names_of(data)) + "\n" : wgae::to_text(net, names_of(data)));
  });
}

// ---- self-test --------------------------------------------------------------

size_t wgae_selftest_suite_count(void) { return wgae::selftest_suite_names().size(); }

const char* wgae_selftest_suite_name(size_t index) {
  const auto& names = wgae::selftest_suite_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

wgae_status wgae_selftest_run(const char* suite, wgae_log_fn log, void* user, int* passed) {
  return guarded([&] {
    const auto result = wgae::run_selftest_suite(need(suite, "suite"));
    emit_lines(wgae::to_text(result), log, user);
    if (passed) *passed = result.passed() ? 1 : 0;
  });
}

}  // extern "C"
