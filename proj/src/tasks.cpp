#include "wgae/tasks.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "wgae/error.hpp"

namespace wgae {
namespace {

namespace fs = std::filesystem;

constexpr const char* kDatasetMagic = "wgae-dataset 1";

std::ifstream open_or_fail(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return in;
}

std::ofstream create_or_fail(const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

std::vector<std::string> tokens_of(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

long long to_index(const std::string& token, const fs::path& path, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(token, &used);
    if (used == token.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": bad integer '" + token + "'");
}

AdjacencyGraph graph_for(const Dataset& data, const TrainConfig& config) {
  if (data.graph.num_edges() == 0 && config.tau_a > 0.0) return build_cosine_adjacency(data.features, config.tau_a);
  return data.graph;
}

const LabelVector& require_labels(const Dataset& data, const std::string& task) {
  require(data.labels.has_value(), ErrorCode::kData, task + " needs node labels; the dataset has none");
  return *data.labels;
}

TrainConfig run_config(const TrainConfig& base, int run) {
  TrainConfig c = base;
  c.seed = base.seed + static_cast<std::uint64_t>(run);
  return c;
}

// Runs `body(run, log)` for every seed on up to config.threads workers.
// Logs are buffered per run and flushed in seed order; the first error
// (lowest run index) is rethrown.
template <typename Body>
MetricsReport run_seeds(const std::string& task, const TrainConfig& config, std::ostream* log, Body body) {
  const auto start = std::chrono::steady_clock::now();
  const int runs = config.eval_seeds;
  MetricsReport report;
  report.task = task;
  report.runs.resize(static_cast<std::size_t>(runs));
  std::vector<std::string> logs(static_cast<std::size_t>(runs));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(runs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < runs; r = next++) {
      std::ostringstream out;
      try {
        report.runs[r].seed = config.seed + static_cast<std::uint64_t>(r);
        report.runs[r].values = body(r, out);
      } catch (...) {
        errors[r] = std::current_exception();
      }
      logs[r] = out.str();
    }
  };
  const int workers = std::max(1, std::min(config.threads, runs));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (int r = 0; r < runs; ++r) {
    if (log) *log << logs[r];
    if (errors[r]) std::rethrow_exception(errors[r]);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::map<std::string, double> classification_metrics(const Dataset& data, const TrainConfig& config,
                                                     const TrainResult& model) {
  const auto& labels = data.labels->labels;
  const auto split = label_split_for(data, config);
  const auto theta = infer_theta(model.encoder, model.decoder, data.features, graph_for(data, config));
  std::map<std::string, double> m;
  if (!split.val.empty()) m["val_acc"] = classify_nodes(model.encoder, theta[0], labels, split.val);
  m["acc"] = classify_nodes(model.encoder, theta[0], labels, split.test);
  return m;
}

}  // namespace

std::vector<std::string> load_vocabulary(const fs::path& path) {
  auto in = open_or_fail(path);
  std::vector<std::string> words;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    words.push_back(line);
  }
  return words;
}

LabelVector load_labels(const fs::path& path, Index num_nodes) {
  auto in = open_or_fail(path);
  std::vector<std::pair<Index, std::string>> raw;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto t = tokens_of(line);
    if (t.empty() || t[0].front() == '#') continue;
    if (t.size() != 2) fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": expected 'node label'");
    const long long node = to_index(t[0], path, line_no);
    if (node < 0 || node >= num_nodes) {
      fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": node index out of range");
    }
    raw.emplace_back(static_cast<Index>(node), t[1]);
  }
  LabelVector out;
  for (const auto& [node, name] : raw) out.class_names.push_back(name);
  std::sort(out.class_names.begin(), out.class_names.end());
  out.class_names.erase(std::unique(out.class_names.begin(), out.class_names.end()), out.class_names.end());
  out.num_classes = static_cast<int>(out.class_names.size());
  out.labels.assign(num_nodes, -1);
  for (const auto& [node, name] : raw) {
    const int c = static_cast<int>(std::lower_bound(out.class_names.begin(), out.class_names.end(), name) -
                                   out.class_names.begin());
    if (out.labels[node] >= 0 && out.labels[node] != c) {
      fail(ErrorCode::kData, path.string() + ": node " + std::to_string(node) + " has two labels");
    }
    out.labels[node] = c;
  }
  return out;
}

Dataset ingest(const IngestOptions& options) {
  Dataset data;
  Corpus corpus = options.format == CorpusFormat::kCoraContent ? load_cora(options.features, options.edges)
                                                                : load_triples(options.features);
  data.features = std::move(corpus.features);
  data.node_ids = std::move(corpus.node_ids);
  data.labels = std::move(corpus.labels);
  const Index n = data.features.num_nodes();
  if (corpus.graph) {
    data.graph = std::move(*corpus.graph);
  } else if (options.edges) {
    data.graph = load_edge_list(*options.edges, n);
  } else if (options.tau_a > 0.0) {
    data.graph = build_cosine_adjacency(data.features, options.tau_a);
  } else {
    data.graph = AdjacencyGraph::from_edges(n, {});
  }
  if (options.labels) {
    require(!data.labels, ErrorCode::kUsage, "labels given twice (the corpus format already carries labels)");
    data.labels = load_labels(*options.labels, n);
  }
  if (options.vocabulary) {
    data.vocabulary = load_vocabulary(*options.vocabulary);
    require(data.vocabulary.size() == data.features.vocab_size(), ErrorCode::kData,
            options.vocabulary->string() + ": " + std::to_string(data.vocabulary.size()) + " words for a vocabulary of " +
                std::to_string(data.features.vocab_size()));
  }
  return data;
}

void save_dataset(const Dataset& data, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  {
    auto out = create_or_fail(dir / "features.tsv");
    out << "# nodes " << data.features.num_nodes() << " vocab " << data.features.vocab_size() << '\n';
    for (const auto& e : data.features.entries()) out << e.node << '\t' << e.term << '\t' << e.count << '\n';
  }
  {
    auto out = create_or_fail(dir / "edges.tsv");
    const bool binary = data.graph.is_binary();
    for (const auto& e : data.graph.edges()) {
      out << e.i << '\t' << e.j;
      if (!binary) out << '\t' << e.value;
      out << '\n';
    }
  }
  if (data.labels) {
    auto out = create_or_fail(dir / "labels.tsv");
    out << "# classes";
    for (const auto& name : data.labels->class_names) out << ' ' << name;
    out << '\n';
    for (std::size_t i = 0; i < data.labels->labels.size(); ++i) {
      if (data.labels->labels[i] >= 0) out << i << '\t' << data.labels->labels[i] << '\n';
    }
  }
  if (!data.vocabulary.empty()) {
    auto out = create_or_fail(dir / "vocab.txt");
    for (const auto& w : data.vocabulary) out << w << '\n';
  }
  if (!data.node_ids.empty()) write_id_map(dir / "ids.tsv", data.node_ids);
  auto out = create_or_fail(dir / "dataset.txt");
  out << kDatasetMagic << "\nnodes " << data.features.num_nodes() << "\nvocab " << data.features.vocab_size()
      << "\nedges " << data.graph.num_edges() << "\nclasses " << (data.labels ? data.labels->num_classes : 0) << '\n';
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const char* name : {"dataset.txt", "features.tsv", "edges.tsv", "labels.tsv", "vocab.txt", "ids.tsv"}) {
    if (fs::exists(dir / name)) out.push_back(dir / name);
  }
  return out;
}

Dataset load_dataset(const fs::path& dir) {
  {
    auto in = open_or_fail(dir / "dataset.txt");
    std::string magic;
    std::getline(in, magic);
    require(magic == kDatasetMagic, ErrorCode::kData, (dir / "dataset.txt").string() + ": not a dataset manifest");
  }
  Dataset data;
  data.features = load_triples(dir / "features.tsv").features;
  const Index n = data.features.num_nodes();
  data.graph = load_edge_list(dir / "edges.tsv", n);
  if (fs::exists(dir / "labels.tsv")) {
    const fs::path path = dir / "labels.tsv";
    auto in = open_or_fail(path);
    LabelVector labels;
    labels.labels.assign(n, -1);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      auto t = tokens_of(line);
      if (t.empty()) continue;
      if (t[0] == "#" && t.size() >= 2 && t[1] == "classes") {
        labels.class_names.assign(t.begin() + 2, t.end());
        continue;
      }
      if (t.size() != 2) fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": expected 'node class'");
      const long long node = to_index(t[0], path, line_no);
      const long long c = to_index(t[1], path, line_no);
      if (node < 0 || node >= n || c < 0 || c >= static_cast<long long>(labels.class_names.size())) {
        fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": index out of range");
      }
      labels.labels[node] = static_cast<int>(c);
    }
    labels.num_classes = static_cast<int>(labels.class_names.size());
    data.labels = std::move(labels);
  }
  if (fs::exists(dir / "vocab.txt")) {
    data.vocabulary = load_vocabulary(dir / "vocab.txt");
    require(data.vocabulary.size() == data.features.vocab_size(), ErrorCode::kData,
            (dir / "vocab.txt").string() + ": length does not match the vocabulary size");
  }
  if (fs::exists(dir / "ids.tsv")) {
    auto in = open_or_fail(dir / "ids.tsv");
    for (std::string line; std::getline(in, line);) {
      const auto tab = line.find('\t');
      if (tab != std::string::npos) data.node_ids.push_back(line.substr(tab + 1));
    }
    require(data.node_ids.size() == n, ErrorCode::kData, (dir / "ids.tsv").string() + ": one id per node required");
  }
  return data;
}

LabelSplit label_split_for(const Dataset& data, const TrainConfig& config) {
  const auto& labels = require_labels(data, "the label split");
  return standard_label_split(labels.labels, labels.num_classes, config.label_per_class, config.label_val,
                              config.label_test, config.seed);
}

TrainResult train_on_dataset(const Dataset& data, const TrainConfig& config, const TrainHooks& hooks) {
  const AdjacencyGraph graph = graph_for(data, config);
  if (!config.supervised) return train(data.features, graph, config, nullptr, hooks);
  const auto& labels = require_labels(data, "supervised training");
  const auto split = label_split_for(data, config);
  const auto visible = mask_labels(labels.labels, split.train);
  return train(data.features, graph, config, &visible, hooks, labels.num_classes);
}

MetricsReport evaluate_link_prediction(const Dataset& data, const TrainConfig& config, std::ostream* log) {
  config.validate_for(data.features.num_nodes());
  const AdjacencyGraph full = graph_for(data, config);
  require(full.num_edges() > 0, ErrorCode::kData, "link prediction needs a graph with edges");
  return run_seeds("link-pred", config, log, [&](int r, std::ostream& out) {
    TrainConfig c = run_config(config, r);
    c.supervised = false;
    const EdgeSplit split = split_edges(full, c.val_frac, c.test_frac, c.seed);
    Dataset train_view;
    train_view.features = data.features;
    train_view.graph = graph_from_pairs(data.features.num_nodes(), split.train_edges);
    const TrainResult model = train_on_dataset(train_view, c);
    const auto scores = link_prediction_eval(
        model, data.features, split, c.sample_scoring ? ThetaScoring::kSampleAverage : ThetaScoring::kPosteriorMean,
        c.score_samples, c.seed);
    out << "link-pred seed=" << c.seed << " train_edges=" << split.train_edges.size()
        << " final_elbo=" << (model.log.empty() ? 0.0 : model.log.back().elbo) << '\n';
    std::map<std::string, double> m{{"auc", scores.test.auc}, {"ap", scores.test.ap}};
    if (!split.val_edges.empty()) {
      m["val_auc"] = scores.val.auc;
      m["val_ap"] = scores.val.ap;
    }
    return m;
  });
}

MetricsReport evaluate_clustering(const Dataset& data, const TrainConfig& config, std::ostream* log) {
  config.validate_for(data.features.num_nodes());
  const auto& labels = require_labels(data, "clustering");
  return run_seeds("cluster", config, log, [&](int r, std::ostream& out) {
    TrainConfig c = run_config(config, r);
    c.supervised = false;
    const TrainResult model = train_on_dataset(data, c);
    const auto theta = infer_theta(model.encoder, model.decoder, data.features, graph_for(data, c));
    const auto scores = cluster_nodes(theta, labels.num_classes, labels.labels, c.seed);
    out << "cluster seed=" << c.seed << " final_elbo=" << (model.log.empty() ? 0.0 : model.log.back().elbo) << '\n';
    return std::map<std::string, double>{{"acc", scores.acc}, {"nmi", scores.nmi}};
  });
}

MetricsReport evaluate_classification(const Dataset& data, const TrainConfig& config, std::ostream* log) {
  config.validate_for(data.features.num_nodes());
  require_labels(data, "classification");
  return run_seeds("classify", config, log, [&](int r, std::ostream& out) {
    TrainConfig c = run_config(config, r);
    c.supervised = true;
    const TrainResult model = train_on_dataset(data, c);
    out << "classify seed=" << c.seed << " final_elbo=" << (model.log.empty() ? 0.0 : model.log.back().elbo) << '\n';
    return classification_metrics(data, c, model);
  });
}

MetricsReport evaluate_clustering(const Dataset& data, const Checkpoint& model) {
  const auto& labels = require_labels(data, "clustering");
  TrainConfig c = model.config;
  c.eval_seeds = 1;
  c.threads = 1;
  return run_seeds("cluster", c, nullptr, [&](int, std::ostream&) {
    const auto theta = infer_theta(model.encoder, model.decoder, data.features, graph_for(data, c));
    const auto scores = cluster_nodes(theta, labels.num_classes, labels.labels, c.seed);
    return std::map<std::string, double>{{"acc", scores.acc}, {"nmi", scores.nmi}};
  });
}

MetricsReport evaluate_classification(const Dataset& data, const Checkpoint& model) {
  require_labels(data, "classification");
  require(model.encoder.num_classes() > 0, ErrorCode::kUsage,
          "classification needs a checkpoint trained with supervised = true");
  TrainConfig c = model.config;
  c.eval_seeds = 1;
  c.threads = 1;
  const TrainResult result{model.decoder, model.encoder, {}};
  return run_seeds("classify", c, nullptr,
                   [&](int, std::ostream&) { return classification_metrics(data, c, result); });
}

}  // namespace wgae
