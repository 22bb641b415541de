#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wgae/evaluation.hpp"
#include "wgae/graph_data.hpp"
#include "wgae/training.hpp"

namespace wgae {

// Everything one run reads: features, graph, optional labels and names.
struct Dataset {
  SparseCountMatrix features;
  AdjacencyGraph graph;
  std::optional<LabelVector> labels;
  std::vector<std::string> vocabulary;  // empty or one word per term
  std::vector<std::string> node_ids;    // empty or one id per node
};

struct IngestOptions {
  std::filesystem::path features;
  CorpusFormat format = CorpusFormat::kTsvTriples;
  std::optional<std::filesystem::path> edges;  // edge list, or the cites file for the Cora layout
  std::optional<std::filesystem::path> labels;  // "node label" lines
  std::optional<std::filesystem::path> vocabulary;  // one word per line
  double tau_a = 0.0;  // > 0 builds the graph from cosine similarity when no edges are given
};

Dataset ingest(const IngestOptions& options);

// Directory layout: dataset.txt, features.tsv, edges.tsv and, when present,
// labels.tsv, vocab.txt, ids.tsv.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);
// Files written by save_dataset, in a fixed order (for digests).
std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& dir);

std::vector<std::string> load_vocabulary(const std::filesystem::path& path);
// "node label" per line; class ids follow the sorted label names.
LabelVector load_labels(const std::filesystem::path& path, Index num_nodes);

// Labels visible to supervised training: the per-class training nodes of
// standard_label_split(config.seed).
LabelSplit label_split_for(const Dataset& data, const TrainConfig& config);

// Trains on the dataset graph (or the cosine graph when the dataset has no
// edges and config.tau_a > 0). Supervised runs see only the training labels.
TrainResult train_on_dataset(const Dataset& data, const TrainConfig& config, const TrainHooks& hooks = {});

// Each task runs config.eval_seeds independent runs with seeds config.seed,
// config.seed + 1, ...; up to config.threads runs execute concurrently.
// `log` receives per-run progress lines in seed order.
//   link-pred: split edges, train on the train graph, score val/test pairs.
//   cluster:   train unsupervised, k-means on all layers' theta.
//   classify:  train supervised on the label split, score val/test nodes.
MetricsReport evaluate_link_prediction(const Dataset& data, const TrainConfig& config, std::ostream* log = nullptr);
MetricsReport evaluate_clustering(const Dataset& data, const TrainConfig& config, std::ostream* log = nullptr);
MetricsReport evaluate_classification(const Dataset& data, const TrainConfig& config, std::ostream* log = nullptr);

// Single-run evaluation of an existing checkpoint.
MetricsReport evaluate_clustering(const Dataset& data, const Checkpoint& model);
MetricsReport evaluate_classification(const Dataset& data, const Checkpoint& model);

}  // namespace wgae
