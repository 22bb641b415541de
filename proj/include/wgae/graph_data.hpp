#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

namespace wgae {

using Index = std::uint32_t;

struct CountEntry {
  Index node;
  Index term;
  std::uint32_t count;
};

// Bag-of-words features, one row per document (node), stored CSR by node.
class SparseCountMatrix {
 public:
  SparseCountMatrix() = default;
  // Validates: counts >= 1, indices in range, no duplicate (node, term).
  static SparseCountMatrix from_entries(Index num_nodes, Index vocab_size, std::vector<CountEntry> entries);

  Index num_nodes() const { return num_nodes_; }
  Index vocab_size() const { return vocab_size_; }
  std::size_t nnz() const { return terms_.size(); }

  std::span<const Index> terms(Index node) const {
    return {terms_.data() + offsets_[node], offsets_[node + 1] - offsets_[node]};
  }
  std::span<const std::uint32_t> counts(Index node) const {
    return {counts_.data() + offsets_[node], offsets_[node + 1] - offsets_[node]};
  }
  std::uint64_t row_total(Index node) const;
  std::vector<CountEntry> entries() const;

  // Rows `nodes` (in order, repeats allowed) as a new matrix.
  SparseCountMatrix select_rows(std::span<const Index> nodes) const;
  // N x V row-major sparse view of the counts as doubles.
  Eigen::SparseMatrix<double, Eigen::RowMajor> to_eigen() const;

 private:
  Index num_nodes_ = 0;
  Index vocab_size_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<Index> terms_;
  std::vector<std::uint32_t> counts_;
};

struct Edge {
  Index i;  // i < j
  Index j;
  std::uint32_t value = 1;
};

// Undirected graph without self-loops; edges stored once as (i < j).
class AdjacencyGraph {
 public:
  AdjacencyGraph() = default;
  // Collapses duplicates and orientation; rejects self-loops and out-of-range
  // endpoints. Duplicate count edges keep the maximum value.
  static AdjacencyGraph from_edges(Index num_nodes, std::vector<Edge> edges);

  Index num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::span<const Edge> edges() const { return edges_; }
  bool is_binary() const;

  std::span<const Index> neighbors(Index node) const {
    return {neighbors_.data() + offsets_[node], offsets_[node + 1] - offsets_[node]};
  }
  std::size_t degree(Index node) const { return offsets_[node + 1] - offsets_[node]; }
  bool has_edge(Index a, Index b) const;

  // Subgraph induced by `nodes` (deduplicated, order of first appearance
  // defines the new indices). Returns the graph and the kept original ids.
  std::pair<AdjacencyGraph, std::vector<Index>> induced(std::span<const Index> nodes) const;

 private:
  Index num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Index> neighbors_;
};

struct NormalizedAdjacency {
  Index num_nodes = 0;
  bool self_loops_added = false;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
};

using NodePair = std::pair<Index, Index>;

struct EdgeSplit {
  std::vector<NodePair> train_edges;
  std::vector<NodePair> val_edges;
  std::vector<NodePair> test_edges;
  std::vector<NodePair> val_nonedges;
  std::vector<NodePair> test_nonedges;
  std::uint64_t seed = 0;
};

struct LabelVector {
  std::vector<int> labels;  // -1 marks an unlabeled node
  int num_classes = 0;
  std::vector<std::string> class_names;
};

enum class CorpusFormat { kTsvTriples, kCoraContent };

struct Corpus {
  SparseCountMatrix features;
  std::optional<LabelVector> labels;
  std::optional<AdjacencyGraph> graph;
  std::vector<std::string> node_ids;  // original ids for remapped formats
};

// Triples file: "node term count" per line, 0-based, '#' comments. An
// optional "# nodes N vocab V" header fixes the dimensions.
Corpus load_triples(const std::filesystem::path& path);
// Cora layout: content "id f_1 ... f_V label", cites "citing cited". Ids are
// remapped to dense indices in content-file order.
Corpus load_cora(const std::filesystem::path& content, const std::optional<std::filesystem::path>& cites);
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
// "i j" per line; duplicates and reversed duplicates collapse.
AdjacencyGraph load_edge_list(const std::filesystem::path& path, Index num_nodes);
void write_id_map(const std::filesystem::path& path, std::span<const std::string> ids);

AdjacencyGraph build_cosine_adjacency(const SparseCountMatrix& x, double threshold);
NormalizedAdjacency normalize_adjacency(const AdjacencyGraph& a, bool add_self_loops);
EdgeSplit split_edges(const AdjacencyGraph& a, double val_frac, double test_frac, std::uint64_t seed);
AdjacencyGraph graph_from_pairs(Index num_nodes, std::span<const NodePair> pairs);

}  // namespace wgae
