#include "wgae/graph_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "wgae/error.hpp"
#include "wgae/random.hpp"

namespace wgae {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
    out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

std::int64_t parse_int(std::string_view token, const std::filesystem::path& path, std::size_t line_no) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": expected an integer, got '" +
                               std::string(token) + "'");
  }
  return value;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return in;
}

std::uint64_t pair_key(Index i, Index j) {
  if (i > j) std::swap(i, j);
  return (static_cast<std::uint64_t>(i) << 32) | j;
}

std::size_t split_count(std::size_t total, double frac) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(total) * frac + 1e-9));
}

}  // namespace

SparseCountMatrix SparseCountMatrix::from_entries(Index num_nodes, Index vocab_size, std::vector<CountEntry> entries) {
  for (const auto& e : entries) {
    require(e.node < num_nodes && e.term < vocab_size, ErrorCode::kData,
            "count entry (" + std::to_string(e.node) + ", " + std::to_string(e.term) + ") out of range");
    require(e.count >= 1, ErrorCode::kData, "count entries must be positive");
  }
  std::sort(entries.begin(), entries.end(), [](const CountEntry& a, const CountEntry& b) {
    return a.node != b.node ? a.node < b.node : a.term < b.term;
  });
  SparseCountMatrix m;
  m.num_nodes_ = num_nodes;
  m.vocab_size_ = vocab_size;
  m.offsets_.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  m.terms_.reserve(entries.size());
  m.counts_.reserve(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (k > 0 && entries[k].node == entries[k - 1].node && entries[k].term == entries[k - 1].term) {
      fail(ErrorCode::kData, "duplicate entry for node " + std::to_string(entries[k].node) + ", term " +
                                 std::to_string(entries[k].term));
    }
    ++m.offsets_[entries[k].node + 1];
    m.terms_.push_back(entries[k].term);
    m.counts_.push_back(entries[k].count);
  }
  for (std::size_t n = 0; n < num_nodes; ++n) m.offsets_[n + 1] += m.offsets_[n];
  return m;
}

std::uint64_t SparseCountMatrix::row_total(Index node) const {
  std::uint64_t total = 0;
  for (auto c : counts(node)) total += c;
  return total;
}

std::vector<CountEntry> SparseCountMatrix::entries() const {
  std::vector<CountEntry> out;
  out.reserve(nnz());
  for (Index n = 0; n < num_nodes_; ++n) {
    const auto t = terms(n);
    const auto c = counts(n);
    for (std::size_t k = 0; k < t.size(); ++k) out.push_back({n, t[k], c[k]});
  }
  return out;
}

SparseCountMatrix SparseCountMatrix::select_rows(std::span<const Index> nodes) const {
  SparseCountMatrix m;
  m.num_nodes_ = static_cast<Index>(nodes.size());
  m.vocab_size_ = vocab_size_;
  m.offsets_.assign(nodes.size() + 1, 0);
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    const auto t = terms(nodes[r]);
    const auto c = counts(nodes[r]);
    m.terms_.insert(m.terms_.end(), t.begin(), t.end());
    m.counts_.insert(m.counts_.end(), c.begin(), c.end());
    m.offsets_[r + 1] = m.terms_.size();
  }
  return m;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> SparseCountMatrix::to_eigen() const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(nnz());
  for (Index n = 0; n < num_nodes_; ++n) {
    const auto t = terms(n);
    const auto c = counts(n);
    for (std::size_t k = 0; k < t.size(); ++k) trip.emplace_back(n, t[k], static_cast<double>(c[k]));
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> out(num_nodes_, vocab_size_);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

AdjacencyGraph AdjacencyGraph::from_edges(Index num_nodes, std::vector<Edge> edges) {
  for (auto& e : edges) {
    require(e.i < num_nodes && e.j < num_nodes, ErrorCode::kData,
            "edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ") out of range");
    require(e.i != e.j, ErrorCode::kData, "self-loop at node " + std::to_string(e.i));
    require(e.value >= 1, ErrorCode::kData, "edge values must be positive");
    if (e.i > e.j) std::swap(e.i, e.j);
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : (a.j != b.j ? a.j < b.j : a.value > b.value);
  });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const Edge& a, const Edge& b) { return a.i == b.i && a.j == b.j; }),
              edges.end());
  AdjacencyGraph g;
  g.num_nodes_ = num_nodes;
  g.edges_ = std::move(edges);
  g.offsets_.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  for (const auto& e : g.edges_) {
    ++g.offsets_[e.i + 1];
    ++g.offsets_[e.j + 1];
  }
  for (std::size_t n = 0; n < num_nodes; ++n) g.offsets_[n + 1] += g.offsets_[n];
  g.neighbors_.resize(g.edges_.size() * 2);
  std::vector<std::size_t> fill(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& e : g.edges_) {
    g.neighbors_[fill[e.i]++] = e.j;
    g.neighbors_[fill[e.j]++] = e.i;
  }
  for (Index n = 0; n < num_nodes; ++n) {
    std::sort(g.neighbors_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[n]),
              g.neighbors_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[n + 1]));
  }
  return g;
}

bool AdjacencyGraph::is_binary() const {
  return std::all_of(edges_.begin(), edges_.end(), [](const Edge& e) { return e.value == 1; });
}

bool AdjacencyGraph::has_edge(Index a, Index b) const {
  if (a >= num_nodes_ || b >= num_nodes_) return false;
  const auto nb = neighbors(a);
  return std::binary_search(nb.begin(), nb.end(), b);
}

std::pair<AdjacencyGraph, std::vector<Index>> AdjacencyGraph::induced(std::span<const Index> nodes) const {
  std::unordered_map<Index, Index> local;
  std::vector<Index> kept;
  for (Index n : nodes) {
    if (local.emplace(n, static_cast<Index>(kept.size())).second) kept.push_back(n);
  }
  std::vector<Edge> sub;
  for (Index a = 0; a < kept.size(); ++a) {
    for (Index nb : neighbors(kept[a])) {
      const auto it = local.find(nb);
      if (it != local.end() && a < it->second) sub.push_back({a, it->second, 1});
    }
  }
  return {from_edges(static_cast<Index>(kept.size()), std::move(sub)), std::move(kept)};
}

Corpus load_triples(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<CountEntry> entries;
  std::optional<Index> header_nodes, header_vocab;
  Index max_node = 0, max_term = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens[0].front() == '#') {
      for (std::size_t k = 1; k + 1 < tokens.size(); ++k) {
        if (tokens[k] == "nodes") header_nodes = static_cast<Index>(parse_int(tokens[k + 1], path, line_no));
        if (tokens[k] == "vocab") header_vocab = static_cast<Index>(parse_int(tokens[k + 1], path, line_no));
      }
      continue;
    }
    if (tokens.size() != 3) {
      fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": expected 'node term count'");
    }
    const auto node = parse_int(tokens[0], path, line_no);
    const auto term = parse_int(tokens[1], path, line_no);
    const auto count = parse_int(tokens[2], path, line_no);
    if (node < 0 || term < 0) {
      fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": negative index");
    }
    if (count < 0) fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": negative count");
    if (count == 0) continue;
    entries.push_back({static_cast<Index>(node), static_cast<Index>(term), static_cast<std::uint32_t>(count)});
    max_node = std::max(max_node, static_cast<Index>(node));
    max_term = std::max(max_term, static_cast<Index>(term));
  }
  if (entries.empty() && !header_nodes) fail(ErrorCode::kData, path.string() + ": no nodes");
  const Index nodes = header_nodes.value_or(max_node + 1);
  const Index vocab = header_vocab.value_or(max_term + 1);
  Corpus corpus;
  corpus.features = SparseCountMatrix::from_entries(nodes, vocab, std::move(entries));
  return corpus;
}

Corpus load_cora(const std::filesystem::path& content, const std::optional<std::filesystem::path>& cites) {
  auto in = open_input(content);
  std::vector<std::string> ids;
  std::vector<std::string> raw_labels;
  std::vector<CountEntry> entries;
  std::unordered_map<std::string, Index> id_index;
  std::optional<std::size_t> width;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() < 3) {
      fail(ErrorCode::kData, content.string() + ": line " + std::to_string(line_no) + ": expected 'id features... label'");
    }
    const std::size_t vocab = tokens.size() - 2;
    if (width && *width != vocab) {
      fail(ErrorCode::kData, content.string() + ": line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(*width) + " features, got " + std::to_string(vocab));
    }
    width = vocab;
    const auto node = static_cast<Index>(ids.size());
    std::string id(tokens[0]);
    if (!id_index.emplace(id, node).second) {
      fail(ErrorCode::kData, content.string() + ": line " + std::to_string(line_no) + ": duplicate id " + id);
    }
    ids.push_back(std::move(id));
    for (std::size_t v = 0; v < vocab; ++v) {
      const auto c = parse_int(tokens[v + 1], content, line_no);
      if (c < 0) fail(ErrorCode::kData, content.string() + ": line " + std::to_string(line_no) + ": negative count");
      if (c > 0) entries.push_back({node, static_cast<Index>(v), static_cast<std::uint32_t>(c)});
    }
    raw_labels.emplace_back(tokens.back());
  }
  if (ids.empty()) fail(ErrorCode::kData, content.string() + ": no nodes");

  Corpus corpus;
  const auto n = static_cast<Index>(ids.size());
  corpus.features = SparseCountMatrix::from_entries(n, static_cast<Index>(*width), std::move(entries));
  std::set<std::string> names(raw_labels.begin(), raw_labels.end());
  LabelVector labels;
  labels.class_names.assign(names.begin(), names.end());
  labels.num_classes = static_cast<int>(labels.class_names.size());
  for (const auto& raw : raw_labels) {
    labels.labels.push_back(static_cast<int>(
        std::lower_bound(labels.class_names.begin(), labels.class_names.end(), raw) - labels.class_names.begin()));
  }
  corpus.labels = std::move(labels);

  if (cites) {
    auto cin = open_input(*cites);
    std::vector<Edge> edges;
    line_no = 0;
    while (std::getline(cin, line)) {
      ++line_no;
      const auto tokens = split_ws(line);
      if (tokens.empty()) continue;
      if (tokens.size() != 2) {
        fail(ErrorCode::kData, cites->string() + ": line " + std::to_string(line_no) + ": expected 'citing cited'");
      }
      const auto a = id_index.find(std::string(tokens[0]));
      const auto b = id_index.find(std::string(tokens[1]));
      // Citations to documents outside the content file are dropped.
      if (a == id_index.end() || b == id_index.end() || a->second == b->second) continue;
      edges.push_back({a->second, b->second, 1});
    }
    corpus.graph = AdjacencyGraph::from_edges(n, std::move(edges));
  }
  corpus.node_ids = std::move(ids);
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  switch (format) {
    case CorpusFormat::kTsvTriples:
      return load_triples(path);
    case CorpusFormat::kCoraContent:
      return load_cora(path, std::nullopt);
  }
  fail(ErrorCode::kUsage, "unknown corpus format");
}

AdjacencyGraph load_edge_list(const std::filesystem::path& path, Index num_nodes) {
  auto in = open_input(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0].front() == '#') continue;
    if (tokens.size() != 2 && tokens.size() != 3) {
      fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": expected 'i j'");
    }
    const auto i = parse_int(tokens[0], path, line_no);
    const auto j = parse_int(tokens[1], path, line_no);
    const auto value = tokens.size() == 3 ? parse_int(tokens[2], path, line_no) : 1;
    if (i < 0 || j < 0 || i >= num_nodes || j >= num_nodes) {
      fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": node index out of range");
    }
    if (value < 1) fail(ErrorCode::kData, path.string() + ": line " + std::to_string(line_no) + ": edge value < 1");
    if (i == j) continue;  // the likelihood has no diagonal term
    edges.push_back({static_cast<Index>(i), static_cast<Index>(j), static_cast<std::uint32_t>(value)});
  }
  return AdjacencyGraph::from_edges(num_nodes, std::move(edges));
}

void write_id_map(const std::filesystem::path& path, std::span<const std::string> ids) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  for (std::size_t k = 0; k < ids.size(); ++k) out << k << '\t' << ids[k] << '\n';
}

AdjacencyGraph build_cosine_adjacency(const SparseCountMatrix& x, double threshold) {
  require(threshold > 0.0 && threshold < 1.0, ErrorCode::kUsage, "cosine threshold must lie in (0, 1)");
  const Index n = x.num_nodes();
  std::vector<double> norm(n, 0.0);
  for (Index d = 0; d < n; ++d) {
    for (auto c : x.counts(d)) norm[d] += static_cast<double>(c) * c;
    if (norm[d] == 0.0) fail(ErrorCode::kData, "node " + std::to_string(d) + " has an all-zero document; cosine undefined");
    norm[d] = std::sqrt(norm[d]);
  }
  // Inverted index term -> (doc, count).
  std::vector<std::vector<std::pair<Index, double>>> postings(x.vocab_size());
  for (Index d = 0; d < n; ++d) {
    const auto t = x.terms(d);
    const auto c = x.counts(d);
    for (std::size_t k = 0; k < t.size(); ++k) postings[t[k]].emplace_back(d, static_cast<double>(c[k]));
  }
  std::vector<Edge> edges;
  std::vector<double> dot(n, 0.0);
  std::vector<Index> touched;
  for (Index d = 0; d < n; ++d) {
    const auto t = x.terms(d);
    const auto c = x.counts(d);
    for (std::size_t k = 0; k < t.size(); ++k) {
      for (const auto& [other, oc] : postings[t[k]]) {
        if (other <= d) continue;
        if (dot[other] == 0.0) touched.push_back(other);
        dot[other] += static_cast<double>(c[k]) * oc;
      }
    }
    for (Index other : touched) {
      if (dot[other] / (norm[d] * norm[other]) >= threshold) edges.push_back({d, other, 1});
      dot[other] = 0.0;
    }
    touched.clear();
  }
  return AdjacencyGraph::from_edges(n, std::move(edges));
}

NormalizedAdjacency normalize_adjacency(const AdjacencyGraph& a, bool add_self_loops) {
  const Index n = a.num_nodes();
  std::vector<double> degree(n, add_self_loops ? 1.0 : 0.0);
  for (const auto& e : a.edges()) {
    degree[e.i] += e.value;
    degree[e.j] += e.value;
  }
  for (Index v = 0; v < n; ++v) {
    if (degree[v] <= 0.0) fail(ErrorCode::kData, "node " + std::to_string(v) + " is isolated; cannot normalize");
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(a.num_edges() * 2 + (add_self_loops ? n : 0));
  for (const auto& e : a.edges()) {
    const double w = e.value / std::sqrt(degree[e.i] * degree[e.j]);
    trip.emplace_back(e.i, e.j, w);
    trip.emplace_back(e.j, e.i, w);
  }
  if (add_self_loops) {
    for (Index v = 0; v < n; ++v) trip.emplace_back(v, v, 1.0 / degree[v]);
  }
  NormalizedAdjacency out;
  out.num_nodes = n;
  out.self_loops_added = add_self_loops;
  out.matrix.resize(n, n);
  out.matrix.setFromTriplets(trip.begin(), trip.end());
  return out;
}

EdgeSplit split_edges(const AdjacencyGraph& a, double val_frac, double test_frac, std::uint64_t seed) {
  if (!(val_frac >= 0.0 && test_frac >= 0.0 && val_frac + test_frac < 1.0)) {
    fail(ErrorCode::kUsage, "split fractions must be nonnegative and sum to less than one");
  }
  const std::size_t total = a.num_edges();
  const std::size_t n_val = split_count(total, val_frac);
  const std::size_t n_test = split_count(total, test_frac);
  if ((val_frac > 0.0 && n_val == 0) || (test_frac > 0.0 && n_test == 0)) {
    fail(ErrorCode::kData, "too few edges (" + std::to_string(total) + ") to populate the requested splits");
  }

  std::vector<NodePair> pairs;
  pairs.reserve(total);
  for (const auto& e : a.edges()) pairs.emplace_back(e.i, e.j);
  Rng rng = Rng::derive(seed, kTagSplit, 0);
  for (std::size_t k = pairs.size(); k > 1; --k) {
    const std::size_t r = static_cast<std::size_t>(rng.uniform() * static_cast<double>(k));
    std::swap(pairs[k - 1], pairs[std::min(r, k - 1)]);
  }
  EdgeSplit split;
  split.seed = seed;
  split.test_edges.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.val_edges.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_test),
                         pairs.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  split.train_edges.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), pairs.end());
  std::sort(split.train_edges.begin(), split.train_edges.end());

  const std::uint64_t n = a.num_nodes();
  const std::uint64_t absent = n * (n - 1) / 2 - total;
  const std::size_t needed = n_val + n_test;
  if (needed > absent) fail(ErrorCode::kData, "graph too dense to sample the requested non-edges");
  std::unordered_set<std::uint64_t> taken;
  std::vector<NodePair> nonedges;
  nonedges.reserve(needed);
  if (needed * 2 > absent) {
    std::vector<NodePair> all;
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        if (!a.has_edge(i, j)) all.emplace_back(i, j);
      }
    }
    for (std::size_t k = 0; k < needed; ++k) {
      const std::size_t r = k + static_cast<std::size_t>(rng.uniform() * static_cast<double>(all.size() - k));
      std::swap(all[k], all[std::min(r, all.size() - 1)]);
      nonedges.push_back(all[k]);
    }
  } else {
    while (nonedges.size() < needed) {
      auto i = static_cast<Index>(rng.uniform() * static_cast<double>(n));
      auto j = static_cast<Index>(rng.uniform() * static_cast<double>(n));
      if (i == j || i >= n || j >= n) continue;
      if (i > j) std::swap(i, j);
      if (a.has_edge(i, j) || !taken.insert(pair_key(i, j)).second) continue;
      nonedges.emplace_back(i, j);
    }
  }
  split.test_nonedges.assign(nonedges.begin(), nonedges.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.val_nonedges.assign(nonedges.begin() + static_cast<std::ptrdiff_t>(n_test), nonedges.end());
  return split;
}

AdjacencyGraph graph_from_pairs(Index num_nodes, std::span<const NodePair> pairs) {
  std::vector<Edge> edges;
  edges.reserve(pairs.size());
  for (const auto& [i, j] : pairs) edges.push_back({i, j, 1});
  return AdjacencyGraph::from_edges(num_nodes, std::move(edges));
}

}  // namespace wgae
