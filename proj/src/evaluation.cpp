#include "wgae/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "wgae/error.hpp"
#include "wgae/random.hpp"

namespace wgae {

AucAp auc_ap(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorCode::kData, "auc_ap: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    require(labels[i] == 0 || labels[i] == 1, ErrorCode::kData, "auc_ap: labels must be 0 or 1");
    require(std::isfinite(scores[i]), ErrorCode::kNumeric, "auc_ap: non-finite score");
    pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t neg = n - pos;
  require(pos > 0 && neg > 0, ErrorCode::kData, "auc_ap: need at least one positive and one negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t q = i; q < j; ++q) {
      if (labels[order[q]] == 1) rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos), m = static_cast<double>(neg);
  AucAp out;
  out.auc = (rank_sum - p * (p + 1.0) / 2.0) / (p * m);

  // descending thresholds; tied scores enter together
  double tp = 0.0, seen = 0.0, prev_recall = 0.0;
  for (std::size_t i = n; i > 0;) {
    std::size_t j = i;
    while (j > 0 && scores[order[j - 1]] == scores[order[i - 1]]) {
      --j;
      tp += labels[order[j]];
      seen += 1.0;
    }
    const double recall = tp / p;
    out.ap += (recall - prev_recall) * (tp / seen);
    prev_recall = recall;
    i = j;
  }
  return out;
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  require(n <= m, ErrorCode::kInternal, "hungarian: more rows than columns");
  const double inf = std::numeric_limits<double>::infinity();
  // potentials formulation, 1-based with a virtual column 0
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) assignment[p[j] - 1] = j - 1;
  }
  return assignment;
}

namespace {

// Dense relabeling of the values present in `v`.
std::vector<int> compact(std::span<const int> v, int& count) {
  std::vector<int> values(v.begin(), v.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  count = static_cast<int>(values.size());
  std::vector<int> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<int>(std::lower_bound(values.begin(), values.end(), v[i]) - values.begin());
  }
  return out;
}

Eigen::MatrixXd contingency(std::span<const int> a, std::span<const int> b, int& ka, int& kb) {
  require(a.size() == b.size() && !a.empty(), ErrorCode::kData, "partitions must be non-empty and equally long");
  const auto ca = compact(a, ka);
  const auto cb = compact(b, kb);
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ka, kb);
  for (std::size_t i = 0; i < a.size(); ++i) table(ca[i], cb[i]) += 1.0;
  return table;
}

double entropy(const Eigen::VectorXd& counts, double total) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0) h -= (c / total) * std::log(c / total);
  }
  return h;
}

}  // namespace

double clustering_accuracy(std::span<const int> clusters, std::span<const int> labels) {
  int kc = 0, kl = 0;
  const Eigen::MatrixXd table = contingency(clusters, labels, kc, kl);
  const int size = std::max(kc, kl);
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(size, size);
  cost.topLeftCorner(kc, kl) = -table;
  const auto match = hungarian(cost);
  double hit = 0.0;
  for (int r = 0; r < kc; ++r) {
    if (match[r] < kl) hit += table(r, match[r]);
  }
  return hit / static_cast<double>(clusters.size());
}

double normalized_mutual_information(std::span<const int> a, std::span<const int> b) {
  int ka = 0, kb = 0;
  const Eigen::MatrixXd table = contingency(a, b, ka, kb);
  const double n = static_cast<double>(a.size());
  const Eigen::VectorXd ra = table.rowwise().sum();
  const Eigen::VectorXd rb = table.colwise().sum().transpose();
  double mi = 0.0;
  for (int i = 0; i < ka; ++i) {
    for (int j = 0; j < kb; ++j) {
      const double c = table(i, j);
      if (c > 0) mi += (c / n) * std::log(c * n / (ra[i] * rb[j]));
    }
  }
  const double h = 0.5 * (entropy(ra, n) + entropy(rb, n));
  if (h <= 0.0) return 1.0;  // both partitions trivial and therefore identical
  return std::clamp(mi / h, 0.0, 1.0);
}

KMeansResult kmeans(const Eigen::MatrixXd& data, int k, std::uint64_t seed, int restarts, int max_iterations) {
  const Eigen::Index n = data.rows();
  require(k >= 1 && n >= k, ErrorCode::kData, "kmeans: need at least k points");
  require(data.allFinite(), ErrorCode::kNumeric, "kmeans: non-finite representation");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  int completed = 0;
  for (std::uint64_t attempt = 0; completed < restarts; ++attempt) {
    require(attempt < static_cast<std::uint64_t>(restarts) * 20, ErrorCode::kNumeric,
            "kmeans: clusters keep emptying; data has too few distinct points");
    Rng rng = Rng::derive(seed, kTagKMeans, attempt);
    Eigen::MatrixXd centers(k, data.cols());
    // k-means++ seeding
    centers.row(0) = data.row(static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n)) % n);
    std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
      for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (data.row(i) - centers.row(c - 1)).squaredNorm());
      const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
      const Eigen::Index pick = total > 0.0 ? static_cast<Eigen::Index>(sample_categorical(d2, rng))
                                            : static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n)) % n;
      centers.row(c) = data.row(pick);
    }
    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    bool empty = false;
    for (int iter = 0; iter < max_iterations; ++iter) {
      bool changed = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index arg = 0;
        (centers.rowwise() - data.row(i)).rowwise().squaredNorm().minCoeff(&arg);
        if (assign[i] != static_cast<int>(arg)) {
          assign[i] = static_cast<int>(arg);
          changed = true;
        }
      }
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, data.cols());
      std::vector<int> sizes(k, 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(assign[i]) += data.row(i);
        ++sizes[assign[i]];
      }
      empty = std::count(sizes.begin(), sizes.end(), 0) > 0;
      if (empty) break;
      for (int c = 0; c < k; ++c) centers.row(c) = sums.row(c) / sizes[c];
      if (!changed) break;
    }
    if (empty) continue;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) inertia += (data.row(i) - centers.row(assign[i])).squaredNorm();
    ++completed;
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.assignment = assign;
      best.centers = centers;
    }
  }
  return best;
}

ClusterScores cluster_nodes(std::span<const Eigen::MatrixXd> layers, int num_clusters, std::span<const int> labels,
                            std::uint64_t seed) {
  require(num_clusters >= 2, ErrorCode::kUsage, "clustering needs at least two clusters");
  require(!layers.empty(), ErrorCode::kData, "clustering needs at least one layer");
  Eigen::Index cols = 0;
  for (const auto& l : layers) cols += l.cols();
  const Eigen::Index n = layers[0].rows();
  require(static_cast<std::size_t>(n) == labels.size(), ErrorCode::kData, "clustering: one label per node required");
  Eigen::MatrixXd data(n, cols);
  Eigen::Index at = 0;
  for (const auto& l : layers) {
    data.middleCols(at, l.cols()) = l;
    at += l.cols();
  }
  const auto result = kmeans(data, num_clusters, seed);
  std::vector<int> pred, truth;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    pred.push_back(result.assignment[i]);
    truth.push_back(labels[i]);
  }
  require(!truth.empty(), ErrorCode::kData, "clustering: no labeled nodes");
  return {clustering_accuracy(pred, truth), normalized_mutual_information(pred, truth)};
}

std::vector<double> score_pairs(std::span<const Eigen::VectorXd> u,
                                std::span<const std::vector<Eigen::MatrixXd>> theta_draws,
                                std::span<const NodePair> pairs) {
  require(!theta_draws.empty(), ErrorCode::kInternal, "score_pairs: no theta draws");
  std::vector<double> out(pairs.size(), 0.0);
  for (const auto& theta : theta_draws) {
    for (std::size_t e = 0; e < pairs.size(); ++e) {
      out[e] += edge_probability(u, theta, pairs[e].first, pairs[e].second);
    }
  }
  for (double& s : out) s /= static_cast<double>(theta_draws.size());
  return out;
}

void check_split_leakage(const EdgeSplit& split, const AdjacencyGraph& train_graph) {
  auto check = [&](const std::vector<NodePair>& pairs, const char* what) {
    for (const auto& [i, j] : pairs) {
      if (train_graph.has_edge(i, j)) {
        fail(ErrorCode::kData, std::string("split leakage: ") + what + " pair (" + std::to_string(i) + ", " +
                                   std::to_string(j) + ") is an edge of the training graph");
      }
    }
  };
  check(split.val_edges, "validation");
  check(split.test_edges, "test");
  check(split.val_nonedges, "validation non-edge");
  check(split.test_nonedges, "test non-edge");
}

LinkScores link_prediction_eval(const TrainResult& model, const SparseCountMatrix& x, const EdgeSplit& split,
                                ThetaScoring scoring, int samples, std::uint64_t seed) {
  const AdjacencyGraph train_graph = graph_from_pairs(x.num_nodes(), split.train_edges);
  check_split_leakage(split, train_graph);
  std::vector<std::vector<Eigen::MatrixXd>> draws;
  if (scoring == ThetaScoring::kPosteriorMean) {
    draws.push_back(infer_theta(model.encoder, model.decoder, x, train_graph));
  } else {
    require(samples >= 1, ErrorCode::kUsage, "sample-averaged scoring needs at least one sample");
    for (int s = 0; s < samples; ++s) {
      draws.push_back(sample_theta_draw(model.encoder, model.decoder, x, train_graph, seed,
                                        static_cast<std::uint64_t>(s)));
    }
  }
  auto score = [&](const std::vector<NodePair>& pos, const std::vector<NodePair>& neg) {
    std::vector<NodePair> pairs = pos;
    pairs.insert(pairs.end(), neg.begin(), neg.end());
    std::vector<int> labels(pos.size(), 1);
    labels.resize(pairs.size(), 0);
    const auto s = score_pairs(model.decoder.u, draws, pairs);
    return auc_ap(s, labels);
  };
  LinkScores out;
  if (!split.val_edges.empty() && !split.val_nonedges.empty()) out.val = score(split.val_edges, split.val_nonedges);
  out.test = score(split.test_edges, split.test_nonedges);
  return out;
}

LabelSplit standard_label_split(std::span<const int> labels, int num_classes, int per_class, int val_count,
                                int test_count, std::uint64_t seed) {
  std::vector<Index> order;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) order.push_back(i);
  }
  Rng rng = Rng::derive(seed, kTagSplit, 1);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  LabelSplit split;
  std::vector<int> taken(num_classes, 0);
  std::vector<Index> rest;
  for (Index i : order) {
    const int c = labels[i];
    require(c < num_classes, ErrorCode::kData, "label out of range");
    if (taken[c] < per_class) {
      ++taken[c];
      split.train.push_back(i);
    } else {
      rest.push_back(i);
    }
  }
  require(rest.size() >= static_cast<std::size_t>(val_count + test_count), ErrorCode::kData,
          "not enough labeled nodes for the validation and test sets");
  split.val.assign(rest.begin(), rest.begin() + val_count);
  split.test.assign(rest.begin() + val_count, rest.begin() + val_count + test_count);
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<int> mask_labels(std::span<const int> labels, std::span<const Index> keep) {
  std::vector<int> out(labels.size(), -1);
  for (Index i : keep) out[i] = labels[i];
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  require(predicted.size() == truth.size() && !truth.empty(), ErrorCode::kData,
          "accuracy: predictions and labels must be non-empty and equally long");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double classify_nodes(const EncoderWeights& encoder, const Eigen::MatrixXd& theta1, std::span<const int> labels,
                      std::span<const Index> nodes) {
  require(encoder.num_classes() > 0, ErrorCode::kData, "model has no classifier head; train with supervised = true");
  require(!nodes.empty(), ErrorCode::kData, "no nodes to classify");
  const Eigen::MatrixXd probs = classifier_probabilities(encoder, theta1);
  std::vector<int> pred, truth;
  for (Index i : nodes) {
    require(i < labels.size() && labels[i] >= 0, ErrorCode::kData,
            "node " + std::to_string(i) + " has no label to evaluate against");
    Eigen::Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    pred.push_back(static_cast<int>(arg));
    truth.push_back(labels[i]);
  }
  return accuracy(pred, truth);
}

double MetricsReport::mean(const std::string& metric) const {
  double s = 0.0;
  int n = 0;
  for (const auto& r : runs) {
    if (const auto it = r.values.find(metric); it != r.values.end()) {
      s += it->second;
      ++n;
    }
  }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

double MetricsReport::stddev(const std::string& metric) const {
  const double m = mean(metric);
  double s = 0.0;
  int n = 0;
  for (const auto& r : runs) {
    if (const auto it = r.values.find(metric); it != r.values.end()) {
      s += (it->second - m) * (it->second - m);
      ++n;
    }
  }
  return n > 1 ? std::sqrt(s / n) : 0.0;
}

std::vector<std::string> MetricsReport::metric_names() const {
  std::set<std::string> names;
  for (const auto& r : runs) {
    for (const auto& [k, v] : r.values) names.insert(k);
  }
  return {names.begin(), names.end()};
}

std::string MetricsReport::to_records() const {
  std::ostringstream out;
  out << std::setprecision(6) << std::fixed;
  for (const auto& r : runs) {
    out << "task=" << task << " seed=" << r.seed;
    for (const auto& [k, v] : r.values) out << ' ' << k << '=' << v;
    out << '\n';
  }
  out << "task=" << task << " seeds=" << runs.size();
  for (const auto& k : metric_names()) out << ' ' << k << "_mean=" << mean(k) << ' ' << k << "_std=" << stddev(k);
  out << " seconds=" << seconds << '\n';
  return out.str();
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  out << task << " (" << runs.size() << (runs.size() == 1 ? " seed" : " seeds") << ", " << std::fixed
      << std::setprecision(1) << seconds << " s)\n";
  for (const auto& k : metric_names()) {
    out << "  " << std::left << std::setw(12) << k << std::right << std::setprecision(2) << std::setw(7)
        << 100.0 * mean(k);
    if (runs.size() > 1) out << " +/- " << std::setprecision(2) << 100.0 * stddev(k);
    out << '\n';
  }
  return out.str();
}

BetaSelection select_beta(const SparseCountMatrix& x, const EdgeSplit& split, const TrainConfig& config,
                          std::span<const double> grid) {
  require(!grid.empty(), ErrorCode::kUsage, "beta grid is empty");
  require(!split.val_edges.empty() && !split.val_nonedges.empty(), ErrorCode::kData,
          "beta selection needs validation edges");
  const AdjacencyGraph train_graph = graph_from_pairs(x.num_nodes(), split.train_edges);
  BetaSelection out;
  double best = -1.0;
  for (double beta : grid) {
    TrainConfig c = config;
    c.beta = beta;
    c.supervised = false;
    const TrainResult model = train(x, train_graph, c);
    const double auc = link_prediction_eval(model, x, split).val.auc;
    out.val_auc.emplace_back(beta, auc);
    if (auc > best) {
      best = auc;
      out.beta = beta;
    }
  }
  return out;
}

}  // namespace wgae
