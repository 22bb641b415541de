#include "wgae/gpgbn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "wgae/error.hpp"

namespace wgae {
namespace {

Rng layer_stream(std::uint64_t seed, StreamTag tag, int layer, std::uint64_t iteration, std::uint64_t index) {
  return Rng::derive(seed, (static_cast<std::uint64_t>(tag) << 16) | static_cast<std::uint64_t>(layer), iteration,
                     index);
}

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

void write_matrix(std::ostream& out, const char* name, int layer, const Eigen::MatrixXd& m) {
  out << name << ' ' << layer << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& expected) {
  std::string name;
  int layer = 0;
  Eigen::Index rows = 0, cols = 0;
  in >> name >> layer >> rows >> cols;
  if (!in || name != expected || rows < 0 || cols < 0) {
    fail(ErrorCode::kData, "checkpoint: expected block '" + expected + "'");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) in >> m(r, c);
  }
  if (!in) fail(ErrorCode::kData, "checkpoint: truncated block '" + expected + "'");
  return m;
}

void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  in >> got;
  if (got != token) fail(ErrorCode::kData, "checkpoint: expected '" + token + "', got '" + got + "'");
}

}  // namespace

DecoderHyper DecoderHyper::defaults(std::span<const int> widths) {
  DecoderHyper h;
  h.eta.assign(widths.size(), 0.01);
  h.gamma = Eigen::VectorXd::Ones(widths.empty() ? 0 : widths.back());
  return h;
}

void DecoderHyper::validate(std::span<const int> widths) const {
  require(eta.size() == widths.size(), ErrorCode::kUsage, "eta must have one entry per layer");
  for (double e : eta) require(e > 0.0, ErrorCode::kUsage, "eta must be positive");
  require(e0 > 0 && f0 > 0 && alpha0 > 0 && beta0 > 0, ErrorCode::kUsage, "e0, f0, alpha0, beta0 must be positive");
  require(!widths.empty() && gamma.size() == widths.back(), ErrorCode::kUsage, "gamma must have length K_T");
  require((gamma.array() > 0.0).all(), ErrorCode::kUsage, "gamma must be positive");
}

void DecoderState::validate() const {
  const int t = num_layers();
  require(t >= 1, ErrorCode::kUsage, "decoder needs at least one layer");
  require(static_cast<int>(phi.size()) == t && static_cast<int>(u.size()) == t && static_cast<int>(theta.size()) == t,
          ErrorCode::kData, "decoder layer count mismatch");
  for (int l = 0; l < t; ++l) {
    require(widths[l] > 0, ErrorCode::kUsage, "layer widths must be positive");
    require(phi[l].rows() == layer_input_dim(l) && phi[l].cols() == widths[l], ErrorCode::kData,
            "phi dimension mismatch at layer " + std::to_string(l));
    require(u[l].size() == widths[l], ErrorCode::kData, "u dimension mismatch");
    require(theta[l].rows() == num_nodes && theta[l].cols() == widths[l], ErrorCode::kData, "theta dimension mismatch");
  }
  require(c.rows() == num_nodes && c.cols() == t + 1 && p.rows() == num_nodes && p.cols() == t + 1, ErrorCode::kData,
          "scale parameter dimension mismatch");
  hyper.validate(widths);
}

DecoderState init_decoder(std::span<const int> widths, Index vocab_size, Index num_nodes, DecoderHyper hyper,
                          std::uint64_t seed) {
  DecoderState s;
  s.widths.assign(widths.begin(), widths.end());
  s.vocab_size = vocab_size;
  s.num_nodes = num_nodes;
  s.hyper = std::move(hyper);
  s.seed = seed;
  const int t = s.num_layers();
  require(t >= 1, ErrorCode::kUsage, "decoder needs at least one layer");
  for (int l = 0; l < t; ++l) {
    require(widths[l] > 0, ErrorCode::kUsage, "layer widths must be positive");
    Rng rng = layer_stream(seed, kTagInit, l, 0, 0);
    Eigen::MatrixXd phi(s.layer_input_dim(l), widths[l]);
    for (Eigen::Index c = 0; c < phi.cols(); ++c) {
      for (Eigen::Index r = 0; r < phi.rows(); ++r) phi(r, c) = 0.05 + rng.uniform();
      phi.col(c) /= phi.col(c).sum();
    }
    s.phi.push_back(std::move(phi));
    s.u.push_back(Eigen::VectorXd::Ones(widths[l]));
    Eigen::MatrixXd theta(num_nodes, widths[l]);
    for (Eigen::Index r = 0; r < theta.rows(); ++r) {
      for (Eigen::Index c = 0; c < theta.cols(); ++c) theta(r, c) = 0.5 + rng.uniform();
    }
    s.theta.push_back(std::move(theta));
  }
  s.c = Eigen::MatrixXd::Ones(num_nodes, t + 1);
  s.p = Eigen::MatrixXd::Zero(num_nodes, t + 1);
  recompute_p(s);
  s.validate();
  return s;
}

NodeAugment augment_node_counts(const SparseCountMatrix& counts, const Eigen::MatrixXd& phi,
                                const Eigen::MatrixXd& theta, std::uint64_t seed, int layer,
                                const AugmentOptions& options) {
  const Index n = counts.num_nodes();
  const Eigen::Index k = phi.cols();
  require(phi.rows() == counts.vocab_size() && theta.rows() == n && theta.cols() == k, ErrorCode::kInternal,
          "augment_node_counts: dimension mismatch");
  NodeAugment out;
  out.term_topic = Eigen::MatrixXd::Zero(phi.rows(), k);
  out.doc_topic = Eigen::MatrixXd::Zero(n, k);
  if (options.keep_splits) out.split_offsets.push_back(0);

  std::vector<double> weights(static_cast<std::size_t>(k));
  std::vector<std::uint64_t> split(static_cast<std::size_t>(k));
  for (Index j = 0; j < n; ++j) {
    const auto terms = counts.terms(j);
    const auto values = counts.counts(j);
    if (terms.empty()) continue;
    Rng rng = layer_stream(seed, kTagNodeAugment, layer, options.iteration, j);
    for (std::size_t e = 0; e < terms.size(); ++e) {
      const Index v = terms[e];
      double total = 0.0;
      for (Eigen::Index t = 0; t < k; ++t) {
        weights[t] = phi(v, t) * theta(j, t);
        total += weights[t];
      }
      if (!(total > 0.0)) {
        fail(ErrorCode::kNumeric, "zero topic rate for nonzero count at node " + std::to_string(j) + ", term " +
                                      std::to_string(v));
      }
      sample_multinomial_counts(values[e], weights, rng, split);
      for (Eigen::Index t = 0; t < k; ++t) {
        if (split[t] == 0) continue;
        const auto c = static_cast<double>(split[t]);
        out.term_topic(v, t) += c;
        out.doc_topic(j, t) += c;
        if (options.keep_splits) out.splits.emplace_back(static_cast<int>(t), split[t]);
      }
      if (options.keep_splits) out.split_offsets.push_back(out.splits.size());
    }
  }
  return out;
}

EdgeAugment augment_edge_counts(const AdjacencyGraph& graph, std::span<const Eigen::VectorXd> u,
                                std::span<const Eigen::MatrixXd> theta, std::uint64_t seed,
                                const AugmentOptions& options) {
  const std::size_t layers = theta.size();
  require(u.size() == layers && layers > 0, ErrorCode::kInternal, "augment_edge_counts: layer mismatch");
  const Index n = graph.num_nodes();
  EdgeAugment out;
  std::vector<Eigen::Index> offsets{0};
  for (std::size_t l = 0; l < layers; ++l) {
    require(theta[l].rows() == n && theta[l].cols() == u[l].size(), ErrorCode::kInternal,
            "augment_edge_counts: dimension mismatch");
    out.doc_topic.push_back(Eigen::MatrixXd::Zero(n, theta[l].cols()));
    out.topic_total.push_back(Eigen::VectorXd::Zero(theta[l].cols()));
    offsets.push_back(offsets.back() + theta[l].cols());
  }
  const auto edges = graph.edges();
  const bool binary = graph.is_binary();
  out.edge_totals.resize(edges.size());
  out.edge_layer_totals = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(edges.size()), static_cast<Eigen::Index>(layers));

  std::vector<double> weights(static_cast<std::size_t>(offsets.back()));
  std::vector<std::uint64_t> split(weights.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Index i = edges[e].i;
    const Index j = edges[e].j;
    double rate = 0.0;
    for (std::size_t l = 0; l < layers; ++l) {
      for (Eigen::Index t = 0; t < theta[l].cols(); ++t) {
        const double w = u[l][t] * theta[l](i, t) * theta[l](j, t);
        weights[offsets[l] + t] = w;
        rate += w;
      }
    }
    if (!(rate > 0.0)) {
      fail(ErrorCode::kNumeric, "zero edge rate on observed edge (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    }
    Rng rng = layer_stream(seed, kTagEdgeAugment, 0, options.iteration, e);
    const std::uint64_t m = binary ? sample_truncated_poisson(rate, rng) : edges[e].value;
    out.edge_totals[e] = m;
    sample_multinomial_counts(m, weights, rng, split);
    for (std::size_t l = 0; l < layers; ++l) {
      for (Eigen::Index t = 0; t < theta[l].cols(); ++t) {
        const std::uint64_t c = split[offsets[l] + t];
        if (c == 0) continue;
        const auto cd = static_cast<double>(c);
        out.doc_topic[l](i, t) += cd;
        out.doc_topic[l](j, t) += cd;
        out.topic_total[l][t] += cd;
        out.edge_layer_totals(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(l)) += cd;
      }
    }
  }
  return out;
}

SparseCountMatrix propagate_counts_upward(const Eigen::MatrixXd& node_doc_topic, const Eigen::MatrixXd& edge_doc_topic,
                                          const Eigen::MatrixXd& phi_above, const Eigen::MatrixXd& theta_above,
                                          std::uint64_t seed, int layer, std::uint64_t iteration) {
  const Eigen::Index n = node_doc_topic.rows();
  const Eigen::Index k = node_doc_topic.cols();
  const bool with_edges = edge_doc_topic.size() > 0;
  require(phi_above.rows() == k && theta_above.rows() == n && theta_above.cols() == phi_above.cols(),
          ErrorCode::kInternal, "propagate_counts_upward: dimension mismatch");
  // concentration(j, k) = phi_above_{k:} . theta_above_j
  const Eigen::MatrixXd concentration = theta_above * phi_above.transpose();
  std::vector<CountEntry> entries;
  for (Eigen::Index j = 0; j < n; ++j) {
    Rng rng = layer_stream(seed, kTagPropagate, layer, iteration, static_cast<std::uint64_t>(j));
    for (Eigen::Index t = 0; t < k; ++t) {
      auto count = static_cast<std::uint64_t>(node_doc_topic(j, t));
      if (with_edges) count += static_cast<std::uint64_t>(edge_doc_topic(j, t));
      if (count == 0) continue;
      const double conc = concentration(j, t);
      if (!(conc > 0.0)) fail(ErrorCode::kNumeric, "nonpositive CRT concentration at node " + std::to_string(j));
      const std::uint64_t tables = sample_crt(count, std::max(conc, kValueFloor), rng);
      if (tables > 0) {
        entries.push_back({static_cast<Index>(j), static_cast<Index>(t), static_cast<std::uint32_t>(tables)});
      }
    }
  }
  return SparseCountMatrix::from_entries(static_cast<Index>(n), static_cast<Index>(k), std::move(entries));
}

Eigen::MatrixXd update_phi_gibbs(const Eigen::MatrixXd& term_topic, double eta, std::uint64_t seed, int layer,
                                 std::uint64_t iteration) {
  Eigen::MatrixXd phi(term_topic.rows(), term_topic.cols());
  std::vector<double> conc(static_cast<std::size_t>(term_topic.rows()));
  for (Eigen::Index k = 0; k < term_topic.cols(); ++k) {
    Rng rng = layer_stream(seed, kTagPhi, layer, iteration, static_cast<std::uint64_t>(k));
    for (Eigen::Index v = 0; v < term_topic.rows(); ++v) conc[v] = term_topic(v, k) + eta;
    const auto col = sample_dirichlet(conc, rng);
    for (Eigen::Index v = 0; v < term_topic.rows(); ++v) phi(v, k) = col[v];
  }
  return phi;
}

ThetaConditional theta_conditional(const Eigen::MatrixXd& node_doc_topic, const Eigen::MatrixXd& edge_doc_topic,
                                   const Eigen::MatrixXd& prior, const Eigen::VectorXd& c_above,
                                   const Eigen::VectorXd& p_layer, const Eigen::VectorXd& u,
                                   const Eigen::MatrixXd& theta_current) {
  const Eigen::Index n = node_doc_topic.rows();
  const Eigen::Index k = node_doc_topic.cols();
  ThetaConditional cond;
  cond.shape = node_doc_topic + prior;
  if (edge_doc_topic.size() > 0) cond.shape += edge_doc_topic;
  cond.rate.resize(n, k);
  const Eigen::RowVectorXd column_sums = theta_current.colwise().sum();
  for (Eigen::Index j = 0; j < n; ++j) {
    const double base = -std::log1p(-p_layer[j]) + c_above[j];
    for (Eigen::Index t = 0; t < k; ++t) {
      double rate = base;
      if (u.size() > 0) rate += u[t] * std::max(0.0, column_sums[t] - theta_current(j, t));
      cond.rate(j, t) = rate;
    }
  }
  if (!((cond.shape.array() > 0.0).all() && (cond.rate.array() > 0.0).all())) {
    fail(ErrorCode::kNumeric, "theta conditional has a nonpositive shape or rate");
  }
  return cond;
}

Eigen::MatrixXd sample_theta(const ThetaConditional& cond, std::uint64_t seed, int layer, std::uint64_t iteration) {
  Eigen::MatrixXd theta(cond.shape.rows(), cond.shape.cols());
  for (Eigen::Index j = 0; j < theta.rows(); ++j) {
    Rng rng = layer_stream(seed, kTagTheta, layer, iteration, static_cast<std::uint64_t>(j));
    for (Eigen::Index t = 0; t < theta.cols(); ++t) {
      theta(j, t) = std::max(sample_gamma(cond.shape(j, t), 1.0 / cond.rate(j, t), rng), kValueFloor);
    }
  }
  return theta;
}

Eigen::MatrixXd sample_theta_scan(const ThetaConditional& cond, const Eigen::VectorXd& u,
                                  const Eigen::MatrixXd& theta_current, std::uint64_t seed, int layer,
                                  std::uint64_t iteration) {
  if (u.size() == 0) return sample_theta(cond, seed, layer, iteration);
  Eigen::MatrixXd theta = theta_current;
  // cond.rate holds u_k (S_k - theta_jk) for the sums S_k at entry; the scan
  // adds u_k times the drift of S_k caused by nodes already resampled.
  const Eigen::RowVectorXd start = theta_current.colwise().sum();
  Eigen::RowVectorXd now = start;
  for (Eigen::Index j = 0; j < theta.rows(); ++j) {
    Rng rng = layer_stream(seed, kTagTheta, layer, iteration, static_cast<std::uint64_t>(j));
    for (Eigen::Index t = 0; t < theta.cols(); ++t) {
      const double rate = std::max(cond.rate(j, t) + u[t] * (now[t] - start[t]), kValueFloor);
      const double value = std::max(sample_gamma(cond.shape(j, t), 1.0 / rate, rng), kValueFloor);
      now[t] += value - theta(j, t);
      theta(j, t) = value;
    }
  }
  return theta;
}

Eigen::VectorXd update_u_gibbs(const Eigen::VectorXd& topic_edge_total, const Eigen::MatrixXd& theta, double alpha0,
                               double beta0, std::uint64_t seed, int layer, std::uint64_t iteration) {
  const Eigen::Index k = theta.cols();
  Eigen::VectorXd u(k);
  Rng rng = layer_stream(seed, kTagU, layer, iteration, 0);
  for (Eigen::Index t = 0; t < k; ++t) {
    const double s = theta.col(t).sum();
    const double pair_sum = std::max(0.0, 0.5 * (s * s - theta.col(t).squaredNorm()));
    const double count = topic_edge_total.size() > 0 ? topic_edge_total[t] : 0.0;
    u[t] = std::max(sample_gamma(count + alpha0, 1.0 / (beta0 + pair_sum), rng), kValueFloor);
  }
  return u;
}

void recompute_p(DecoderState& state) {
  const int t = state.num_layers();
  for (Index j = 0; j < state.num_nodes; ++j) {
    state.p(j, 0) = kFirstLayerP;
    for (int l = 1; l <= t; ++l) {
      const double a = -std::log1p(-state.p(j, l - 1));
      const double p = a / (state.c(j, l) + a);
      if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::kNumeric, "p outside (0, 1) at node " + std::to_string(j));
      state.p(j, l) = clamp_prob(p);
    }
  }
}

void update_scales(DecoderState& state, std::uint64_t iteration) {
  const int t = state.num_layers();
  const auto& h = state.hyper;
  const double gamma_sum = h.gamma.sum();
  for (Index j = 0; j < state.num_nodes; ++j) {
    Rng rng = layer_stream(state.seed, kTagScale, 0, iteration, j);
    for (int l = 1; l <= t; ++l) {
      const double shape = (l < t ? state.theta[l].row(j).sum() : gamma_sum) + h.e0;
      const double rate = h.f0 + state.theta[l - 1].row(j).sum();
      state.c(j, l) = std::max(sample_gamma(shape, 1.0 / rate, rng), kValueFloor);
    }
  }
  recompute_p(state);
}

Eigen::MatrixXd prior_shape(const DecoderState& state, int layer, std::span<const Eigen::MatrixXd> theta) {
  if (layer == state.num_layers() - 1) {
    return state.hyper.gamma.transpose().replicate(theta[layer].rows(), 1);
  }
  return theta[layer + 1] * state.phi[layer + 1].transpose();
}

double pair_rate(std::span<const Eigen::VectorXd> u, std::span<const Eigen::MatrixXd> theta, Index i, Index j) {
  double rate = 0.0;
  for (std::size_t l = 0; l < theta.size(); ++l) {
    rate += (theta[l].row(i).array() * theta[l].row(j).array() * u[l].transpose().array()).sum();
  }
  return rate;
}

double edge_probability(std::span<const Eigen::VectorXd> u, std::span<const Eigen::MatrixXd> theta, Index i, Index j) {
  return -std::expm1(-pair_rate(u, theta, i, j));
}

double edge_probability_from_rows(std::span<const Eigen::VectorXd> u, std::span<const Eigen::RowVectorXd> theta_i,
                                  std::span<const Eigen::RowVectorXd> theta_j) {
  double rate = 0.0;
  for (std::size_t l = 0; l < u.size(); ++l) {
    rate += (theta_i[l].array() * theta_j[l].array() * u[l].transpose().array()).sum();
  }
  return -std::expm1(-rate);
}

Eigen::MatrixXd layer_adjacency(const Eigen::VectorXd& u, const Eigen::MatrixXd& theta) {
  return theta * u.asDiagonal() * theta.transpose();
}

Eigen::MatrixXd project_topics(const DecoderState& state, int layer) {
  Eigen::MatrixXd proj = state.phi[layer];
  for (int l = layer - 1; l >= 0; --l) proj = state.phi[l] * proj;
  return proj;
}

Eigen::MatrixXd reconstruct_nodes(const DecoderState& state, int layer) {
  require(layer >= 0 && layer < state.num_layers(), ErrorCode::kUsage, "reconstruct_nodes: layer out of range");
  Eigen::MatrixXd scaled = state.theta[layer];
  for (int l = 1; l <= layer; ++l) scaled.array().colwise() /= state.c.col(l).array();
  return project_topics(state, layer) * scaled.transpose();
}

void gibbs_sweep(DecoderState& state, const SparseCountMatrix& x, const AdjacencyGraph& graph,
                 const SweepOptions& options) {
  const int t = state.num_layers();
  require(x.num_nodes() == state.num_nodes && x.vocab_size() == state.vocab_size &&
              graph.num_nodes() == state.num_nodes,
          ErrorCode::kData, "gibbs_sweep: data dimensions do not match the decoder");
  const std::uint64_t it = state.iteration;
  const AugmentOptions aug{false, it};
  const bool model_edges = options.edges == EdgeModel::kAlways ||
                           (options.edges == EdgeModel::kAuto && graph.num_edges() > 0);

  std::vector<NodeAugment> nodes;
  nodes.push_back(augment_node_counts(x, state.phi[0], state.theta[0], state.seed, 0, aug));
  EdgeAugment edges;
  if (model_edges) edges = augment_edge_counts(graph, state.u, state.theta, state.seed, aug);
  const Eigen::MatrixXd none;
  for (int l = 0; l + 1 < t; ++l) {
    const SparseCountMatrix above =
        propagate_counts_upward(nodes[l].doc_topic, model_edges ? edges.doc_topic[l] : none, state.phi[l + 1],
                                state.theta[l + 1], state.seed, l, it);
    nodes.push_back(augment_node_counts(above, state.phi[l + 1], state.theta[l + 1], state.seed, l + 1, aug));
  }
  for (int l = 0; l < t; ++l) state.phi[l] = update_phi_gibbs(nodes[l].term_topic, state.hyper.eta[l], state.seed, l, it);

  if (options.update_theta) {
    for (int l = t - 1; l >= 0; --l) {
      const Eigen::MatrixXd prior = prior_shape(state, l, state.theta);
      const Eigen::VectorXd empty_u;
      const ThetaConditional cond =
          theta_conditional(nodes[l].doc_topic, model_edges ? edges.doc_topic[l] : none, prior, state.c.col(l + 1),
                            state.p.col(l), model_edges ? state.u[l] : empty_u, state.theta[l]);
      state.theta[l] = sample_theta_scan(cond, model_edges ? state.u[l] : empty_u, state.theta[l], state.seed, l, it);
    }
  }
  if (options.update_u && model_edges) {
    for (int l = 0; l < t; ++l) {
      state.u[l] = update_u_gibbs(edges.topic_total[l], state.theta[l], state.hyper.alpha0, state.hyper.beta0,
                                  state.seed, l, it);
    }
  }
  if (options.update_scales) update_scales(state, it);
  ++state.iteration;
}

GenerativeSample sample_gpgbn(std::span<const int> widths, Index vocab_size, Index num_nodes,
                              const DecoderHyper& hyper, const GenerativeOptions& options, std::uint64_t seed) {
  hyper.validate(widths);
  const int t = static_cast<int>(widths.size());
  DecoderState s;
  s.widths.assign(widths.begin(), widths.end());
  s.vocab_size = vocab_size;
  s.num_nodes = num_nodes;
  s.hyper = hyper;
  s.seed = seed;
  Rng rng = Rng::derive(seed, kTagSynthetic, 0);
  for (int l = 0; l < t; ++l) {
    if (options.phi) {
      s.phi.push_back((*options.phi)[l]);
    } else {
      const double eta = options.phi_eta > 0.0 ? options.phi_eta : hyper.eta[l];
      Eigen::MatrixXd phi(s.layer_input_dim(l), widths[l]);
      const std::vector<double> conc(static_cast<std::size_t>(phi.rows()), eta);
      for (Eigen::Index k = 0; k < phi.cols(); ++k) {
        const auto col = sample_dirichlet(conc, rng);
        for (Eigen::Index v = 0; v < phi.rows(); ++v) phi(v, k) = col[v];
      }
      s.phi.push_back(std::move(phi));
    }
    if (!options.u_layers.empty()) {
      s.u.push_back(options.u_layers[l]);
    } else if (options.u) {
      s.u.push_back(*options.u);
    } else {
      Eigen::VectorXd u(widths[l]);
      for (auto& v : u) v = sample_gamma(hyper.alpha0, 1.0 / hyper.beta0, rng);
      s.u.push_back(std::move(u));
    }
    s.theta.emplace_back(num_nodes, widths[l]);
  }
  s.c = Eigen::MatrixXd::Ones(num_nodes, t + 1);
  s.c.col(t).setConstant(options.node_scale);
  s.p = Eigen::MatrixXd::Zero(num_nodes, t + 1);
  recompute_p(s);
  for (int l = t - 1; l >= 0; --l) {
    const Eigen::MatrixXd prior = prior_shape(s, l, s.theta);
    for (Index j = 0; j < num_nodes; ++j) {
      for (int k = 0; k < widths[l]; ++k) {
        s.theta[l](j, k) = std::max(sample_gamma(prior(j, k), 1.0 / s.c(j, l + 1), rng), kValueFloor);
      }
    }
  }
  std::vector<CountEntry> entries;
  const Eigen::MatrixXd rates = s.phi[0] * s.theta[0].transpose();  // V x N
  for (Index j = 0; j < num_nodes; ++j) {
    for (Index v = 0; v < vocab_size; ++v) {
      const std::uint64_t x = sample_poisson(rates(v, j), rng);
      if (x > 0) entries.push_back({j, v, static_cast<std::uint32_t>(x)});
    }
  }
  std::vector<Edge> edges;
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(num_nodes, num_nodes);
  for (int l = 0; l < t; ++l) total += layer_adjacency(s.u[l], s.theta[l]);
  for (Index i = 0; i < num_nodes; ++i) {
    for (Index j = i + 1; j < num_nodes; ++j) {
      if (rng.uniform() < -std::expm1(-total(i, j))) edges.push_back({i, j, 1});
    }
  }
  GenerativeSample out{std::move(s), SparseCountMatrix::from_entries(num_nodes, vocab_size, std::move(entries)),
                       AdjacencyGraph::from_edges(num_nodes, std::move(edges))};
  return out;
}

void write_decoder(std::ostream& out, const DecoderState& state) {
  const int t = state.num_layers();
  out.precision(17);
  out << "wgae-decoder 1\n";
  out << "layers " << t << "\nwidths";
  for (int w : state.widths) out << ' ' << w;
  out << "\nvocab " << state.vocab_size << "\nnodes " << state.num_nodes << "\niteration " << state.iteration
      << "\nseed " << state.seed << "\neta";
  for (double e : state.hyper.eta) out << ' ' << e;
  out << "\nprior " << state.hyper.e0 << ' ' << state.hyper.f0 << ' ' << state.hyper.alpha0 << ' '
      << state.hyper.beta0 << "\ngamma";
  for (double g : state.hyper.gamma) out << ' ' << g;
  out << '\n';
  for (int l = 0; l < t; ++l) {
    write_matrix(out, "phi", l, state.phi[l]);
    write_matrix(out, "u", l, state.u[l]);
    write_matrix(out, "theta", l, state.theta[l]);
  }
  write_matrix(out, "c", 0, state.c);
  write_matrix(out, "p", 0, state.p);
  out << "end-decoder\n";
}

DecoderState read_decoder(std::istream& in) {
  DecoderState s;
  expect_token(in, "wgae-decoder");
  int version = 0;
  in >> version;
  if (version != 1) fail(ErrorCode::kData, "checkpoint: unsupported decoder version");
  int t = 0;
  expect_token(in, "layers");
  in >> t;
  if (!in || t < 1 || t > 64) fail(ErrorCode::kData, "checkpoint: bad layer count");
  expect_token(in, "widths");
  s.widths.resize(t);
  for (int& w : s.widths) in >> w;
  expect_token(in, "vocab");
  in >> s.vocab_size;
  expect_token(in, "nodes");
  in >> s.num_nodes;
  expect_token(in, "iteration");
  in >> s.iteration;
  expect_token(in, "seed");
  in >> s.seed;
  expect_token(in, "eta");
  s.hyper.eta.resize(t);
  for (double& e : s.hyper.eta) in >> e;
  expect_token(in, "prior");
  in >> s.hyper.e0 >> s.hyper.f0 >> s.hyper.alpha0 >> s.hyper.beta0;
  expect_token(in, "gamma");
  s.hyper.gamma.resize(s.widths.back());
  for (auto& g : s.hyper.gamma) in >> g;
  if (!in) fail(ErrorCode::kData, "checkpoint: truncated decoder header");
  for (int l = 0; l < t; ++l) {
    s.phi.push_back(read_matrix(in, "phi"));
    s.u.push_back(read_matrix(in, "u").col(0));
    s.theta.push_back(read_matrix(in, "theta"));
  }
  s.c = read_matrix(in, "c");
  s.p = read_matrix(in, "p");
  expect_token(in, "end-decoder");
  s.validate();
  return s;
}

}  // namespace wgae
