#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wgae/graph_data.hpp"
#include "wgae/random.hpp"

namespace wgae {

// Layers are 0-based in code: layer l is the (l + 1)-th layer counted from
// the observed words.
struct DecoderHyper {
  std::vector<double> eta;    // Dirichlet concentration per layer
  double e0 = 1.0, f0 = 1.0;  // scale prior
  double alpha0 = 1.0, beta0 = 1.0;  // importance-weight prior
  Eigen::VectorXd gamma;      // top-layer gamma shape, length K_T

  static DecoderHyper defaults(std::span<const int> widths);
  void validate(std::span<const int> widths) const;
};

constexpr double kValueFloor = 1e-30;
constexpr double kProbFloor = 1e-9;
inline const double kFirstLayerP = 1.0 - std::exp(-1.0);

struct DecoderState {
  std::vector<int> widths;            // K_1..K_T
  Index vocab_size = 0;               // K_0
  Index num_nodes = 0;
  std::vector<Eigen::MatrixXd> phi;   // phi[l]: K_{l} x K_{l+1} (K_0 = vocab), column-stochastic
  std::vector<Eigen::VectorXd> u;     // u[l]: K_{l+1}
  std::vector<Eigen::MatrixXd> theta; // theta[l]: N x K_{l+1}
  Eigen::MatrixXd c;                  // N x (T+1); column l holds c^(l+1), column 0 unused (= 1)
  Eigen::MatrixXd p;                  // N x (T+1); column l holds p^(l+1), column 0 = 1 - e^-1
  DecoderHyper hyper;
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;

  int num_layers() const { return static_cast<int>(widths.size()); }
  int layer_input_dim(int layer) const { return layer == 0 ? static_cast<int>(vocab_size) : widths[layer - 1]; }
  void validate() const;
};

DecoderState init_decoder(std::span<const int> widths, Index vocab_size, Index num_nodes, DecoderHyper hyper,
                          std::uint64_t seed);

// Latent counts from splitting observed (or pseudo-observed) counts of one layer.
struct NodeAugment {
  Eigen::MatrixXd term_topic;  // K_{l} x K_{l+1}: x_{v.k}
  Eigen::MatrixXd doc_topic;   // N x K_{l+1}:     x_{.jk}
  // Per nonzero (v, j) entry in row order of the input: (topic, count) pairs.
  std::vector<std::size_t> split_offsets;
  std::vector<std::pair<int, std::uint64_t>> splits;
};

struct EdgeAugment {
  std::vector<Eigen::MatrixXd> doc_topic;  // per layer, N x K: sum_{i != j} m_ijk
  std::vector<Eigen::VectorXd> topic_total;  // per layer, K: sum_{i<j} m_ijk
  std::vector<std::uint64_t> edge_totals;    // m_ij per edge
  Eigen::MatrixXd edge_layer_totals;         // E x T: sum_k m^(t)_ijk
};

struct AugmentOptions {
  bool keep_splits = false;
  std::uint64_t iteration = 0;
};

NodeAugment augment_node_counts(const SparseCountMatrix& counts, const Eigen::MatrixXd& phi,
                                const Eigen::MatrixXd& theta, std::uint64_t seed, int layer,
                                const AugmentOptions& options = {});

// Binary graphs draw m_ij ~ Pois+(total rate); count graphs use the observed
// edge value as m_ij.
EdgeAugment augment_edge_counts(const AdjacencyGraph& graph, std::span<const Eigen::VectorXd> u,
                                std::span<const Eigen::MatrixXd> theta, std::uint64_t seed,
                                const AugmentOptions& options = {});

// Pseudo-observations for layer l + 1: CRT(node + edge counts at layer l,
// phi[l+1]_{k:} theta[l+1]_j). Returned as an N x K_{l+1} count matrix.
SparseCountMatrix propagate_counts_upward(const Eigen::MatrixXd& node_doc_topic, const Eigen::MatrixXd& edge_doc_topic,
                                          const Eigen::MatrixXd& phi_above, const Eigen::MatrixXd& theta_above,
                                          std::uint64_t seed, int layer, std::uint64_t iteration = 0);

Eigen::MatrixXd update_phi_gibbs(const Eigen::MatrixXd& term_topic, double eta, std::uint64_t seed, int layer,
                                 std::uint64_t iteration = 0);

struct ThetaConditional {
  Eigen::MatrixXd shape;  // N x K
  Eigen::MatrixXd rate;   // N x K
};

// Gamma conditional of theta[l]. `prior_shape` is theta[l+1] * phi[l+1]^T or
// gamma broadcast at the top layer. `edge_doc_topic` and `u` may be empty
// for models without edges.
ThetaConditional theta_conditional(const Eigen::MatrixXd& node_doc_topic, const Eigen::MatrixXd& edge_doc_topic,
                                   const Eigen::MatrixXd& prior_shape, const Eigen::VectorXd& c_above,
                                   const Eigen::VectorXd& p_layer, const Eigen::VectorXd& u,
                                   const Eigen::MatrixXd& theta_current);
Eigen::MatrixXd sample_theta(const ThetaConditional& cond, std::uint64_t seed, int layer, std::uint64_t iteration = 0);

// Systematic scan over nodes: each node's edge cross-term sees the values
// already drawn earlier in the scan. Equals sample_theta when u is empty.
Eigen::MatrixXd sample_theta_scan(const ThetaConditional& cond, const Eigen::VectorXd& u,
                                  const Eigen::MatrixXd& theta_current, std::uint64_t seed, int layer,
                                  std::uint64_t iteration = 0);

Eigen::VectorXd update_u_gibbs(const Eigen::VectorXd& topic_edge_total, const Eigen::MatrixXd& theta, double alpha0,
                               double beta0, std::uint64_t seed, int layer, std::uint64_t iteration = 0);

// Samples c^(2..T+1) and recomputes p^(2..T+1); writes into state.c / state.p.
void update_scales(DecoderState& state, std::uint64_t iteration = 0);
void recompute_p(DecoderState& state);

// Prior shape for theta[l]: theta[l+1] phi[l+1]^T, or gamma at the top.
Eigen::MatrixXd prior_shape(const DecoderState& state, int layer, std::span<const Eigen::MatrixXd> theta);

double pair_rate(std::span<const Eigen::VectorXd> u, std::span<const Eigen::MatrixXd> theta, Index i, Index j);
// 1 - exp(-sum_t sum_k u_k theta_ik theta_jk)
double edge_probability(std::span<const Eigen::VectorXd> u, std::span<const Eigen::MatrixXd> theta, Index i, Index j);
double edge_probability_from_rows(std::span<const Eigen::VectorXd> u, std::span<const Eigen::RowVectorXd> theta_i,
                                  std::span<const Eigen::RowVectorXd> theta_j);
// a^(t)_ij = sum_k u_k theta_ik theta_jk (dense N x N, diagonal included).
Eigen::MatrixXd layer_adjacency(const Eigen::VectorXd& u, const Eigen::MatrixXd& theta);
// E[x_j] from layer `layer`: (prod_{l<=layer} phi[l]) theta_j / prod c; V x N.
Eigen::MatrixXd reconstruct_nodes(const DecoderState& state, int layer);
// prod_{l < layer} phi[l] * phi[layer]: columns are topics projected to words.
Eigen::MatrixXd project_topics(const DecoderState& state, int layer);

// kAuto models edges only when the graph has at least one; an edgeless
// graph then gives the plain topic-model sweep.
enum class EdgeModel { kAuto, kAlways, kNever };

struct SweepOptions {
  EdgeModel edges = EdgeModel::kAuto;
  bool update_u = true;
  bool update_scales = true;
  bool update_theta = true;
};

// One full Gibbs sweep: augment, propagate upward, Phi, Theta (top-down), u, c/p.
void gibbs_sweep(DecoderState& state, const SparseCountMatrix& x, const AdjacencyGraph& graph,
                 const SweepOptions& options = {});

// Forward sample of the generative model.
struct GenerativeSample {
  DecoderState truth;
  SparseCountMatrix features;
  AdjacencyGraph graph;
};

struct GenerativeOptions {
  double node_scale = 1.0;  // c^(T+1) for every node; smaller means longer documents
  std::optional<Eigen::VectorXd> u;       // fixed u per layer replicated; default prior draws
  std::vector<Eigen::VectorXd> u_layers;  // overrides `u` when non-empty
  std::optional<std::vector<Eigen::MatrixXd>> phi;  // fixed topics
  double phi_eta = -1.0;                  // Dirichlet concentration for drawn topics (< 0: hyper.eta)
};

GenerativeSample sample_gpgbn(std::span<const int> widths, Index vocab_size, Index num_nodes,
                              const DecoderHyper& hyper, const GenerativeOptions& options, std::uint64_t seed);

void write_decoder(std::ostream& out, const DecoderState& state);
DecoderState read_decoder(std::istream& in);

}  // namespace wgae
