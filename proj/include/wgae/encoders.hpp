#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wgae/autodiff.hpp"
#include "wgae/graph_data.hpp"
#include "wgae/random.hpp"

namespace wgae {

using ad::Matrix;
using ad::SparseMatrix;
using ad::Tape;
using ad::Var;

enum class EncoderKind { kWgcae, kWgaae };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kWgcae;
  std::vector<int> widths;    // K_1..K_T
  int heads = 4;              // C (attention encoder only)
  double k_att = 10.0;        // attention Weibull shape
  double leaky_slope = 0.2;
  double shape_floor = 0.1;   // lower bound on the effective Weibull shape
  bool softmax_of_log = false;  // normalize ln s instead of s
};

// Trainable parameters. Head-indexed tensors use index layer * heads + head.
struct EncoderWeights {
  EncoderConfig config;
  Index input_dim = 0;
  std::vector<Matrix> w1;        // K_{t-1} x K_t (per head for WGAAE)
  std::vector<Matrix> w2, w3;    // K_t x K_t, applied to H^(t)
  std::vector<Matrix> proj;      // WGAAE attention projection, K_{t-1} x K_t per head
  std::vector<Matrix> att_src;   // WGAAE attention vector halves, K_t x 1 per head
  std::vector<Matrix> att_dst;
  std::vector<Matrix> log_u;     // 1 x K_t
  Matrix cls_w;                  // K_1 x classes (empty without a classifier)
  Matrix cls_b;                  // 1 x classes

  int num_layers() const { return static_cast<int>(config.widths.size()); }
  int num_classes() const { return static_cast<int>(cls_w.cols()); }
  // Stable enumeration used by the optimizer and the checkpoint.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

// Glorot-uniform weights, log u = 0, zero classifier bias.
EncoderWeights init_encoder(const EncoderConfig& config, Index input_dim, int num_classes, std::uint64_t seed);

// Neighborhood lists with each node's self-loop, CSR by destination row.
struct Neighborhoods {
  std::vector<int> offsets;  // N + 1
  std::vector<int> row;      // aggregating node i per entry
  std::vector<int> col;      // neighbor j per entry
};
Neighborhoods build_neighborhoods(const AdjacencyGraph& graph);

// Precomputed graph inputs for one (sub)graph.
struct EncoderInput {
  Index num_nodes = 0;
  SparseMatrix x;        // N x V counts
  SparseMatrix a_norm;   // normalized adjacency with self-loops
  Neighborhoods hoods;
  std::vector<int> edge_src, edge_dst;  // observed edges, once each

  static EncoderInput build(const SparseCountMatrix& x, const AdjacencyGraph& graph);
};

// Tape handles for the weights.
struct EncoderVars {
  std::vector<Var> w1, w2, w3, proj, att_src, att_dst, log_u;
  Var cls_w, cls_b;
  bool has_classifier = false;
};
// trainable = true registers parameters (gradients), false registers constants.
EncoderVars bind_encoder(Tape& tape, const EncoderWeights& weights, bool trainable);
// Regroups variables given in parameters() order.
EncoderVars encoder_vars_from(const EncoderWeights& layout, std::span<const Var> vars);

struct AttentionState {
  // Per layer and head (index layer * heads + head), aligned with the
  // neighborhood entries.
  std::vector<Var> scores;      // m
  std::vector<Var> weights;     // s
  std::vector<Var> normalized;  // s hat
  std::vector<Matrix> eps;
};

struct WeibullPosterior {
  std::vector<Var> shape;   // K^(t), N x K_t
  std::vector<Var> scale;   // Lambda^(t)
  std::vector<Var> hidden;  // H^(t)
  AttentionState attention;
};

WeibullPosterior wgcae_forward(Tape& tape, const EncoderVars& w, const EncoderConfig& config, const EncoderInput& in);

// One attention head on one layer. `eps` empty means the deterministic limit
// s = exp(m). `projected` is H^(t-1) W^(c,t) and `values` is H^(t-1) W1^(c,t).
struct HeadOutput {
  Var scores, weights, normalized, aggregated;
};
HeadOutput wgaae_attention(Var projected, Var values, Var att_src, Var att_dst, const Neighborhoods& hoods,
                           const EncoderConfig& config, const Matrix& eps);

// Attention noise is drawn from `rng` unless `deterministic` is set.
WeibullPosterior wgaae_forward(Tape& tape, const EncoderVars& w, const EncoderConfig& config, const EncoderInput& in,
                               Rng* rng, bool deterministic);

WeibullPosterior encoder_forward(Tape& tape, const EncoderVars& w, const EncoderConfig& config,
                                 const EncoderInput& in, Rng* rng, bool deterministic);

// Decoder quantities the variational objective reads as constants.
struct DecoderView {
  const std::vector<Eigen::MatrixXd>* phi = nullptr;  // phi[l]: K_{l} x K_{l+1}
  Eigen::VectorXd gamma;                              // K_T
  Eigen::MatrixXd kl_rate;                            // N x T, gamma rate of the prior of theta[l]
};

struct ThetaStack {
  std::vector<Var> theta;        // theta[l], N x K_l
  std::vector<Var> shape;        // effective Weibull shape k + phi theta^(t+1) (floored)
  std::vector<Var> prior_shape;  // gamma shape of the prior: theta[l+1] phi[l+1]^T or gamma
  std::vector<Matrix> eps;
};

// Uniform noise in [1e-6, 1 - 1e-6] for every layer, N x K_l.
std::vector<Matrix> draw_theta_noise(const EncoderConfig& config, Index num_nodes, Rng& rng);

// Top-down reparameterized draw. Empty eps gives the posterior mean
// lambda Gamma(1 + 1/k) at every layer.
ThetaStack sample_theta_stack(const WeibullPosterior& post, const DecoderView& decoder, const EncoderConfig& config,
                              const std::vector<Matrix>& eps);

// Closed-form KL(Weibull(k, lambda) || Gamma(alpha, rate beta)).
double kl_weibull_gamma(double k, double lambda, double alpha, double beta);
// Elementwise KL summed over all entries; `beta` is a constant.
Var kl_weibull_gamma(Var k, Var lambda, Var alpha, const Matrix& beta);

struct ElboOptions {
  double beta = 1.0;         // edge-term weight
  double node_scale = 1.0;   // multiplies node and KL terms (N / N_s on subgraphs)
  double edge_scale = 1.0;   // multiplies the edge term before beta
  std::vector<double> edge_node_weights;  // w_i; pair (i, j) weighs w_i w_j. Empty: all 1.
  double rate_floor = 1e-12;              // floor on observed-edge rates
};

struct ElboTerms {
  Var total, node, edge, kl;
  int clamped_edges = 0;
};

// node log-likelihood + beta * edge log-likelihood - KL, with ln x! dropped.
ElboTerms elbo(Tape& tape, const EncoderInput& in, const ThetaStack& theta, const WeibullPosterior& post,
               const EncoderVars& w, const DecoderView& decoder, const ElboOptions& options);

// Edge log-likelihood sum_{edges} ln(1 - e^-r) - sum_{non-edges, i<j} r in
// linear time, with optional node weights.
Var edge_loglik(Tape& tape, const std::vector<Var>& theta, const std::vector<Var>& log_u,
                const std::vector<int>& src, const std::vector<int>& dst, const std::vector<double>& node_weights,
                double rate_floor, int* clamped);

// Sum over labeled nodes of ln softmax(theta W + b)[y]; labels < 0 are skipped.
Var classification_loglik(Tape& tape, Var theta1, const EncoderVars& w, const std::vector<int>& labels);
// L_s = classification log-likelihood + elbo.
Var supervised_loss(Tape& tape, Var elbo_total, Var theta1, const EncoderVars& w, const std::vector<int>& labels);

// Class scores softmax(theta W + b) per node.
Eigen::MatrixXd classifier_probabilities(const EncoderWeights& w, const Eigen::MatrixXd& theta1);

void write_encoder(std::ostream& out, const EncoderWeights& w);
EncoderWeights read_encoder(std::istream& in);

}  // namespace wgae
