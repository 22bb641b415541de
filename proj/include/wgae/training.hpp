#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wgae/encoders.hpp"
#include "wgae/gpgbn.hpp"

namespace wgae {

enum class TrainerKind { kFullBatch, kScalable };
enum class Debias { kNone, kEndpointProduct };
enum class Importance { kDegree, kLength };
enum class KlRate { kFixed, kDecoder };

// Plain key=value configuration. Keys are listed by TrainConfig::keys();
// unknown keys are errors.
struct TrainConfig {
  std::vector<int> widths{16, 16, 16};
  double beta = 1.0;
  double learning_rate = 1e-3;
  int iterations = 500;
  TrainerKind trainer = TrainerKind::kFullBatch;
  int subset_size = 100;  // N_s
  double k_mix = 0.5;
  double alpha_imp = 1.0;
  Importance importance = Importance::kDegree;
  Debias debias = Debias::kEndpointProduct;
  std::uint64_t seed = 1;
  EncoderKind encoder = EncoderKind::kWgcae;
  int heads = 4;
  double k_att = 10.0;
  double leaky_slope = 0.2;
  bool softmax_of_log = false;
  double tau_a = 0.0;  // cosine threshold when the adjacency is built from features
  std::vector<double> tau_phi{1.0};  // per layer; one value applies to all
  double tau_u = 0.1;
  std::vector<double> eta{0.01};     // per layer; one value applies to all
  KlRate kl_rate = KlRate::kFixed;
  double tlasgr_eps0 = 1.0, tlasgr_tau0 = 20.0, tlasgr_kappa = 0.7;
  int checkpoint_interval = 0;  // 0 disables periodic checkpoints
  bool supervised = false;
  double val_frac = 0.05, test_frac = 0.10;
  int eval_seeds = 10;
  int threads = 1;             // concurrent evaluation seeds
  bool sample_scoring = false;  // link scores averaged over theta draws instead of the posterior mean
  int score_samples = 20;
  int label_per_class = 20, label_val = 500, label_test = 1000;

  static const std::vector<std::string>& keys();
  // Throws kUsage on unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  void validate() const;
  // Checks that need the data size (N_s <= N).
  void validate_for(Index num_nodes) const;

  double tau_phi_at(int layer) const;
  EncoderConfig encoder_config() const;
  DecoderHyper decoder_hyper() const;
};

TrainConfig parse_config(std::istream& in, const std::string& origin = "config");
TrainConfig load_config(const std::filesystem::path& path);
// Canonical text form, one key per line; parse_config(to_text(c)) == c.
std::string to_text(const TrainConfig& config);

// Node inclusion probabilities p_i = k q_i + (1 - k)(1 - q_i)/(N - 1) with
// q_i = f_i^alpha / sum_j f_j^alpha.
std::vector<double> node_inclusion_probabilities(std::span<const double> importance, double k_mix, double alpha_imp);
std::vector<Index> sample_node_subset(const AliasTable& table, int subset_size, Rng& rng);
std::vector<double> node_importance(const SparseCountMatrix& x, const AdjacencyGraph& graph, Importance kind);

// Adaptive-moment optimizer; steps ascend the objective.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon) {}
  void ascend(std::span<Matrix* const> params, std::span<const Matrix> grads);
  std::uint64_t steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct TlasgrState {
  double eps0 = 1.0, tau0 = 20.0, kappa = 0.7;
  double rho = 1.0;                    // N / N_s
  std::uint64_t step = 0;
  std::vector<Eigen::VectorXd> precond;  // M_k per layer; empty until the first update

  double stepsize() const;  // eps0 (tau0 + step)^-kappa
};

constexpr double kPhiFloor = 1e-12;

// Euclidean projection of v onto {x >= floor, sum x = 1}.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v, double floor = kPhiFloor);

// One preconditioned Langevin step on every column of phi from minibatch
// term-topic counts. `noise` = false drops the diffusion term. The step
// counter is advanced by the caller once per iteration.
Eigen::MatrixXd tlasgr_update_phi(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& term_topic, double eta,
                                  TlasgrState& state, int layer, std::uint64_t seed, bool noise = true);

struct IterationRecord {
  int iteration = 0;
  double elbo = 0, node = 0, edge = 0, kl = 0;
  double seconds = 0;  // wall time of this iteration
  int subgraph_nodes = 0;
  std::size_t subgraph_edges = 0;
  bool edge_skipped = false;
  int clamped_edges = 0;
};
std::string to_text(const IterationRecord& r);

struct TrainResult {
  DecoderState decoder;
  EncoderWeights encoder;
  std::vector<IterationRecord> log;
};

struct TrainHooks {
  std::optional<std::filesystem::path> checkpoint_path;  // periodic and abort checkpoints
  std::ostream* log_stream = nullptr;                    // receives one record per iteration
  // Called after every iteration; returning false stops training.
  std::function<bool(const IterationRecord&, const DecoderState&, const EncoderWeights&)> on_iteration;
};

// `labels` (length N, -1 for unlabeled) feeds the supervised head when
// config.supervised is set.
TrainResult train_full_batch(const SparseCountMatrix& x, const AdjacencyGraph& graph, const TrainConfig& config,
                             const std::vector<int>* labels = nullptr, const TrainHooks& hooks = {},
                             int num_classes = 0);
TrainResult train_scalable(const SparseCountMatrix& x, const AdjacencyGraph& graph, const TrainConfig& config,
                           const std::vector<int>* labels = nullptr, const TrainHooks& hooks = {},
                           int num_classes = 0);
TrainResult train(const SparseCountMatrix& x, const AdjacencyGraph& graph, const TrainConfig& config,
                  const std::vector<int>* labels = nullptr, const TrainHooks& hooks = {}, int num_classes = 0);

// Posterior-mean theta per layer from the encoder on the given graph.
std::vector<Eigen::MatrixXd> infer_theta(const EncoderWeights& encoder, const DecoderState& decoder,
                                         const SparseCountMatrix& x, const AdjacencyGraph& graph);
// One reparameterized theta draw (attention noise included) for stream `draw`.
std::vector<Eigen::MatrixXd> sample_theta_draw(const EncoderWeights& encoder, const DecoderState& decoder,
                                               const SparseCountMatrix& x, const AdjacencyGraph& graph,
                                               std::uint64_t seed, std::uint64_t draw);

// Checkpoint container: config, decoder and encoder in one text stream.
struct Checkpoint {
  TrainConfig config;
  DecoderState decoder;
  EncoderWeights encoder;
};
void write_checkpoint(std::ostream& out, const Checkpoint& c);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wgae
