#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wgae/graph_data.hpp"
#include "wgae/training.hpp"

namespace wgae {

struct AucAp {
  double auc = 0.0;
  double ap = 0.0;
};

// AUC by the rank statistic with midranks for ties; AP as the step-wise
// area under the precision-recall curve over distinct score thresholds.
AucAp auc_ap(std::span<const double> scores, std::span<const int> labels);

// Optimal one-to-one assignment minimizing total cost (rows <= cols);
// result[r] is the column assigned to row r.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

// ACC under the best cluster-to-label matching.
double clustering_accuracy(std::span<const int> clusters, std::span<const int> labels);
// Mutual information normalized by the arithmetic mean of the entropies.
double normalized_mutual_information(std::span<const int> a, std::span<const int> b);

struct KMeansResult {
  std::vector<int> assignment;
  Eigen::MatrixXd centers;
  double inertia = 0.0;
};
// k-means++ seeding, Lloyd iterations, best of `restarts` by inertia.
KMeansResult kmeans(const Eigen::MatrixXd& data, int k, std::uint64_t seed, int restarts = 10,
                    int max_iterations = 300);

struct ClusterScores {
  double acc = 0.0;
  double nmi = 0.0;
};
// Clusters the row-wise concatenation of `layers` (labels < 0 are ignored
// when scoring).
ClusterScores cluster_nodes(std::span<const Eigen::MatrixXd> layers, int num_clusters, std::span<const int> labels,
                            std::uint64_t seed);

enum class ThetaScoring { kPosteriorMean, kSampleAverage };

struct LinkScores {
  AucAp val;
  AucAp test;
};

// Edge probabilities 1 - exp(-sum_t sum_k u_k theta_ik theta_jk), averaged
// over the given theta draws.
std::vector<double> score_pairs(std::span<const Eigen::VectorXd> u,
                                std::span<const std::vector<Eigen::MatrixXd>> theta_draws,
                                std::span<const NodePair> pairs);

// Throws kData if a held-out pair is an edge of `train_graph`.
void check_split_leakage(const EdgeSplit& split, const AdjacencyGraph& train_graph);

LinkScores link_prediction_eval(const TrainResult& model, const SparseCountMatrix& x, const EdgeSplit& split,
                                ThetaScoring scoring = ThetaScoring::kPosteriorMean, int samples = 20,
                                std::uint64_t seed = 0);

struct LabelSplit {
  std::vector<Index> train, val, test;
};
// Per-class training nodes, then validation and test nodes drawn from the rest.
LabelSplit standard_label_split(std::span<const int> labels, int num_classes, int per_class, int val_count,
                                int test_count, std::uint64_t seed);
// Labels restricted to `keep` (others become -1).
std::vector<int> mask_labels(std::span<const int> labels, std::span<const Index> keep);

// Accuracy of argmax(classifier(theta1)) on `nodes`; unlabeled nodes are errors.
double classify_nodes(const EncoderWeights& encoder, const Eigen::MatrixXd& theta1, std::span<const int> labels,
                      std::span<const Index> nodes);
double accuracy(std::span<const int> predicted, std::span<const int> truth);

struct SeedMetrics {
  std::uint64_t seed = 0;
  std::map<std::string, double> values;
};

struct MetricsReport {
  std::string task;
  std::vector<SeedMetrics> runs;
  double seconds = 0.0;

  double mean(const std::string& metric) const;
  double stddev(const std::string& metric) const;  // population std; 0 for a single seed
  std::vector<std::string> metric_names() const;
  // One "task=... seed=... metric=value ..." record per seed plus a summary record.
  std::string to_records() const;
  std::string to_table() const;
};

struct BetaSelection {
  double beta = 1.0;
  std::vector<std::pair<double, double>> val_auc;  // (beta, validation AUC)
};
// Trains on the split's train graph for each beta and keeps the best
// validation AUC; ties keep the earlier grid value.
BetaSelection select_beta(const SparseCountMatrix& x, const EdgeSplit& split, const TrainConfig& config,
                          std::span<const double> grid);

}  // namespace wgae
