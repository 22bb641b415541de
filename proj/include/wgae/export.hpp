#pragma once

#include <span>
#include <string>
#include <vector>

#include "wgae/gpgbn.hpp"

namespace wgae {

struct WordWeight {
  Index term = 0;
  std::string word;
  double prob = 0.0;
};

// Layers are reported 1-based (layer 1 sits directly above the words).
struct TopicTreeNode {
  int layer = 1;
  int topic = 0;
  int parent = -1;       // index into TopicTree::nodes
  double weight = 0.0;   // Phi entry linking the parent to this node
  std::vector<WordWeight> words;
};

struct TopicTree {
  int root_layer = 1;
  int root_topic = 0;
  std::vector<TopicTreeNode> nodes;  // breadth-first; nodes[0] is the root
};

// Children of (t, k) are the layer t-1 topics k' with
// Phi^(t)_{k'k} > tau_phi[t] / K_{t-1}. `tau_phi` holds one value for all
// layers or one per layer (index t-1). An empty vocabulary prints term ids.
TopicTree export_topic_tree(const DecoderState& state, int layer, int topic, std::span<const double> tau_phi,
                            std::span<const std::string> vocabulary, int top_words = 10);

struct SubnetworkLink {
  Index node = 0;
  int topic = 0;
  double strength = 0.0;  // u_k theta_ik theta_jk
};

struct SubnetworkLayer {
  int layer = 1;
  std::vector<SubnetworkLink> links;  // sorted by decreasing strength
};

struct SubnetworkTopic {
  int layer = 1;
  int topic = 0;
  std::vector<WordWeight> words;
};

struct Subnetwork {
  Index source = 0;
  std::vector<SubnetworkLayer> layers;
  std::vector<SubnetworkTopic> topics;  // every topic that carries a link
};

// Every j != i with u_k theta_ik theta_jk > tau_u, per layer and topic.
Subnetwork export_subnetwork(const DecoderState& state, Index source, double tau_u,
                             std::span<const std::string> vocabulary, int top_words = 10);

// Top words of a probability vector over the vocabulary, ties by term id.
std::vector<WordWeight> top_words_of(const Eigen::VectorXd& probs, std::span<const std::string> vocabulary, int count);

std::string to_text(const TopicTree& tree);
std::string to_json(const TopicTree& tree);
std::string to_text(const Subnetwork& net, std::span<const std::string> node_names = {});
std::string to_json(const Subnetwork& net, std::span<const std::string> node_names = {});

}  // namespace wgae
