#include "wgae/export.hpp"

#include <algorithm>
#include <deque>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "wgae/error.hpp"

namespace wgae {
namespace {

void check_vocabulary(const DecoderState& state, std::span<const std::string> vocabulary) {
  require(vocabulary.empty() || vocabulary.size() == state.vocab_size, ErrorCode::kData,
          "vocabulary has " + std::to_string(vocabulary.size()) + " entries but the model has " +
              std::to_string(state.vocab_size) + " terms");
}

std::string node_name(Index node, std::span<const std::string> names) {
  return node < names.size() ? names[node] : std::to_string(node);
}

nlohmann::json words_json(const std::vector<WordWeight>& words) {
  auto out = nlohmann::json::array();
  for (const auto& w : words) out.push_back({{"term", w.term}, {"word", w.word}, {"prob", w.prob}});
  return out;
}

std::string word_list(const std::vector<WordWeight>& words) {
  std::ostringstream out;
  out << std::setprecision(3);
  for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i].word << ':' << words[i].prob;
  return out.str();
}

}  // namespace

std::vector<WordWeight> top_words_of(const Eigen::VectorXd& probs, std::span<const std::string> vocabulary,
                                     int count) {
  std::vector<Index> order(static_cast<std::size_t>(probs.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const std::size_t keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(count, 0)));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](Index a, Index b) { return probs[a] != probs[b] ? probs[a] > probs[b] : a < b; });
  std::vector<WordWeight> out;
  for (std::size_t i = 0; i < keep; ++i) {
    const Index t = order[i];
    out.push_back({t, t < vocabulary.size() ? vocabulary[t] : std::to_string(t), probs[t]});
  }
  return out;
}

TopicTree export_topic_tree(const DecoderState& state, int layer, int topic, std::span<const double> tau_phi,
                            std::span<const std::string> vocabulary, int top_words) {
  const int t_max = state.num_layers();
  require(layer >= 1 && layer <= t_max, ErrorCode::kUsage,
          "topic tree root layer " + std::to_string(layer) + " out of range 1.." + std::to_string(t_max));
  require(topic >= 0 && topic < state.widths[layer - 1], ErrorCode::kUsage,
          "topic tree root topic " + std::to_string(topic) + " out of range at layer " + std::to_string(layer));
  require(tau_phi.size() == 1 || tau_phi.size() == static_cast<std::size_t>(t_max), ErrorCode::kUsage,
          "tau_phi needs one value or one per layer");
  check_vocabulary(state, vocabulary);

  std::vector<Eigen::MatrixXd> projected;
  for (int l = 0; l < t_max; ++l) projected.push_back(project_topics(state, l));

  TopicTree tree;
  tree.root_layer = layer;
  tree.root_topic = topic;
  tree.nodes.push_back({layer, topic, -1, 0.0, {}});
  for (std::size_t at = 0; at < tree.nodes.size(); ++at) {
    const int t = tree.nodes[at].layer;
    const int k = tree.nodes[at].topic;
    tree.nodes[at].words = top_words_of(projected[t - 1].col(k), vocabulary, top_words);
    if (t == 1) continue;
    const Eigen::MatrixXd& phi = state.phi[t - 1];  // K_{t-1} x K_t
    const double tau = tau_phi.size() == 1 ? tau_phi[0] : tau_phi[t - 1];
    const double cut = tau / static_cast<double>(phi.rows());
    for (Eigen::Index child = 0; child < phi.rows(); ++child) {
      if (phi(child, k) > cut) {
        tree.nodes.push_back({t - 1, static_cast<int>(child), static_cast<int>(at), phi(child, k), {}});
      }
    }
  }
  return tree;
}

Subnetwork export_subnetwork(const DecoderState& state, Index source, double tau_u,
                             std::span<const std::string> vocabulary, int top_words) {
  require(source < state.num_nodes, ErrorCode::kUsage,
          "subnetwork source node " + std::to_string(source) + " out of range (" + std::to_string(state.num_nodes) +
              " nodes)");
  check_vocabulary(state, vocabulary);
  Subnetwork net;
  net.source = source;
  std::map<std::pair<int, int>, bool> used;
  for (int l = 0; l < state.num_layers(); ++l) {
    SubnetworkLayer layer;
    layer.layer = l + 1;
    const Eigen::MatrixXd& theta = state.theta[l];
    for (Eigen::Index k = 0; k < theta.cols(); ++k) {
      const double base = state.u[l][k] * theta(source, k);
      for (Index j = 0; j < state.num_nodes; ++j) {
        if (j == source) continue;
        const double s = base * theta(j, k);
        if (s > tau_u) {
          layer.links.push_back({j, static_cast<int>(k), s});
          used[{l, static_cast<int>(k)}] = true;
        }
      }
    }
    std::stable_sort(layer.links.begin(), layer.links.end(),
                     [](const SubnetworkLink& a, const SubnetworkLink& b) { return a.strength > b.strength; });
    net.layers.push_back(std::move(layer));
  }
  int cached = -1;
  Eigen::MatrixXd projected;
  for (const auto& [key, flag] : used) {
    if (key.first != cached) {
      projected = project_topics(state, key.first);
      cached = key.first;
    }
    net.topics.push_back({key.first + 1, key.second, top_words_of(projected.col(key.second), vocabulary, top_words)});
  }
  return net;
}

std::string to_text(const TopicTree& tree) {
  std::ostringstream out;
  std::vector<std::vector<int>> children(tree.nodes.size());
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) children[tree.nodes[i].parent].push_back(static_cast<int>(i));
  // depth-first print of the breadth-first node list
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [id, depth] = stack.back();
    stack.pop_back();
    const auto& n = tree.nodes[id];
    out << std::string(2 * depth, ' ') << "L" << n.layer << ".T" << n.topic;
    if (n.parent >= 0) out << " (phi=" << std::setprecision(3) << n.weight << ")";
    out << "  " << word_list(n.words) << '\n';
    for (auto it = children[id].rbegin(); it != children[id].rend(); ++it) stack.push_back({*it, depth + 1});
  }
  return out.str();
}

std::string to_json(const TopicTree& tree) {
  nlohmann::json j;
  j["type"] = "topic_tree";
  j["root"] = {{"layer", tree.root_layer}, {"topic", tree.root_topic}};
  j["nodes"] = nlohmann::json::array();
  j["edges"] = nlohmann::json::array();
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    j["nodes"].push_back({{"id", i}, {"layer", n.layer}, {"topic", n.topic}, {"words", words_json(n.words)}});
    if (n.parent >= 0) j["edges"].push_back({{"parent", n.parent}, {"child", i}, {"weight", n.weight}});
  }
  return j.dump(2);
}

std::string to_text(const Subnetwork& net, std::span<const std::string> node_names) {
  std::ostringstream out;
  out << "source " << node_name(net.source, node_names) << '\n';
  for (const auto& layer : net.layers) {
    out << "layer " << layer.layer << ": " << layer.links.size() << " links\n";
    for (const auto& l : layer.links) {
      out << "  " << node_name(l.node, node_names) << " topic " << l.topic << " strength " << std::setprecision(4)
          << l.strength << '\n';
    }
  }
  for (const auto& t : net.topics) out << "L" << t.layer << ".T" << t.topic << "  " << word_list(t.words) << '\n';
  return out.str();
}

std::string to_json(const Subnetwork& net, std::span<const std::string> node_names) {
  nlohmann::json j;
  j["type"] = "subnetwork";
  j["source"] = {{"index", net.source}, {"name", node_name(net.source, node_names)}};
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    auto links = nlohmann::json::array();
    for (const auto& l : layer.links) {
      links.push_back(
          {{"node", l.node}, {"name", node_name(l.node, node_names)}, {"topic", l.topic}, {"strength", l.strength}});
    }
    j["layers"].push_back({{"layer", layer.layer}, {"links", links}});
  }
  j["topics"] = nlohmann::json::array();
  for (const auto& t : net.topics) {
    j["topics"].push_back({{"layer", t.layer}, {"topic", t.topic}, {"words", words_json(t.words)}});
  }
  return j.dump(2);
}

}  // namespace wgae
