#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "wgae/error.hpp"
#include "wgae/export.hpp"

using namespace wgae;

namespace {

// Two layers over a 6-word vocabulary: layer-1 topics are spikes on words
// 0..2, the layer-2 topics mix them unevenly.
DecoderState toy_state() {
  const std::vector<int> widths{3, 2};
  DecoderState s = init_decoder(widths, 6, 4, DecoderHyper::defaults(widths), 1);
  s.phi[0].setConstant(0.01);
  for (int k = 0; k < 3; ++k) s.phi[0](k, k) = 1.0 - 0.05;
  s.phi[1] << 0.7, 0.1,  //
      0.2, 0.1,          //
      0.1, 0.8;
  s.u[0] << 1.0, 2.0, 0.5;
  s.u[1] << 1.0, 1.0;
  s.theta[0] << 1.0, 0.0, 0.5,  //
      0.5, 1.0, 0.0,            //
      0.0, 2.0, 1.0,            //
      0.0, 0.0, 0.0;
  s.theta[1] << 1.0, 0.0,  //
      0.0, 1.0,            //
      0.5, 0.5,            //
      0.2, 0.0;
  return s;
}

const std::vector<std::string> kVocab{"alpha", "beta", "gamma", "delta", "eps", "zeta"};

}  // namespace

TEST_CASE("topic tree: threshold above every entry keeps only the root") {
  const auto s = toy_state();
  const std::vector<double> tau{10.0};
  const auto tree = export_topic_tree(s, 2, 0, tau, kVocab, 3);
  REQUIRE(tree.nodes.size() == 1);
  CHECK(tree.nodes[0].parent == -1);
  CHECK(tree.nodes[0].words.size() == 3);
}

TEST_CASE("topic tree: zero threshold gives full fan-out") {
  const auto s = toy_state();
  const std::vector<double> tau{0.0};
  const auto tree = export_topic_tree(s, 2, 1, tau, kVocab, 2);
  REQUIRE(tree.nodes.size() == 4);
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(tree.nodes[i].parent == 0);
    CHECK(tree.nodes[i].layer == 1);
    CHECK(tree.nodes[i].weight == doctest::Approx(s.phi[1](tree.nodes[i].topic, 1)));
  }
}

TEST_CASE("topic tree: threshold tau/K selects children") {
  const auto s = toy_state();
  // cut = 0.45 / 3 = 0.15: topic 0 keeps children 0 (0.7) and 1 (0.2).
  const std::vector<double> tau{0.45, 0.45};
  const auto tree = export_topic_tree(s, 2, 0, tau, kVocab, 1);
  REQUIRE(tree.nodes.size() == 3);
  CHECK(tree.nodes[1].topic == 0);
  CHECK(tree.nodes[2].topic == 1);
}

TEST_CASE("topic tree: spike topics list their basis word first") {
  const auto s = toy_state();
  const std::vector<double> tau{0.0};
  const auto tree = export_topic_tree(s, 2, 0, tau, kVocab, 1);
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    REQUIRE(n.words.size() == 1);
    CHECK(n.words[0].term == static_cast<Index>(n.topic));
    CHECK(n.words[0].word == kVocab[n.topic]);
  }
}

TEST_CASE("projected topics are distributions over words") {
  const auto s = toy_state();
  for (int l = 0; l < 2; ++l) {
    const auto proj = project_topics(s, l);
    for (Eigen::Index k = 0; k < proj.cols(); ++k) CHECK(proj.col(k).sum() == doctest::Approx(1.0));
  }
  const std::vector<double> tau{1.0};
  const auto tree = export_topic_tree(s, 2, 1, tau, {}, 6);
  double total = 0.0;
  for (const auto& w : tree.nodes[0].words) total += w.prob;
  CHECK(total == doctest::Approx(1.0));
  CHECK(tree.nodes[0].words[0].word == std::to_string(tree.nodes[0].words[0].term));
}

TEST_CASE("topic tree: argument errors") {
  const auto s = toy_state();
  const std::vector<double> tau{1.0};
  auto code_of = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode{0};
  };
  CHECK(code_of([&] { export_topic_tree(s, 3, 0, tau, kVocab); }) == ErrorCode::kUsage);
  CHECK(code_of([&] { export_topic_tree(s, 0, 0, tau, kVocab); }) == ErrorCode::kUsage);
  CHECK(code_of([&] { export_topic_tree(s, 2, 2, tau, kVocab); }) == ErrorCode::kUsage);
  const std::vector<double> bad_tau{1.0, 1.0, 1.0};
  CHECK(code_of([&] { export_topic_tree(s, 1, 0, bad_tau, kVocab); }) == ErrorCode::kUsage);
  const std::vector<std::string> short_vocab{"a"};
  CHECK(code_of([&] { export_topic_tree(s, 1, 0, tau, short_vocab); }) == ErrorCode::kData);
  CHECK(code_of([&] { export_subnetwork(s, 4, 0.0, kVocab); }) == ErrorCode::kUsage);
}

TEST_CASE("subnetwork: infinite threshold is empty") {
  const auto s = toy_state();
  const auto net = export_subnetwork(s, 0, std::numeric_limits<double>::infinity(), kVocab);
  REQUIRE(net.layers.size() == 2);
  for (const auto& layer : net.layers) CHECK(layer.links.empty());
  CHECK(net.topics.empty());
}

TEST_CASE("subnetwork: zero threshold keeps every overlapping neighbour") {
  const auto s = toy_state();
  const auto net = export_subnetwork(s, 0, 0.0, kVocab, 2);
  // layer 1: source topics 0 and 2; node 1 shares topic 0, node 2 shares topic 2.
  REQUIRE(net.layers[0].links.size() == 2);
  CHECK(net.layers[0].links[0].strength >= net.layers[0].links[1].strength);
  for (const auto& l : net.layers[0].links) {
    CHECK(l.node != 0);
    CHECK(l.strength == doctest::Approx(s.u[0][l.topic] * s.theta[0](0, l.topic) * s.theta[0](l.node, l.topic)));
  }
  // layer 2: topic 0 shared with nodes 2 and 3.
  REQUIRE(net.layers[1].links.size() == 2);
  CHECK(net.layers[1].links[0].node == 2);
  CHECK(net.layers[1].links[0].strength == doctest::Approx(0.5));
  CHECK(net.topics.size() == 3);
}

TEST_CASE("subnetwork links are symmetric") {
  const auto s = toy_state();
  for (Index i = 0; i < 4; ++i) {
    const auto from_i = export_subnetwork(s, i, 0.0, {});
    for (const auto& layer : from_i.layers) {
      for (const auto& link : layer.links) {
        const auto from_j = export_subnetwork(s, link.node, 0.0, {});
        bool found = false;
        for (const auto& back : from_j.layers[layer.layer - 1].links) {
          if (back.node == i && back.topic == link.topic) {
            found = true;
            CHECK(back.strength == doctest::Approx(link.strength));
          }
        }
        CHECK(found);
      }
    }
  }
}

TEST_CASE("exports serialize to parseable JSON and readable text") {
  const auto s = toy_state();
  const std::vector<double> tau{0.0};
  const auto tree = export_topic_tree(s, 2, 0, tau, kVocab, 2);
  const auto tj = nlohmann::json::parse(to_json(tree));
  CHECK(tj["type"] == "topic_tree");
  CHECK(tj["root"]["layer"] == 2);
  CHECK(tj["nodes"].size() == tree.nodes.size());
  CHECK(tj["edges"].size() == tree.nodes.size() - 1);
  CHECK(tj["nodes"][1]["words"][0]["word"].is_string());
  CHECK(to_text(tree).find("L2.T0") == 0);

  const std::vector<std::string> names{"n0", "n1", "n2", "n3"};
  const auto net = export_subnetwork(s, 0, 0.0, kVocab, 2);
  const auto nj = nlohmann::json::parse(to_json(net, names));
  CHECK(nj["type"] == "subnetwork");
  CHECK(nj["source"]["name"] == "n0");
  CHECK(nj["layers"].size() == 2);
  CHECK(nj["layers"][0]["links"][0]["name"].is_string());
  CHECK(to_text(net, names).find("source n0") == 0);
}
