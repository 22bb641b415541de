#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "wgae/error.hpp"
#include "wgae/evaluation.hpp"

using namespace wgae;

namespace {

// Fraction of positive-negative pairs ordered correctly, ties counting half.
double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0.0, total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      total += 1.0;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return good / total;
}

double brute_nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  auto count = [&](auto pred) {
    double c = 0;
    for (std::size_t i = 0; i < a.size(); ++i) c += pred(i) ? 1 : 0;
    return c;
  };
  double mi = 0.0, ha = 0.0, hb = 0.0;
  for (int x = 0; x < 5; ++x) {
    const double px = count([&](std::size_t i) { return a[i] == x; }) / n;
    if (px > 0) ha -= px * std::log(px);
    const double py = count([&](std::size_t i) { return b[i] == x; }) / n;
    if (py > 0) hb -= py * std::log(py);
    for (int y = 0; y < 5; ++y) {
      const double pxy = count([&](std::size_t i) { return a[i] == x && b[i] == y; }) / n;
      const double pyy = count([&](std::size_t i) { return b[i] == y; }) / n;
      if (pxy > 0) mi += pxy * std::log(pxy / (px * pyy));
    }
  }
  return mi / (0.5 * (ha + hb));
}

}  // namespace

TEST_CASE("auc and ap examples") {
  const std::vector<double> sep{0.9, 0.8, 0.2, 0.1};
  const std::vector<int> y{1, 1, 0, 0};
  CHECK(auc_ap(sep, y).auc == 1.0);
  CHECK(auc_ap(sep, y).ap == 1.0);

  const std::vector<double> flat(6, 0.3);
  const std::vector<int> y6{1, 0, 1, 0, 0, 1};
  CHECK(auc_ap(flat, y6).auc == 0.5);
  CHECK(auc_ap(flat, y6).ap == doctest::Approx(0.5));

  const std::vector<double> mixed{0.9, 0.4, 0.6, 0.1};
  const auto r = auc_ap(mixed, y);
  CHECK(r.auc == 0.75);
  // ranked: + - + -, precision 1 at recall 1/2, 2/3 at recall 1
  CHECK(r.ap == doctest::Approx(0.5 * 1.0 + 0.5 * 2.0 / 3.0));

  CHECK_THROWS_AS(auc_ap(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
  CHECK_THROWS_AS(auc_ap(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), Error);
  CHECK_THROWS_AS(auc_ap(std::vector<double>{0.1}, std::vector<int>{0, 1}), Error);
}

TEST_CASE("auc agrees with exhaustive pairs") {
  Rng rng(7, 7);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 11);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform() * 5) / 5.0;  // coarse grid forces ties
      y[i] = rng.uniform() < 0.5;
    }
    y[0] = 1;
    y[1] = 0;
    const auto r = auc_ap(s, y);
    CHECK(r.auc == doctest::Approx(brute_auc(s, y)).epsilon(1e-12));
    CHECK(r.ap >= 0.0);
    CHECK(r.ap <= 1.0 + 1e-12);
  }
}

TEST_CASE("hungarian matches brute force") {
  Rng rng(8, 8);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd cost(4, 4);
    for (Eigen::Index i = 0; i < cost.size(); ++i) cost(i) = std::floor(10 * rng.uniform());
    std::vector<int> perm{0, 1, 2, 3};
    double best = 1e300;
    do {
      double c = 0;
      for (int r = 0; r < 4; ++r) c += cost(r, perm[r]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto a = hungarian(cost);
    double got = 0;
    for (int r = 0; r < 4; ++r) got += cost(r, a[r]);
    CHECK(got == best);
  }
  Eigen::MatrixXd wide(2, 3);
  wide << 5, 1, 9, 2, 8, 7;
  CHECK(hungarian(wide) == std::vector<int>{1, 0});
}

TEST_CASE("clustering metrics") {
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  const std::vector<int> permuted{2, 2, 0, 0, 1, 1};
  CHECK(clustering_accuracy(permuted, labels) == 1.0);
  CHECK(normalized_mutual_information(permuted, labels) == doctest::Approx(1.0));

  const std::vector<int> two{0, 0, 1, 1};
  const std::vector<int> one(4, 0);
  CHECK(clustering_accuracy(one, two) == 0.5);
  CHECK(normalized_mutual_information(one, two) == 0.0);

  // contingency [[2, 0], [1, 1]]
  const std::vector<int> pred{0, 0, 1, 1};
  const std::vector<int> truth{0, 0, 0, 1};
  CHECK(clustering_accuracy(pred, truth) == 0.75);
  CHECK(normalized_mutual_information(pred, truth) == doctest::Approx(brute_nmi(pred, truth)).epsilon(1e-12));

  Rng rng(9, 9);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> a(20), b(20);
    for (int i = 0; i < 20; ++i) {
      a[i] = static_cast<int>(rng.uniform() * 4);
      b[i] = static_cast<int>(rng.uniform() * 3);
    }
    CHECK(normalized_mutual_information(a, b) == doctest::Approx(normalized_mutual_information(b, a)).epsilon(1e-12));
    CHECK(normalized_mutual_information(a, b) == doctest::Approx(brute_nmi(a, b)).epsilon(1e-10));
    std::vector<int> relabeled(20);
    for (int i = 0; i < 20; ++i) relabeled[i] = (a[i] + 1) % 4;
    CHECK(clustering_accuracy(relabeled, b) == clustering_accuracy(a, b));
  }
}

TEST_CASE("kmeans and cluster_nodes recover separated blobs") {
  Rng rng(10, 10);
  const int n = 90;
  Eigen::MatrixXd a(n, 2), b(n, 1);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = i % 3;
    a(i, 0) = 10.0 * labels[i] + rng.uniform();
    a(i, 1) = rng.uniform();
    b(i, 0) = rng.uniform();
  }
  const std::vector<Eigen::MatrixXd> layers{a, b};
  const auto s = cluster_nodes(layers, 3, labels, 1);
  CHECK(s.acc == 1.0);
  CHECK(s.nmi == doctest::Approx(1.0));
  const auto k1 = kmeans(a, 3, 4);
  const auto k2 = kmeans(a, 3, 4);
  CHECK(k1.assignment == k2.assignment);
  CHECK_THROWS_AS(cluster_nodes(layers, 1, labels, 1), Error);
  CHECK_THROWS_AS(kmeans(a.topRows(2), 3, 1), Error);
}

TEST_CASE("classification accuracy") {
  EncoderConfig cfg;
  cfg.widths = {3};
  auto w = init_encoder(cfg, 5, 4, 1);
  w.cls_w.setZero();
  w.cls_b << 0, 0, 3, 0;
  const Eigen::MatrixXd theta = Eigen::MatrixXd::Ones(6, 3);
  const std::vector<int> labels{2, 2, 2, -1, 2, 2};
  const std::vector<Index> nodes{0, 1, 2, 4, 5};
  CHECK(classify_nodes(w, theta, labels, nodes) == 1.0);
  const std::vector<Index> with_missing{0, 3};
  CHECK_THROWS_AS(classify_nodes(w, theta, labels, with_missing), Error);

  auto no_head = init_encoder(cfg, 5, 0, 1);
  CHECK_THROWS_AS(classify_nodes(no_head, theta, labels, nodes), Error);

  Rng rng(12, 12);
  const int n = 70000;
  std::vector<int> pred(n), truth(n);
  for (int i = 0; i < n; ++i) {
    pred[i] = static_cast<int>(rng.uniform() * 7);
    truth[i] = static_cast<int>(rng.uniform() * 7);
  }
  CHECK(accuracy(pred, truth) == doctest::Approx(1.0 / 7).epsilon(0.03));
}

TEST_CASE("standard label split") {
  std::vector<int> labels(400);
  for (int i = 0; i < 400; ++i) labels[i] = i % 4;
  labels[7] = -1;
  const auto s = standard_label_split(labels, 4, 20, 100, 200, 3);
  CHECK(s.train.size() == 80);
  CHECK(s.val.size() == 100);
  CHECK(s.test.size() == 200);
  std::vector<int> per(4, 0);
  for (Index i : s.train) ++per[labels[i]];
  CHECK(per == std::vector<int>{20, 20, 20, 20});
  std::vector<Index> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  CHECK(std::find(all.begin(), all.end(), Index{7}) == all.end());
  const auto again = standard_label_split(labels, 4, 20, 100, 200, 3);
  CHECK(again.test == s.test);
  CHECK_THROWS_AS(standard_label_split(labels, 4, 20, 300, 200, 3), Error);
  const auto masked = mask_labels(labels, s.train);
  CHECK(std::count_if(masked.begin(), masked.end(), [](int v) { return v >= 0; }) == 80);
}

TEST_CASE("link prediction: leakage check and chance level") {
  // features independent of an Erdos-Renyi graph: nothing to learn
  Rng rng(13, 13);
  const Index n = 200;
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (rng.uniform() < 0.08) edges.push_back({i, j});
    }
  }
  std::vector<CountEntry> entries;
  for (Index i = 0; i < n; ++i) {
    for (Index v = 0; v < 20; ++v) {
      const auto c = sample_poisson(0.5, rng);
      if (c) entries.push_back({i, v, static_cast<std::uint32_t>(c)});
    }
  }
  const auto x = SparseCountMatrix::from_entries(n, 20, entries);
  const auto g = AdjacencyGraph::from_edges(n, edges);
  const auto split = split_edges(g, 0.05, 0.3, 2);
  TrainConfig c;
  c.widths = {4};
  c.iterations = 0;
  const auto model = train(x, graph_from_pairs(n, split.train_edges), c);
  const auto scores = link_prediction_eval(model, x, split);
  CHECK(std::abs(scores.test.auc - 0.5) <= 0.05);
  const auto sampled = link_prediction_eval(model, x, split, ThetaScoring::kSampleAverage, 3, 1);
  CHECK(std::abs(sampled.test.auc - 0.5) <= 0.05);
  // scoring is deterministic under posterior means
  CHECK(link_prediction_eval(model, x, split).test.auc == scores.test.auc);

  EdgeSplit leaky = split;
  leaky.test_edges.push_back(split.train_edges.front());
  CHECK_THROWS_WITH_AS(link_prediction_eval(model, x, leaky), doctest::Contains("split leakage"), Error);
}

TEST_CASE("metrics report") {
  MetricsReport r;
  r.task = "link-pred";
  r.runs.push_back({1, {{"auc", 0.9}, {"ap", 0.8}}});
  r.runs.push_back({2, {{"auc", 0.7}, {"ap", 0.6}}});
  CHECK(r.mean("auc") == doctest::Approx(0.8));
  CHECK(r.stddev("auc") == doctest::Approx(0.1));
  CHECK(r.metric_names() == std::vector<std::string>{"ap", "auc"});
  const auto text = r.to_records();
  CHECK(text.find("task=link-pred seed=1 ap=0.800000 auc=0.900000") != std::string::npos);
  CHECK(text.find("auc_mean=0.800000") != std::string::npos);
  CHECK(r.to_table().find("+/-") != std::string::npos);
}
