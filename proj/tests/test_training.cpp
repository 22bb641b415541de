#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "wgae/error.hpp"
#include "wgae/training.hpp"

using namespace wgae;

namespace {

GenerativeSample small_sample(Index n, std::uint64_t seed) {
  const std::vector<int> widths{4, 2};
  DecoderHyper h = DecoderHyper::defaults(widths);
  h.gamma.setConstant(0.3);
  GenerativeOptions opt;
  opt.node_scale = 0.05;
  opt.phi_eta = 0.1;
  opt.u_layers = {Eigen::VectorXd::Constant(4, 0.002), Eigen::VectorXd::Constant(2, 0.002)};
  return sample_gpgbn(widths, 30, n, h, opt, seed);
}

TrainConfig small_config() {
  TrainConfig c;
  c.widths = {4, 2};
  c.iterations = 5;
  c.subset_size = 10;
  c.learning_rate = 1e-2;
  return c;
}

bool same_weights(const EncoderWeights& a, const EncoderWeights& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (*pa[i] != *pb[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in(
      "# comment\nwidths = 8, 4\nlayers = 2\nbeta = 0.1\ntrainer = scalable\nencoder = wgaae\n"
      "supervised = true\ntau_phi = 1.5\n");
  const TrainConfig c = parse_config(in);
  CHECK(c.widths == std::vector<int>{8, 4});
  CHECK(c.beta == 0.1);
  CHECK(c.trainer == TrainerKind::kScalable);
  CHECK(c.encoder == EncoderKind::kWgaae);
  CHECK(c.supervised);
  CHECK(c.tau_phi_at(1) == 1.5);
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.subset_size == 100);

  std::istringstream round(to_text(c));
  const TrainConfig back = parse_config(round);
  CHECK(to_text(back) == to_text(c));

  std::istringstream typo("widths = 4\nbta = 1\n");
  CHECK_THROWS_WITH_AS(parse_config(typo, "c.cfg"), doctest::Contains("c.cfg: line 2: config: unknown key 'bta'"),
                       Error);
  std::istringstream bad("beta = fast\n");
  CHECK_THROWS_AS(parse_config(bad), Error);
  std::istringstream negative("beta = -1\n");
  CHECK_THROWS_AS(parse_config(negative), Error);
  std::istringstream layers("widths = 4, 4\nlayers = 3\n");
  CHECK_THROWS_AS(parse_config(layers), Error);
  std::istringstream no_eq("widths 4\n");
  CHECK_THROWS_AS(parse_config(no_eq), Error);
  std::istringstream mix("k_mix = 1.5\n");
  CHECK_THROWS_AS(parse_config(mix), Error);

  TrainConfig big;
  big.trainer = TrainerKind::kScalable;
  big.subset_size = 50;
  CHECK_THROWS_AS(big.validate_for(20), Error);
  CHECK_NOTHROW(big.validate_for(50));
}

TEST_CASE("node inclusion probabilities") {
  const std::vector<double> f{1, 5, 0, 2, 9, 3};
  const auto uniform = node_inclusion_probabilities(f, 0.3, 0.0);
  for (double p : uniform) CHECK(std::abs(p - 1.0 / 6) < 1e-15);

  const auto pure = node_inclusion_probabilities(f, 1.0, 1.0);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(pure[i] == doctest::Approx(f[i] / 20.0).epsilon(1e-14));

  Rng rng(3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> g(7);
    for (double& v : g) v = 10 * rng.uniform();
    const auto p = node_inclusion_probabilities(g, rng.uniform(), 2 * rng.uniform());
    double s = 0.0;
    for (double v : p) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(node_inclusion_probabilities(f, 1.2, 1.0), Error);
  CHECK_THROWS_AS(node_inclusion_probabilities(f, -0.1, 1.0), Error);
  CHECK_THROWS_AS(node_inclusion_probabilities(std::vector<double>{0, 0, 0}, 0.5, 1.0), Error);
  CHECK_THROWS_AS(node_inclusion_probabilities(std::vector<double>{1}, 0.5, 1.0), Error);
}

TEST_CASE("subset draws match inclusion probabilities") {
  // skewed degrees on 10 nodes: a hub joined to everyone plus a short chain
  std::vector<Edge> edges;
  for (Index j = 1; j < 10; ++j) edges.push_back({0, j});
  edges.push_back({1, 2});
  edges.push_back({2, 3});
  const auto g = AdjacencyGraph::from_edges(10, edges);
  const auto x = SparseCountMatrix::from_entries(10, 1, {});
  const auto p = node_inclusion_probabilities(node_importance(x, g, Importance::kDegree), 0.7, 1.0);
  const AliasTable table(p);
  Rng rng(11, 2);
  std::vector<double> freq(10, 0.0);
  const int draws = 100000;
  for (int b = 0; b < draws / 100; ++b) {
    for (Index i : sample_node_subset(table, 100, rng)) freq[i] += 1.0;
  }
  for (std::size_t i = 0; i < 10; ++i) {
    const double sigma = std::sqrt(draws * p[i] * (1 - p[i]));
    CHECK(std::abs(freq[i] - draws * p[i]) <= 3 * sigma);
  }
}

TEST_CASE("simplex projection") {
  Eigen::VectorXd on(3);
  on << 0.2, 0.3, 0.5;
  CHECK((project_to_simplex(on) - on).cwiseAbs().maxCoeff() < 1e-15);
  Eigen::VectorXd off(4);
  off << -0.5, 0.9, 0.4, 2.0;
  const auto p = project_to_simplex(off, 1e-6);
  CHECK(std::abs(p.sum() - 1.0) < 1e-12);
  CHECK(p.minCoeff() >= 1e-6 * (1 - 1e-12));
  // the Euclidean projection of (0, 0.9, 0.4, 2) keeps only the largest coordinate
  CHECK(p[3] == doctest::Approx(1.0 - 3e-6));
}

TEST_CASE("tlasgr update") {
  TlasgrState st;
  CHECK(st.stepsize() == doctest::Approx(std::pow(20.0, -0.7)));
  st.step = 10;
  CHECK(st.stepsize() == doctest::Approx(std::pow(30.0, -0.7)));

  // uniform phi with zero counts is a fixed point of the drift
  TlasgrState fixed;
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(5, 3, 0.2);
  const auto same = tlasgr_update_phi(uniform, Eigen::MatrixXd::Zero(5, 3), 0.1, fixed, 0, 1, false);
  CHECK((same - uniform).cwiseAbs().maxCoeff() < 1e-15);

  // 2 x 1 case: counts (3, 1) on phi (0.5, 0.5) push mass to the first word
  TlasgrState two;
  const Eigen::MatrixXd half = Eigen::MatrixXd::Constant(2, 1, 0.5);
  const Eigen::MatrixXd counts = (Eigen::MatrixXd(2, 1) << 3, 1).finished();
  const auto moved = tlasgr_update_phi(half, counts, 0.1, two, 0, 1, false);
  CHECK(moved(0, 0) > 0.5);
  CHECK(moved(1, 0) < 0.5);
  // and counts (1, 3) the other way
  TlasgrState two_b;
  const auto back = tlasgr_update_phi(half, counts.reverse(), 0.1, two_b, 0, 1, false);
  CHECK(back(0, 0) < 0.5);

  // random inputs with noise stay on the simplex above the floor
  Rng rng(5, 5);
  TlasgrState noisy;
  noisy.rho = 7.0;
  Eigen::MatrixXd phi = Eigen::MatrixXd::Constant(6, 4, 1.0 / 6);
  for (int it = 0; it < 200; ++it) {
    Eigen::MatrixXd c(6, 4);
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = std::floor(5 * rng.uniform());
    phi = tlasgr_update_phi(phi, c, 0.05, noisy, 0, 9, true);
    ++noisy.step;
    for (Eigen::Index k = 0; k < 4; ++k) {
      REQUIRE(std::abs(phi.col(k).sum() - 1.0) < 1e-12);
      REQUIRE(phi.col(k).minCoeff() >= kPhiFloor * (1 - 1e-9));
    }
  }
}

TEST_CASE("tlasgr chain matches the Gibbs posterior mean of phi") {
  // Fixed theta, V = 4, K = 2: both chains alternate augmentation with a
  // phi update; with N_s = N the stochastic chain targets the same posterior.
  const Index n = 30;
  Eigen::MatrixXd phi_true(4, 2);
  phi_true << 0.5, 0.05, 0.3, 0.15, 0.15, 0.3, 0.05, 0.5;
  Eigen::MatrixXd theta(n, 2);
  Rng rng(21, 1);
  for (Index j = 0; j < n; ++j) {
    theta(j, 0) = j % 2 ? 8.0 : 1.0;
    theta(j, 1) = j % 2 ? 1.0 : 8.0;
  }
  std::vector<CountEntry> entries;
  const Eigen::MatrixXd rates = phi_true * theta.transpose();
  for (Index j = 0; j < n; ++j) {
    for (Index v = 0; v < 4; ++v) {
      const auto c = sample_poisson(rates(v, j), rng);
      if (c) entries.push_back({j, v, static_cast<std::uint32_t>(c)});
    }
  }
  const auto x = SparseCountMatrix::from_entries(n, 4, entries);
  const double eta = 0.1;
  const int burn = 500, total = 4000;
  Eigen::MatrixXd gibbs = Eigen::MatrixXd::Constant(4, 2, 0.25), sgmcmc = gibbs;
  Eigen::MatrixXd mean_gibbs = Eigen::MatrixXd::Zero(4, 2), mean_sg = mean_gibbs;
  TlasgrState st;
  for (int it = 0; it < total; ++it) {
    const AugmentOptions opt{false, static_cast<std::uint64_t>(it)};
    gibbs = update_phi_gibbs(augment_node_counts(x, gibbs, theta, 1, 0, opt).term_topic, eta, 1, 0, it);
    sgmcmc = tlasgr_update_phi(sgmcmc, augment_node_counts(x, sgmcmc, theta, 2, 0, opt).term_topic, eta, st, 0, 2);
    ++st.step;
    if (it >= burn) {
      mean_gibbs += gibbs;
      mean_sg += sgmcmc;
    }
  }
  mean_gibbs /= total - burn;
  mean_sg /= total - burn;
  INFO("gibbs\n" << mean_gibbs << "\ntlasgr\n" << mean_sg);
  CHECK((mean_gibbs - mean_sg).cwiseAbs().maxCoeff() <= 0.05);
}

TEST_CASE("adam ascends a concave objective") {
  Adam adam(0.05);
  Matrix x = Matrix::Constant(1, 2, 0.0);
  std::vector<Matrix*> params{&x};
  for (int i = 0; i < 2000; ++i) {
    Matrix g(1, 2);
    g << -2 * (x(0, 0) - 3), -2 * (x(0, 1) + 1);
    adam.ascend(params, std::vector<Matrix>{g});
  }
  CHECK(x(0, 0) == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(x(0, 1) == doctest::Approx(-1.0).epsilon(1e-3));
  CHECK(adam.steps() == 2000);
}

TEST_CASE("zero iterations return the initial state") {
  const auto s = small_sample(20, 1);
  TrainConfig c = small_config();
  c.iterations = 0;
  const auto r = train_full_batch(s.features, s.graph, c);
  const auto dec = init_decoder(c.widths, 30, 20, c.decoder_hyper(), c.seed);
  const auto enc = init_encoder(c.encoder_config(), 30, 0, c.seed);
  CHECK(r.log.empty());
  for (int l = 0; l < 2; ++l) {
    CHECK(r.decoder.phi[l] == dec.phi[l]);
    CHECK(r.decoder.theta[l] == dec.theta[l]);
  }
  CHECK(same_weights(r.encoder, enc));
}

TEST_CASE("trainers are deterministic") {
  const auto s = small_sample(40, 2);
  for (TrainerKind kind : {TrainerKind::kFullBatch, TrainerKind::kScalable}) {
    for (EncoderKind enc : {EncoderKind::kWgcae, EncoderKind::kWgaae}) {
      TrainConfig c = small_config();
      c.trainer = kind;
      c.encoder = enc;
      c.heads = 2;
      const auto a = train(s.features, s.graph, c);
      const auto b = train(s.features, s.graph, c);
      CHECK(same_weights(a.encoder, b.encoder));
      for (int l = 0; l < 2; ++l) {
        CHECK(a.decoder.phi[l] == b.decoder.phi[l]);
        CHECK(a.decoder.theta[l] == b.decoder.theta[l]);
      }
      CHECK(a.log.size() == 5);
      for (int l = 0; l < 2; ++l) {
        for (Eigen::Index k = 0; k < a.decoder.phi[l].cols(); ++k) {
          CHECK(std::abs(a.decoder.phi[l].col(k).sum() - 1.0) < 1e-12);
        }
      }
      c.seed = 99;
      const auto other = train(s.features, s.graph, c);
      CHECK_FALSE(same_weights(a.encoder, other.encoder));
    }
  }
}

TEST_CASE("full-batch ELBO rises over the first 50 iterations") {
  std::vector<double> gains;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = small_sample(50, 100 + seed);
    TrainConfig c = small_config();
    c.iterations = 50;
    c.seed = seed;
    const auto r = train_full_batch(s.features, s.graph, c);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 5; ++i) {
      head += r.log[i].elbo;
      tail += r.log[45 + i].elbo;
    }
    gains.push_back(tail - head);
  }
  std::sort(gains.begin(), gains.end());
  CHECK(gains[2] > 0.0);
}

TEST_CASE("scalable trainer logs subgraphs and skips empty edge terms") {
  const auto s = small_sample(40, 3);
  TrainConfig c = small_config();
  c.trainer = TrainerKind::kScalable;
  c.importance = Importance::kLength;
  const AdjacencyGraph empty = AdjacencyGraph::from_edges(40, {});
  const auto r = train_scalable(s.features, empty, c);
  for (const auto& rec : r.log) {
    CHECK(rec.edge_skipped);
    CHECK(rec.edge == 0.0);
    CHECK(rec.subgraph_nodes > 0);
    CHECK(rec.subgraph_nodes <= 10);
    CHECK(to_text(rec).find("edge_skipped=1") != std::string::npos);
  }
  c.importance = Importance::kDegree;
  c.debias = Debias::kNone;
  const auto with_edges = train_scalable(s.features, s.graph, c);
  CHECK(with_edges.log.size() == 5);
}

TEST_CASE("hooks: log stream, early stop, periodic checkpoints") {
  const auto s = small_sample(20, 4);
  TrainConfig c = small_config();
  c.checkpoint_interval = 2;
  test::TempDir dir;
  std::ostringstream log;
  TrainHooks hooks;
  hooks.log_stream = &log;
  hooks.checkpoint_path = dir.path() / "ck.txt";
  int seen = 0;
  hooks.on_iteration = [&](const IterationRecord&, const DecoderState&, const EncoderWeights&) {
    return ++seen < 3;
  };
  const auto r = train_full_batch(s.features, s.graph, c, nullptr, hooks);
  CHECK(r.log.size() == 3);
  const std::string text = log.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  CHECK(text.rfind("iter=0 elbo=", 0) == 0);
  REQUIRE(std::filesystem::exists(*hooks.checkpoint_path));
  const auto ck = load_checkpoint(*hooks.checkpoint_path);
  CHECK(ck.decoder.iteration == 2);
  CHECK(to_text(ck.config) == to_text(c));
}

TEST_CASE("supervised training needs labels") {
  const auto s = small_sample(20, 5);
  TrainConfig c = small_config();
  c.supervised = true;
  CHECK_THROWS_AS(train_full_batch(s.features, s.graph, c), Error);
  std::vector<int> labels(20, -1);
  labels[0] = 0;
  labels[1] = 1;
  const auto r = train_full_batch(s.features, s.graph, c, &labels, {}, 2);
  CHECK(r.encoder.num_classes() == 2);
  const auto rs = train_scalable(s.features, s.graph, c, &labels, {}, 2);
  CHECK(rs.log.size() == 5);
}

TEST_CASE("checkpoint round trip") {
  const auto s = small_sample(20, 6);
  TrainConfig c = small_config();
  c.encoder = EncoderKind::kWgaae;
  c.heads = 2;
  const auto r = train_full_batch(s.features, s.graph, c);
  std::stringstream buf;
  write_checkpoint(buf, {c, r.decoder, r.encoder});
  const auto back = read_checkpoint(buf);
  CHECK(to_text(back.config) == to_text(c));
  CHECK(same_weights(back.encoder, r.encoder));
  for (int l = 0; l < 2; ++l) {
    CHECK(back.decoder.phi[l] == r.decoder.phi[l]);
    CHECK(back.decoder.u[l] == r.decoder.u[l]);
  }
  std::stringstream junk("not a checkpoint");
  CHECK_THROWS_AS(read_checkpoint(junk), Error);
}
