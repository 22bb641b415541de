#include "wgae/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "wgae/encoders.hpp"
#include "wgae/error.hpp"
#include "wgae/evaluation.hpp"
#include "wgae/export.hpp"
#include "wgae/gpgbn.hpp"
#include "wgae/training.hpp"

namespace wgae {
namespace {

constexpr double kSimplexTol = 1e-12;

class Recorder {
 public:
  explicit Recorder(SelftestSuite& suite) : suite_(suite) {}

  void check(const std::string& name, bool ok, const std::string& detail = {}) {
    suite_.checks.push_back({name, ok, detail});
  }

  // |measured - expected| <= 3 sigma.
  void within_sigma(const std::string& name, double measured, double expected, double sigma) {
    const double z = sigma > 0 ? std::abs(measured - expected) / sigma : (measured == expected ? 0.0 : INFINITY);
    std::ostringstream d;
    d.precision(6);
    d << "mc=" << measured << " exact=" << expected << " z=" << z;
    check(name, z <= 3.0, d.str());
  }

  // Runs `body`, turning an exception into a failed check.
  void guarded(const std::string& name, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      check(name, false, std::string("threw: ") + e.what());
    }
  }

 private:
  SelftestSuite& suite_;
};

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(3);
  o << v;
  return o.str();
}

// Running mean and variance of a Monte-Carlo sample.
struct Moments {
  double n = 0, mean = 0, m2 = 0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double sigma_of_mean() const { return std::sqrt(m2 / (n - 1) / n); }
};

GenerativeSample small_model(std::uint64_t seed) {
  const std::vector<int> widths{4, 3};
  DecoderHyper h = DecoderHyper::defaults(widths);
  h.gamma.setConstant(0.5);
  GenerativeOptions o;
  o.node_scale = 0.1;
  o.phi_eta = 0.2;
  o.u_layers = {Eigen::VectorXd::Constant(4, 0.05), Eigen::VectorXd::Constant(3, 0.05)};
  return sample_gpgbn(widths, 20, 40, h, o, seed);
}

bool columns_on_simplex(const Eigen::MatrixXd& m) {
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    if (std::abs(m.col(k).sum() - 1.0) > kSimplexTol || (m.col(k).array() < 0.0).any()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

void conservation_suite(Recorder& r, const SelftestOptions& opt) {
  const auto data = small_model(opt.seed);
  const auto& s = data.truth;

  r.guarded("node augmentation", [&] {
    std::uint64_t total = 0;
    for (const auto& e : data.features.entries()) total += e.count;
    const auto a = augment_node_counts(data.features, s.phi[0], s.theta[0], opt.seed, 0, {true, 0});
    bool per_entry = true;
    std::size_t at = 0;
    for (Index j = 0; j < data.features.num_nodes(); ++j) {
      for (auto count : data.features.counts(j)) {
        std::uint64_t split = 0;
        for (std::size_t q = a.split_offsets[at]; q < a.split_offsets[at + 1]; ++q) split += a.splits[q].second;
        per_entry = per_entry && split == count;
        ++at;
      }
    }
    r.check("node augmentation: every entry splits into its count", per_entry);
    r.check("node augmentation: term-topic total equals corpus total",
            a.term_topic.sum() == static_cast<double>(total) && a.doc_topic.sum() == static_cast<double>(total),
            "total=" + std::to_string(total));
  });

  r.guarded("edge augmentation", [&] {
    const auto a = augment_edge_counts(data.graph, s.u, s.theta, opt.seed);
    bool rows = true, positive = true;
    double edge_total = 0.0;
    for (std::size_t e = 0; e < a.edge_totals.size(); ++e) {
      rows = rows && a.edge_layer_totals.row(static_cast<Eigen::Index>(e)).sum() == static_cast<double>(a.edge_totals[e]);
      positive = positive && a.edge_totals[e] >= 1;
      edge_total += static_cast<double>(a.edge_totals[e]);
    }
    double topic_total = 0.0, doc_total = 0.0;
    for (std::size_t l = 0; l < a.topic_total.size(); ++l) {
      topic_total += a.topic_total[l].sum();
      doc_total += a.doc_topic[l].sum();
    }
    r.check("edge augmentation: layer split of every edge sums to m_ij", rows);
    r.check("edge augmentation: binary edges carry m_ij >= 1", positive);
    r.check("edge augmentation: topic totals equal edge totals", topic_total == edge_total && doc_total == 2 * edge_total,
            "edges=" + std::to_string(data.graph.num_edges()));
  });

  r.guarded("upward propagation", [&] {
    const auto a = augment_node_counts(data.features, s.phi[0], s.theta[0], opt.seed, 0);
    const auto up = propagate_counts_upward(a.doc_topic, Eigen::MatrixXd(), s.phi[1], s.theta[1], opt.seed, 0);
    bool bounded = true;
    for (Index j = 0; j < up.num_nodes(); ++j) {
      bounded = bounded && static_cast<double>(up.row_total(j)) <= a.doc_topic.row(j).sum();
      bounded = bounded && (a.doc_topic.row(j).sum() == 0.0) == (up.row_total(j) == 0);
    }
    r.check("CRT propagation: 1 <= tables <= customers per node", bounded);
  });

  r.guarded("phi simplex", [&] {
    const auto a = augment_node_counts(data.features, s.phi[0], s.theta[0], opt.seed, 0);
    r.check("Gibbs phi update stays on the simplex", columns_on_simplex(update_phi_gibbs(a.term_topic, 0.01, opt.seed, 0)));
    TlasgrState st;
    st.rho = 10.0;
    Eigen::MatrixXd phi = s.phi[0];
    bool ok = true;
    for (int it = 0; it < 50; ++it) {
      phi = tlasgr_update_phi(phi, a.term_topic, 0.01, st, 0, opt.seed);
      ++st.step;
      ok = ok && columns_on_simplex(phi);
    }
    r.check("TLASGR phi update stays on the simplex (50 steps)", ok);
    DecoderState state = init_decoder(s.widths, s.vocab_size, s.num_nodes, s.hyper, opt.seed);
    for (int it = 0; it < 3; ++it) gibbs_sweep(state, data.features, data.graph);
    ok = true;
    for (const auto& p : state.phi) ok = ok && columns_on_simplex(p);
    for (const auto& t : state.theta) ok = ok && (t.array() > 0.0).all();
    r.check("Gibbs sweep keeps every phi on the simplex and theta positive", ok);
  });

  r.guarded("node sampling", [&] {
    const auto f = node_importance(data.features, data.graph, Importance::kDegree);
    double worst = 0.0;
    for (double k_mix : {0.0, 0.3, 1.0}) {
      for (double alpha : {0.0, 0.5, 2.0}) {
        const auto p = node_inclusion_probabilities(f, k_mix, alpha);
        worst = std::max(worst, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
      }
    }
    r.check("node inclusion probabilities sum to 1", worst <= kSimplexTol, "max |sum - 1|=" + fmt(worst));
  });

  r.guarded("attention rows", [&] {
    EncoderConfig cfg;
    cfg.kind = EncoderKind::kWgaae;
    cfg.widths = {3};
    const auto hoods = build_neighborhoods(data.graph);
    Rng rng(opt.seed, 3);
    Tape tape;
    auto random = [&](Eigen::Index rows, Eigen::Index cols) {
      Matrix m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = 2.0 * rng.uniform() - 1.0;
      return tape.constant(m);
    };
    Matrix eps(static_cast<Eigen::Index>(hoods.row.size()), 1);
    for (Eigen::Index e = 0; e < eps.rows(); ++e) eps(e, 0) = rng.uniform();
    double worst = 0.0;
    for (bool log_softmax : {false, true}) {
      cfg.softmax_of_log = log_softmax;
      const auto head = wgaae_attention(random(40, 3), random(40, 3), random(3, 1), random(3, 1), hoods, cfg, eps);
      for (std::size_t i = 0; i + 1 < hoods.offsets.size(); ++i) {
        double total = 0.0;
        for (int e = hoods.offsets[i]; e < hoods.offsets[i + 1]; ++e) total += head.normalized.value()(e, 0);
        worst = std::max(worst, std::abs(total - 1.0));
      }
    }
    r.check("attention weights sum to 1 over every neighborhood", worst <= kSimplexTol, "max |sum - 1|=" + fmt(worst));
  });
}

// ---------------------------------------------------------------------------

void sampler_suite(Recorder& r, const SelftestOptions& opt) {
  const auto n = opt.draws;
  for (double lambda : {0.1, 1.0, 10.0}) {
    Rng rng = Rng::derive(opt.seed, 100, static_cast<std::uint64_t>(lambda * 1000));
    Moments m;
    for (std::uint64_t i = 0; i < n; ++i) m.add(static_cast<double>(sample_truncated_poisson(lambda, rng)));
    r.within_sigma("Pois+ mean at lambda=" + fmt(lambda), m.mean, lambda / (1.0 - std::exp(-lambda)), m.sigma_of_mean());
  }
  for (auto [customers, a] : {std::pair<std::uint64_t, double>{20, 0.5}, {100, 3.0}, {2000, 1.5}}) {
    Rng rng = Rng::derive(opt.seed, 101, customers);
    Moments m;
    for (std::uint64_t i = 0; i < n; ++i) m.add(static_cast<double>(sample_crt(customers, a, rng)));
    double exact = 0.0;
    for (std::uint64_t i = 0; i < customers; ++i) exact += a / (a + static_cast<double>(i));
    r.within_sigma("CRT mean at n=" + std::to_string(customers) + " r=" + fmt(a), m.mean, exact, m.sigma_of_mean());
  }
  for (auto [k, lambda] : {std::pair{0.5, 1.0}, std::pair{2.0, 3.0}, std::pair{5.0, 0.7}}) {
    Rng rng = Rng::derive(opt.seed, 102, static_cast<std::uint64_t>(k * 100), static_cast<std::uint64_t>(lambda * 100));
    Moments m1, m2;
    for (std::uint64_t i = 0; i < n; ++i) {
      const double x = sample_weibull(k, lambda, rng).value;
      m1.add(x);
      m2.add(x * x);
    }
    const std::string tag = " at k=" + fmt(k) + " lambda=" + fmt(lambda);
    r.within_sigma("Weibull mean" + tag, m1.mean, lambda * std::tgamma(1.0 + 1.0 / k), m1.sigma_of_mean());
    r.within_sigma("Weibull second moment" + tag, m2.mean, lambda * lambda * std::tgamma(1.0 + 2.0 / k),
                   m2.sigma_of_mean());
  }
  // BerPo: 1(Pois(rate) >= 1) with rate = sum_t sum_k u_k theta_ik theta_jk.
  const auto model = small_model(opt.seed);
  for (auto [i, j] : {std::pair<Index, Index>{0, 1}, {2, 7}, {5, 11}}) {
    const double rate = pair_rate(model.truth.u, model.truth.theta, i, j);
    Rng rng = Rng::derive(opt.seed, 103, i, j);
    Moments m;
    for (std::uint64_t d = 0; d < n; ++d) m.add(sample_poisson(rate, rng) >= 1 ? 1.0 : 0.0);
    const double p = edge_probability(model.truth.u, model.truth.theta, i, j);
    r.within_sigma("BerPo marginal at rate=" + fmt(rate), m.mean, p, std::sqrt(p * (1 - p) / static_cast<double>(n)));
  }
}

// ---------------------------------------------------------------------------

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = lo + (hi - lo) * rng.uniform();
  return m;
}

SparseCountMatrix five_node_features() {
  return SparseCountMatrix::from_entries(5, 6,
                                         {{0, 0, 2}, {0, 3, 1}, {1, 1, 3}, {2, 2, 1}, {2, 5, 2}, {3, 4, 1},
                                          {3, 0, 1}, {4, 5, 4}, {4, 1, 1}});
}

AdjacencyGraph five_node_graph() { return AdjacencyGraph::from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {3, 4}}); }

void gradient_suite(Recorder& r, const SelftestOptions& opt) {
  using namespace ad;
  Rng rng(opt.seed, 7);
  auto run = [&](const std::string& name, const Objective& f, std::vector<Matrix> params) {
    r.guarded(name, [&] {
      const auto rep = check_gradients(f, params, opt.gradient_tolerance);
      std::string detail = "max rel err " + fmt(rep.max_rel_error);
      if (rep.non_checkable) detail += " (kink at " + rep.kink_op + ")";
      r.check(name, rep.passed() && rep.max_rel_error <= opt.gradient_tolerance, detail);
    });
  };
  const Matrix a = random_matrix(rng, 3, 4, -1, 1), b = random_matrix(rng, 3, 4, -1, 1);
  const Matrix pos = random_matrix(rng, 3, 4, 0.3, 2.5), row = random_matrix(rng, 1, 4, -1, 1);
  const Matrix col = random_matrix(rng, 3, 1, -1, 1), right = random_matrix(rng, 4, 2, -1, 1);

  run("add/sub/mul", [](Tape&, std::span<const Var> p) { return sum(mul(add(p[0], p[1]), sub(p[0], p[1]))); }, {a, b});
  run("div", [](Tape&, std::span<const Var> p) { return sum(div(p[0], p[1])); }, {a, pos});
  run("scale/add_scalar/neg", [](Tape&, std::span<const Var> p) { return sum(scale(add_scalar(neg(p[0]), 2.0), 3.0)); },
      {a});
  run("mul_row", [](Tape&, std::span<const Var> p) { return sum(mul(mul_row(p[0], p[1]), p[0])); }, {a, row});
  run("add_row/exp", [](Tape&, std::span<const Var> p) { return sum(exp(add_row(p[0], p[1]))); }, {a, row});
  run("mul_col", [](Tape&, std::span<const Var> p) { return sum(exp(mul_col(p[0], p[1]))); }, {a, col});
  run("row_logsumexp", [](Tape&, std::span<const Var> p) { return sum(mul(row_logsumexp(p[0]), p[1])); }, {a, col});
  run("matmul", [](Tape&, std::span<const Var> p) { return sum(exp(matmul(p[0], p[1]))); }, {a, right});
  run("log", [](Tape&, std::span<const Var> p) { return sum(mul(log(p[0]), p[1])); }, {pos, a});
  run("softplus", [](Tape&, std::span<const Var> p) { return sum(mul(softplus(p[0]), p[0])); }, {a});
  run("leaky_relu", [](Tape&, std::span<const Var> p) { return sum(mul(leaky_relu(p[0], 0.2), p[0])); }, {a});
  run("lgamma", [](Tape&, std::span<const Var> p) { return sum(lgamma(p[0])); }, {pos});
  run("digamma", [](Tape&, std::span<const Var> p) { return sum(digamma(p[0])); }, {pos});
  run("reciprocal", [](Tape&, std::span<const Var> p) { return sum(reciprocal(p[0])); }, {pos});
  run("log1mexp", [](Tape&, std::span<const Var> p) { return sum(log1mexp(p[0])); }, {pos});
  run("col_sum/row_sum", [](Tape&, std::span<const Var> p) { return add(sum(exp(col_sum(p[0]))), sum(exp(row_sum(p[0])))); },
      {a});
  const std::vector<int> gather{2, 0, 2};
  run("gather_rows", [&](Tape&, std::span<const Var> p) { return sum(exp(gather_rows(p[0], gather))); }, {a});
  const Matrix scores = random_matrix(rng, 6, 1, -1, 1), weights = random_matrix(rng, 6, 1, -1, 1);
  const std::vector<int> seg{0, 1, 4, 6};
  run("segment_softmax",
      [&](Tape& t, std::span<const Var> p) { return sum(mul(segment_softmax(p[0], seg), t.constant(weights))); },
      {scores});
  const std::vector<int> rows{0, 0, 1, 2, 2, 2}, cols{0, 1, 1, 0, 1, 2};
  run("edge_spmm", [&](Tape&, std::span<const Var> p) { return sum(exp(edge_spmm(p[0], rows, cols, 3, p[1]))); },
      {weights, random_matrix(rng, 3, 2, -1, 1)});
  const SparseCountMatrix x5 = five_node_features();
  const SparseMatrix x5e = x5.to_eigen();
  const SparseMatrix a5 = normalize_adjacency(five_node_graph(), true).matrix;
  run("spmm", [&](Tape&, std::span<const Var> p) { return sum(exp(spmm(a5, p[0]))); }, {random_matrix(rng, 5, 2, -1, 1)});
  Matrix phi6 = random_matrix(rng, 6, 2, 0.1, 1.0);
  phi6.array().rowwise() /= phi6.colwise().sum().array();
  run("poisson_loglik", [&](Tape&, std::span<const Var> p) { return poisson_loglik(p[0], phi6, x5e); },
      {random_matrix(rng, 5, 2, 0.2, 3.0)});
  const Matrix eps = random_matrix(rng, 2, 3, 0.05, 0.95);
  run("weibull_reparam", [&](Tape&, std::span<const Var> p) { return sum(weibull_reparam(p[0], p[1], eps)); },
      {random_matrix(rng, 2, 3, 0.5, 4.0), random_matrix(rng, 2, 3, 0.3, 2.0)});
  const Matrix kl_rate = random_matrix(rng, 2, 3, 0.5, 2.0);
  run("Weibull-gamma KL",
      [&](Tape&, std::span<const Var> p) { return kl_weibull_gamma(p[0], p[1], p[2], kl_rate); },
      {random_matrix(rng, 2, 3, 0.5, 3.0), random_matrix(rng, 2, 3, 0.3, 2.0), random_matrix(rng, 2, 3, 0.3, 2.0)});

  const auto in = EncoderInput::build(x5, five_node_graph());
  run("edge log-likelihood",
      [&](Tape& t, std::span<const Var> p) {
        return edge_loglik(t, {p[0], p[1]}, {p[2], p[3]}, in.edge_src, in.edge_dst, {}, 1e-12, nullptr);
      },
      {random_matrix(rng, 5, 3, 0.1, 1.5), random_matrix(rng, 5, 2, 0.1, 1.5), random_matrix(rng, 1, 3, -1, 0),
       random_matrix(rng, 1, 2, -1, 0)});
  const std::vector<double> node_w{0.5, 1.5, 1.0, 2.0, 0.7};
  run("weighted edge log-likelihood",
      [&](Tape& t, std::span<const Var> p) {
        return edge_loglik(t, {p[0]}, {p[1]}, in.edge_src, in.edge_dst, node_w, 1e-12, nullptr);
      },
      {random_matrix(rng, 5, 3, 0.1, 1.5), random_matrix(rng, 1, 3, -1, 0)});

  // Encoders on the 5-node graph with T = 2.
  std::vector<Eigen::MatrixXd> phi;
  Index below = 6;
  for (int k : {3, 2}) {
    Eigen::MatrixXd m = random_matrix(rng, below, k, 0.2, 1.2);
    m.array().rowwise() /= m.colwise().sum().array();
    phi.push_back(m);
    below = static_cast<Index>(k);
  }
  const DecoderView view{&phi, Eigen::VectorXd::Ones(2), Eigen::MatrixXd::Constant(5, 2, 1.3)};
  const std::vector<int> labels{0, 2, -1, 1, 2};
  for (EncoderKind kind : {EncoderKind::kWgcae, EncoderKind::kWgaae}) {
    EncoderConfig cfg;
    cfg.kind = kind;
    cfg.widths = {3, 2};
    cfg.heads = 2;
    const std::string enc = kind == EncoderKind::kWgcae ? "WGCAE" : "WGAAE";
    for (bool supervised : {false, true}) {
      // fixed weights keep every Weibull shape clear of its floor
      auto w = init_encoder(cfg, 6, supervised ? 3 : 0, 12);
      for (auto& m : w.log_u) m.setConstant(-0.3);
      Rng noise(opt.seed, 8);
      const auto theta_eps = draw_theta_noise(cfg, 5, noise);
      std::vector<Matrix> params;
      for (const Matrix* m : w.parameters()) params.push_back(*m);
      const std::uint64_t att_seed = opt.seed + 2;
      const Objective f = [&, theta_eps, supervised, kind](Tape& tape, std::span<const Var> p) {
        const EncoderVars v = encoder_vars_from(w, p);
        Rng att(att_seed, 9);  // identical attention noise on every evaluation
        const WeibullPosterior post = encoder_forward(tape, v, cfg, in, kind == EncoderKind::kWgaae ? &att : nullptr, false);
        const ThetaStack th = sample_theta_stack(post, view, cfg, theta_eps);
        ElboOptions eo;
        eo.beta = 0.7;
        const ElboTerms terms = elbo(tape, in, th, post, v, view, eo);
        return supervised ? supervised_loss(tape, terms.total, th.theta[0], v, labels) : terms.total;
      };
      run(enc + (supervised ? " supervised loss" : " full ELBO") + " (T=2, 5 nodes)", f, params);
    }
  }
  // Classifier head alone.
  {
    EncoderConfig cfg;
    cfg.widths = {3};
    const auto w = init_encoder(cfg, 6, 3, opt.seed + 3);
    const Matrix theta1 = random_matrix(rng, 5, 3, 0.1, 2.0);
    run("classification log-likelihood",
        [&](Tape& t, std::span<const Var> p) {
          EncoderVars v;
          v.cls_w = p[0];
          v.cls_b = p[1];
          v.has_classifier = true;
          return classification_loglik(t, p[2], v, labels);
        },
        {w.cls_w, random_matrix(rng, 1, 3, -0.5, 0.5), theta1});
  }
}

// ---------------------------------------------------------------------------

void kl_suite(Recorder& r, const SelftestOptions& opt) {
  r.check("KL(Exp(1) || Exp(1)) is exactly 0", kl_weibull_gamma(1.0, 1.0, 1.0, 1.0) == 0.0,
          "value=" + fmt(kl_weibull_gamma(1.0, 1.0, 1.0, 1.0)));
  Rng params(opt.seed, 11);
  for (int s = 0; s < opt.kl_settings; ++s) {
    const double k = 0.5 + 2.5 * params.uniform(), lambda = 0.3 + 2.7 * params.uniform();
    const double alpha = 0.3 + 2.7 * params.uniform(), beta = 0.3 + 2.7 * params.uniform();
    Rng rng = Rng::derive(opt.seed, 104, static_cast<std::uint64_t>(s));
    const double log_norm_q = std::log(k) - std::log(lambda);
    const double log_norm_p = alpha * std::log(beta) - std::lgamma(alpha);
    Moments m;
    for (std::uint64_t i = 0; i < opt.draws; ++i) {
      const double x = sample_weibull(k, lambda, rng).value;
      const double z = x / lambda;
      const double log_q = log_norm_q + (k - 1) * std::log(z) - std::pow(z, k);
      const double log_p = log_norm_p + (alpha - 1) * std::log(x) - beta * x;
      m.add(log_q - log_p);
    }
    const double exact = kl_weibull_gamma(k, lambda, alpha, beta);
    const double rel = std::abs(m.mean - exact) / std::abs(exact);
    std::ostringstream d;
    d.precision(4);
    d << "k=" << k << " lambda=" << lambda << " alpha=" << alpha << " beta=" << beta << " exact=" << exact
      << " mc=" << m.mean << " rel=" << rel;
    r.check("KL matches Monte Carlo, setting " + std::to_string(s + 1), rel <= opt.kl_tolerance, d.str());
  }
}

// ---------------------------------------------------------------------------

void graph_suite(Recorder& r, const SelftestOptions& opt) {
  const auto data = small_model(opt.seed);
  r.guarded("edge split", [&] {
    const auto split = split_edges(data.graph, 0.05, 0.10, opt.seed);
    const auto again = split_edges(data.graph, 0.05, 0.10, opt.seed);
    const std::size_t total = split.train_edges.size() + split.val_edges.size() + split.test_edges.size();
    r.check("split sizes add up to |E|", total == data.graph.num_edges(),
            std::to_string(total) + " vs " + std::to_string(data.graph.num_edges()));
    bool absent = true;
    for (const auto* set : {&split.val_nonedges, &split.test_nonedges}) {
      for (const auto& [i, j] : *set) absent = absent && i != j && !data.graph.has_edge(i, j);
    }
    r.check("sampled non-edges are absent from the graph", absent);
    r.check("equal non-edge and edge counts",
            split.val_nonedges.size() == split.val_edges.size() && split.test_nonedges.size() == split.test_edges.size());
    r.check("split is reproducible from its seed",
            split.train_edges == again.train_edges && split.test_nonedges == again.test_nonedges);
  });
  r.guarded("cosine graph", [&] {
    // cosine similarity needs nonempty documents
    auto entries = data.features.entries();
    const Index n = data.features.num_nodes(), v = data.features.vocab_size();
    for (Index j = 0; j < n; ++j) {
      if (data.features.row_total(j) == 0) entries.push_back({j, j % v, 1});
    }
    const auto base = build_cosine_adjacency(SparseCountMatrix::from_entries(n, v, entries), 0.3);
    for (auto& e : entries) {
      if (e.node % 3 == 0) e.count *= 7;
    }
    const auto scaled = build_cosine_adjacency(SparseCountMatrix::from_entries(n, v, entries), 0.3);
    bool same = base.num_edges() == scaled.num_edges();
    for (std::size_t e = 0; same && e < base.num_edges(); ++e) {
      same = base.edges()[e].i == scaled.edges()[e].i && base.edges()[e].j == scaled.edges()[e].j;
    }
    r.check("cosine graph invariant under positive rescaling of documents", same);
  });
  r.guarded("normalized adjacency", [&] {
    const auto norm = normalize_adjacency(data.graph, true);
    const Eigen::MatrixXd dense(norm.matrix);
    std::size_t max_degree = 0;
    for (Index i = 0; i < data.graph.num_nodes(); ++i) max_degree = std::max(max_degree, data.graph.degree(i) + 1);
    r.check("normalized adjacency is symmetric", dense == dense.transpose());
    r.check("normalized adjacency entries are nonnegative", (dense.array() >= 0).all());
    const double bound = std::sqrt(static_cast<double>(max_degree));
    r.check("row sums are at most sqrt(max degree)", (dense.rowwise().sum().array() <= bound + 1e-12).all(),
            "max row sum " + fmt(dense.rowwise().sum().maxCoeff()) + ", bound " + fmt(bound));
  });
}

// ---------------------------------------------------------------------------

void evaluation_suite(Recorder& r, const SelftestOptions& opt) {
  Rng rng(opt.seed, 13);
  bool auc_ok = true, ap_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 11);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.next_u64() % 5);  // ties on purpose
      y[i] = static_cast<int>(rng.next_u64() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    double wins = 0, pairs = 0, ap = 0;
    int positives = 0;
    for (int i = 0; i < n; ++i) {
      if (y[i] != 1) continue;
      ++positives;
      int above = 0, above_pos = 0;
      for (int j = 0; j < n; ++j) {
        if (y[j] == 0) {
          ++pairs;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
        if (s[j] >= s[i]) {
          ++above;
          above_pos += y[j];
        }
      }
      ap += static_cast<double>(above_pos) / above;
    }
    const auto got = auc_ap(s, y);
    auc_ok = auc_ok && std::abs(got.auc - wins / pairs) < 1e-12;
    ap_ok = ap_ok && std::abs(got.ap - ap / positives) < 1e-12;
  }
  r.check("AUC equals the exhaustive pairwise statistic (200 inputs, n <= 12)", auc_ok);
  r.check("AP equals mean precision at each positive's threshold", ap_ok);

  std::vector<int> clusters(60), labels(60);
  for (int i = 0; i < 60; ++i) {
    labels[i] = static_cast<int>(rng.next_u64() % 4);
    clusters[i] = rng.uniform() < 0.7 ? labels[i] : static_cast<int>(rng.next_u64() % 5);
  }
  std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<int> permuted(60);
  for (int i = 0; i < 60; ++i) permuted[i] = perm[clusters[i]];
  const double acc = clustering_accuracy(clusters, labels);
  r.check("ACC invariant under cluster relabeling", acc == clustering_accuracy(permuted, labels), "acc=" + fmt(acc));
  const double nmi_ab = normalized_mutual_information(clusters, labels);
  const double nmi_ba = normalized_mutual_information(labels, clusters);
  r.check("NMI symmetric in its arguments", std::abs(nmi_ab - nmi_ba) < 1e-12, "nmi=" + fmt(nmi_ab));
  r.check("NMI invariant under cluster relabeling",
          std::abs(nmi_ab - normalized_mutual_information(permuted, labels)) < 1e-12);
  r.check("metrics lie in [0, 1]", acc >= 0 && acc <= 1 && nmi_ab >= 0 && nmi_ab <= 1 + 1e-12);
  r.check("ACC = NMI = 1 for permuted labels",
          clustering_accuracy(permuted, clusters) == 1.0 &&
              std::abs(normalized_mutual_information(permuted, clusters) - 1.0) < 1e-12);
}

// ---------------------------------------------------------------------------

void export_suite(Recorder& r, const SelftestOptions& opt) {
  const auto data = small_model(opt.seed);
  const auto& s = data.truth;
  double worst = 0.0;
  for (int l = 0; l < s.num_layers(); ++l) {
    const auto proj = project_topics(s, l);
    for (Eigen::Index k = 0; k < proj.cols(); ++k) worst = std::max(worst, std::abs(proj.col(k).sum() - 1.0));
  }
  r.check("projected topics sum to 1", worst <= kSimplexTol, "max |sum - 1|=" + fmt(worst));
  r.guarded("topic tree", [&] {
    const std::vector<double> tau{0.8};
    const auto tree = export_topic_tree(s, 2, 0, tau, {}, 10);
    const auto again = export_topic_tree(s, 2, 0, tau, {}, 10);
    bool adjacent = true, above = true, same = tree.nodes.size() == again.nodes.size();
    for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
      const auto& n = tree.nodes[i];
      const auto& parent = tree.nodes[n.parent];
      adjacent = adjacent && n.layer + 1 == parent.layer;
      above = above && n.weight > tau[0] / static_cast<double>(s.phi[parent.layer - 1].rows());
      same = same && n.topic == again.nodes[i].topic && n.parent == again.nodes[i].parent;
    }
    r.check("tree edges join adjacent layers", adjacent);
    r.check("every child exceeds tau / K", above);
    r.check("tree growth is deterministic", same);
  });
  r.guarded("subnetwork", [&] {
    const double tau_u = 0.01;
    bool above = true, symmetric = true;
    std::vector<Subnetwork> nets;
    for (Index i = 0; i < s.num_nodes; ++i) nets.push_back(export_subnetwork(s, i, tau_u, {}, 5));
    for (Index i = 0; i < s.num_nodes; ++i) {
      for (const auto& layer : nets[i].layers) {
        for (const auto& link : layer.links) {
          above = above && link.strength > tau_u;
          bool back = false;
          for (const auto& other : nets[link.node].layers[layer.layer - 1].links) {
            back = back || (other.node == i && other.topic == link.topic);
          }
          symmetric = symmetric && back;
        }
      }
    }
    r.check("every subnetwork link exceeds tau_u", above);
    r.check("j in subnetwork(i) iff i in subnetwork(j)", symmetric);
  });
}

using SuiteFn = void (*)(Recorder&, const SelftestOptions&);

const std::vector<std::pair<std::string, SuiteFn>>& registry() {
  static const std::vector<std::pair<std::string, SuiteFn>> r{
      {"conservation", conservation_suite}, {"samplers", sampler_suite}, {"gradients", gradient_suite},
      {"kl", kl_suite},                     {"graph", graph_suite},      {"evaluation", evaluation_suite},
      {"export", export_suite}};
  return r;
}

}  // namespace

bool SelftestSuite::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const std::vector<std::string>& selftest_suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : registry()) n.push_back(name);
    return n;
  }();
  return names;
}

SelftestSuite run_selftest_suite(const std::string& name, const SelftestOptions& options) {
  for (const auto& [suite_name, fn] : registry()) {
    if (suite_name != name) continue;
    SelftestSuite suite;
    suite.name = name;
    const auto start = std::chrono::steady_clock::now();
    Recorder rec(suite);
    rec.guarded(name, [&] { fn(rec, options); });
    suite.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return suite;
  }
  fail(ErrorCode::kUsage, "unknown selftest suite '" + name + "'");
}

std::string to_text(const SelftestSuite& suite) {
  std::ostringstream out;
  for (const auto& c : suite.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << suite.name << '/' << c.name;
    if (!c.detail.empty()) out << "  " << c.detail;
    out << '\n';
  }
  return out.str();
}

}  // namespace wgae
