#include "wgae/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "wgae/error.hpp"

namespace wgae {
namespace {

constexpr double kEulerGamma = 0.57721566490153286061;
constexpr double kNoiseClamp = 1e-6;
constexpr double kThetaFloor = 1e-10;

Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = bound * (2.0 * rng.uniform() - 1.0);
  return m;
}

double clamp_noise(double e) { return std::clamp(e, kNoiseClamp, 1.0 - kNoiseClamp); }

// H^(0) W is X W with X sparse.
Var layer_product(const EncoderInput& in, Var weight, int layer, Var hidden) {
  return layer == 0 ? ad::spmm(in.x, weight) : ad::matmul(hidden, weight);
}

std::string kind_name(EncoderKind k) { return k == EncoderKind::kWgcae ? "wgcae" : "wgaae"; }

}  // namespace

std::vector<Matrix*> EncoderWeights::parameters() {
  std::vector<Matrix*> out;
  for (auto* group : {&w1, &w2, &w3, &proj, &att_src, &att_dst, &log_u}) {
    for (auto& m : *group) out.push_back(&m);
  }
  if (cls_w.size() > 0) {
    out.push_back(&cls_w);
    out.push_back(&cls_b);
  }
  return out;
}

std::vector<const Matrix*> EncoderWeights::parameters() const {
  std::vector<const Matrix*> out;
  for (auto* m : const_cast<EncoderWeights*>(this)->parameters()) out.push_back(m);
  return out;
}

std::vector<std::string> EncoderWeights::parameter_names() const {
  std::vector<std::string> out;
  auto add = [&](const char* name, const std::vector<Matrix>& group) {
    for (std::size_t k = 0; k < group.size(); ++k) out.push_back(std::string(name) + "." + std::to_string(k));
  };
  add("w1", w1);
  add("w2", w2);
  add("w3", w3);
  add("proj", proj);
  add("att_src", att_src);
  add("att_dst", att_dst);
  add("log_u", log_u);
  if (cls_w.size() > 0) {
    out.push_back("cls_w");
    out.push_back("cls_b");
  }
  return out;
}

EncoderWeights init_encoder(const EncoderConfig& config, Index input_dim, int num_classes, std::uint64_t seed) {
  require(!config.widths.empty(), ErrorCode::kUsage, "encoder needs at least one layer");
  require(config.heads >= 1, ErrorCode::kUsage, "attention heads must be >= 1");
  require(config.k_att > 0.0, ErrorCode::kUsage, "k_att must be positive");
  require(config.shape_floor > 0.0, ErrorCode::kUsage, "shape floor must be positive");
  require(input_dim > 0, ErrorCode::kUsage, "encoder input dimension must be positive");
  EncoderWeights w;
  w.config = config;
  w.input_dim = input_dim;
  Rng rng = Rng::derive(seed, kTagInit, 1000);
  const bool attention = config.kind == EncoderKind::kWgaae;
  const int heads = attention ? config.heads : 1;
  for (std::size_t l = 0; l < config.widths.size(); ++l) {
    const int k = config.widths[l];
    require(k > 0, ErrorCode::kUsage, "layer widths must be positive");
    const Eigen::Index below = l == 0 ? static_cast<Eigen::Index>(input_dim) : config.widths[l - 1];
    for (int c = 0; c < heads; ++c) {
      w.w1.push_back(glorot(below, k, rng));
      if (attention) {
        w.proj.push_back(glorot(below, k, rng));
        w.att_src.push_back(glorot(k, 1, rng));
        w.att_dst.push_back(glorot(k, 1, rng));
      }
    }
    w.w2.push_back(glorot(k, k, rng));
    w.w3.push_back(glorot(k, k, rng));
    w.log_u.push_back(Matrix::Zero(1, k));
  }
  if (num_classes > 0) {
    w.cls_w = glorot(config.widths[0], num_classes, rng);
    w.cls_b = Matrix::Zero(1, num_classes);
  }
  return w;
}

Neighborhoods build_neighborhoods(const AdjacencyGraph& graph) {
  Neighborhoods h;
  h.offsets.push_back(0);
  for (Index i = 0; i < graph.num_nodes(); ++i) {
    const auto nb = graph.neighbors(i);
    bool self_done = false;
    for (Index j : nb) {
      if (!self_done && j > i) {
        h.row.push_back(static_cast<int>(i));
        h.col.push_back(static_cast<int>(i));
        self_done = true;
      }
      h.row.push_back(static_cast<int>(i));
      h.col.push_back(static_cast<int>(j));
    }
    if (!self_done) {
      h.row.push_back(static_cast<int>(i));
      h.col.push_back(static_cast<int>(i));
    }
    h.offsets.push_back(static_cast<int>(h.row.size()));
  }
  return h;
}

EncoderInput EncoderInput::build(const SparseCountMatrix& x, const AdjacencyGraph& graph) {
  require(x.num_nodes() == graph.num_nodes(), ErrorCode::kData, "features and graph disagree on node count");
  EncoderInput in;
  in.num_nodes = x.num_nodes();
  in.x = x.to_eigen();
  in.a_norm = normalize_adjacency(graph, true).matrix;
  in.hoods = build_neighborhoods(graph);
  for (const auto& e : graph.edges()) {
    in.edge_src.push_back(static_cast<int>(e.i));
    in.edge_dst.push_back(static_cast<int>(e.j));
  }
  return in;
}

EncoderVars bind_encoder(Tape& tape, const EncoderWeights& weights, bool trainable) {
  std::vector<Var> vars;
  for (const Matrix* m : weights.parameters()) vars.push_back(trainable ? tape.parameter(*m) : tape.constant(*m));
  return encoder_vars_from(weights, vars);
}

EncoderVars encoder_vars_from(const EncoderWeights& layout, std::span<const Var> vars) {
  require(vars.size() == layout.parameters().size(), ErrorCode::kInternal, "encoder variable count mismatch");
  EncoderVars v;
  std::size_t next = 0;
  auto take = [&](const std::vector<Matrix>& group, std::vector<Var>& dst) {
    for (std::size_t k = 0; k < group.size(); ++k) dst.push_back(vars[next++]);
  };
  take(layout.w1, v.w1);
  take(layout.w2, v.w2);
  take(layout.w3, v.w3);
  take(layout.proj, v.proj);
  take(layout.att_src, v.att_src);
  take(layout.att_dst, v.att_dst);
  take(layout.log_u, v.log_u);
  if (layout.cls_w.size() > 0) {
    v.cls_w = vars[next++];
    v.cls_b = vars[next++];
    v.has_classifier = true;
  }
  return v;
}

WeibullPosterior wgcae_forward(Tape& /*tape*/, const EncoderVars& w, const EncoderConfig& config,
                               const EncoderInput& in) {
  require(static_cast<std::size_t>(in.x.cols()) == static_cast<std::size_t>(w.w1.at(0).rows()), ErrorCode::kData,
          "encoder input dimension does not match the feature vocabulary");
  WeibullPosterior post;
  Var h;
  for (std::size_t l = 0; l < config.widths.size(); ++l) {
    h = ad::softplus(ad::spmm(in.a_norm, layer_product(in, w.w1[l], static_cast<int>(l), h)));
    const Var ah = ad::spmm(in.a_norm, h);
    post.hidden.push_back(h);
    post.shape.push_back(ad::softplus(ad::matmul(ah, w.w2[l])));
    post.scale.push_back(ad::softplus(ad::matmul(ah, w.w3[l])));
  }
  return post;
}

HeadOutput wgaae_attention(Var projected, Var values, Var att_src, Var att_dst, const Neighborhoods& hoods,
                           const EncoderConfig& config, const Matrix& eps) {
  Tape& tape = *projected.tape;
  for (std::size_t i = 0; i + 1 < hoods.offsets.size(); ++i) {
    require(hoods.offsets[i + 1] > hoods.offsets[i], ErrorCode::kData,
            "empty attention neighborhood at node " + std::to_string(i));
  }
  const Var left = ad::matmul(projected, att_src);
  const Var right = ad::matmul(projected, att_dst);
  HeadOutput out;
  out.scores = ad::leaky_relu(ad::add(ad::gather_rows(left, hoods.row), ad::gather_rows(right, hoods.col)),
                              config.leaky_slope);
  const auto entries = static_cast<Eigen::Index>(hoods.row.size());
  // s = exp(m) * (-ln(1 - eps))^(1/k) / Gamma(1 + 1/k): Weibull with mean exp(m)
  Matrix noise = Matrix::Ones(entries, 1);
  if (eps.size() > 0) {
    const double norm = std::tgamma(1.0 + 1.0 / config.k_att);
    for (Eigen::Index e = 0; e < entries; ++e) {
      noise(e, 0) = std::pow(-std::log1p(-clamp_noise(eps(e, 0))), 1.0 / config.k_att) / norm;
    }
  }
  const Var noise_var = tape.constant(noise);
  out.weights = ad::mul(ad::exp(out.scores), noise_var);
  const Var logits =
      config.softmax_of_log ? ad::add(out.scores, tape.constant(noise.array().log().matrix())) : out.weights;
  out.normalized = ad::segment_softmax(logits, hoods.offsets);
  out.aggregated = ad::edge_spmm(out.normalized, hoods.row, hoods.col, values.rows(), values);
  return out;
}

WeibullPosterior wgaae_forward(Tape& /*tape*/, const EncoderVars& w, const EncoderConfig& config, const EncoderInput& in,
                               Rng* rng, bool deterministic) {
  require(static_cast<std::size_t>(in.x.cols()) == static_cast<std::size_t>(w.w1.at(0).rows()), ErrorCode::kData,
          "encoder input dimension does not match the feature vocabulary");
  require(deterministic || rng != nullptr, ErrorCode::kInternal, "stochastic attention needs a random stream");
  const int heads = config.heads;
  const auto entries = static_cast<Eigen::Index>(in.hoods.row.size());
  WeibullPosterior post;
  Var h;
  for (std::size_t l = 0; l < config.widths.size(); ++l) {
    Var acc;
    for (int c = 0; c < heads; ++c) {
      const std::size_t idx = l * static_cast<std::size_t>(heads) + static_cast<std::size_t>(c);
      Matrix eps;
      if (!deterministic) {
        eps.resize(entries, 1);
        for (Eigen::Index e = 0; e < entries; ++e) eps(e, 0) = clamp_noise(rng->uniform());
      }
      const Var projected = layer_product(in, w.proj[idx], static_cast<int>(l), h);
      const Var values = layer_product(in, w.w1[idx], static_cast<int>(l), h);
      HeadOutput head = wgaae_attention(projected, values, w.att_src[idx], w.att_dst[idx], in.hoods, config, eps);
      post.attention.scores.push_back(head.scores);
      post.attention.weights.push_back(head.weights);
      post.attention.normalized.push_back(head.normalized);
      post.attention.eps.push_back(std::move(eps));
      acc = c == 0 ? head.aggregated : ad::add(acc, head.aggregated);
    }
    h = heads == 1 ? acc : ad::scale(acc, 1.0 / heads);
    post.hidden.push_back(h);
    post.shape.push_back(ad::softplus(ad::matmul(h, w.w2[l])));
    post.scale.push_back(ad::softplus(ad::matmul(h, w.w3[l])));
  }
  return post;
}

WeibullPosterior encoder_forward(Tape& tape, const EncoderVars& w, const EncoderConfig& config,
                                 const EncoderInput& in, Rng* rng, bool deterministic) {
  if (config.kind == EncoderKind::kWgcae) return wgcae_forward(tape, w, config, in);
  return wgaae_forward(tape, w, config, in, rng, deterministic);
}

std::vector<Matrix> draw_theta_noise(const EncoderConfig& config, Index num_nodes, Rng& rng) {
  std::vector<Matrix> eps;
  for (int k : config.widths) {
    Matrix e(num_nodes, k);
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = clamp_noise(rng.uniform());
    eps.push_back(std::move(e));
  }
  return eps;
}

ThetaStack sample_theta_stack(const WeibullPosterior& post, const DecoderView& decoder, const EncoderConfig& config,
                              const std::vector<Matrix>& eps) {
  const int t = static_cast<int>(post.shape.size());
  require(t >= 1 && decoder.phi != nullptr && static_cast<int>(decoder.phi->size()) == t, ErrorCode::kInternal,
          "sample_theta_stack: layer mismatch");
  require(eps.empty() || static_cast<int>(eps.size()) == t, ErrorCode::kInternal, "sample_theta_stack: noise mismatch");
  Tape& tape = *post.shape[0].tape;
  const Eigen::Index n = post.shape[0].rows();
  ThetaStack out;
  out.theta.resize(t);
  out.shape.resize(t);
  out.prior_shape.resize(t);
  out.eps = eps;
  for (int l = t - 1; l >= 0; --l) {
    Var prior;
    if (l == t - 1) {
      require(decoder.gamma.size() == post.shape[l].cols(), ErrorCode::kInternal, "gamma length mismatch");
      prior = tape.constant(decoder.gamma.transpose().replicate(n, 1));
    } else {
      prior = ad::matmul(out.theta[l + 1], tape.constant((*decoder.phi)[l + 1].transpose()));
    }
    const Var shape = ad::clamp_min(ad::add(post.shape[l], prior), config.shape_floor);
    Var theta;
    if (eps.empty()) {
      theta = ad::mul(post.scale[l], ad::exp(ad::lgamma(ad::add_scalar(ad::reciprocal(shape), 1.0))));
    } else {
      theta = ad::clamp_min(ad::weibull_reparam(shape, post.scale[l], eps[l]), kThetaFloor);
    }
    out.theta[l] = theta;
    out.shape[l] = shape;
    out.prior_shape[l] = prior;
  }
  return out;
}

double kl_weibull_gamma(double k, double lambda, double alpha, double beta) {
  require(k > 0 && lambda > 0 && alpha > 0 && beta > 0, ErrorCode::kNumeric,
          "kl_weibull_gamma: parameters must be positive");
  // Cancelling constants are grouped with their terms so KL(Exp(1) || Exp(1)) is exactly 0.
  return kEulerGamma * (alpha / k - 1.0) + (beta * lambda * std::exp(std::lgamma(1.0 + 1.0 / k)) - 1.0) +
         std::log(k) - alpha * std::log(lambda) - alpha * std::log(beta) + std::lgamma(alpha);
}

Var kl_weibull_gamma(Var k, Var lambda, Var alpha, const Matrix& beta) {
  Tape& tape = *k.tape;
  const Var inv_k = ad::reciprocal(k);
  const Var beta_c = tape.constant(beta);
  const Var log_beta = tape.constant(beta.array().log().matrix());
  Var kl = ad::scale(ad::add_scalar(ad::mul(alpha, inv_k), -1.0), kEulerGamma);
  kl = ad::add(kl, ad::add_scalar(ad::mul(beta_c, ad::mul(lambda, ad::exp(ad::lgamma(ad::add_scalar(inv_k, 1.0))))), -1.0));
  kl = ad::add(kl, ad::log(k));
  kl = ad::sub(kl, ad::mul(alpha, ad::log(lambda)));
  kl = ad::sub(kl, ad::mul(alpha, log_beta));
  kl = ad::add(kl, ad::lgamma(alpha));
  return ad::sum(kl);
}

Var edge_loglik(Tape& tape, const std::vector<Var>& theta, const std::vector<Var>& log_u, const std::vector<int>& src,
                const std::vector<int>& dst, const std::vector<double>& node_weights, double rate_floor,
                int* clamped) {
  const Eigen::Index n = theta.at(0).rows();
  const bool weighted = !node_weights.empty();
  require(!weighted || static_cast<Eigen::Index>(node_weights.size()) == n, ErrorCode::kInternal,
          "edge_loglik: weight length mismatch");
  Matrix w_col;
  if (weighted) w_col = Eigen::Map<const Eigen::VectorXd>(node_weights.data(), n);
  const Var w_var = weighted ? tape.constant(w_col) : Var{};

  // sum_{i<j} w_i w_j r_ij = 1/2 sum_k u_k ((sum_i w_i theta_ik)^2 - sum_i w_i^2 theta_ik^2)
  Var all_pairs;
  for (std::size_t l = 0; l < theta.size(); ++l) {
    const Var u = ad::exp(log_u[l]);
    const Var tw = weighted ? ad::mul_col(theta[l], w_var) : theta[l];
    const Var s = ad::col_sum(tw);
    const Var q = ad::col_sum(ad::mul(tw, tw));
    const Var layer = ad::sum(ad::mul(ad::scale(ad::sub(ad::mul(s, s), q), 0.5), u));
    all_pairs = l == 0 ? layer : ad::add(all_pairs, layer);
  }
  if (src.empty()) {
    if (clamped) *clamped = 0;
    return ad::neg(all_pairs);
  }
  Var rate;
  for (std::size_t l = 0; l < theta.size(); ++l) {
    const Var u = ad::exp(log_u[l]);
    const Var prod = ad::mul(ad::gather_rows(theta[l], src), ad::gather_rows(theta[l], dst));
    const Var r = ad::row_sum(ad::mul_row(prod, u));
    rate = l == 0 ? r : ad::add(rate, r);
  }
  if (clamped) *clamped = static_cast<int>((rate.value().array() < rate_floor).count());
  rate = ad::clamp_min(rate, rate_floor);
  // observed pairs: ln(1 - e^-r) replaces the -r counted in all_pairs
  Var observed = ad::add(ad::log1mexp(rate), rate);
  if (weighted) {
    Matrix pair_w(static_cast<Eigen::Index>(src.size()), 1);
    for (std::size_t e = 0; e < src.size(); ++e) pair_w(static_cast<Eigen::Index>(e), 0) = node_weights[src[e]] * node_weights[dst[e]];
    observed = ad::mul(observed, tape.constant(pair_w));
  }
  return ad::sub(ad::sum(observed), all_pairs);
}

ElboTerms elbo(Tape& tape, const EncoderInput& in, const ThetaStack& theta, const WeibullPosterior& post,
               const EncoderVars& w, const DecoderView& decoder, const ElboOptions& options) {
  require(options.beta >= 0.0, ErrorCode::kUsage, "beta must be nonnegative");
  const int t = static_cast<int>(theta.theta.size());
  require(decoder.kl_rate.rows() == in.num_nodes && decoder.kl_rate.cols() == t, ErrorCode::kInternal,
          "elbo: kl rate dimension mismatch");
  ElboTerms out;
  out.node = ad::poisson_loglik(theta.theta[0], (*decoder.phi)[0], in.x);
  for (int l = 0; l < t; ++l) {
    const Matrix rate = decoder.kl_rate.col(l).replicate(1, post.shape[l].cols());
    const Var kl = kl_weibull_gamma(theta.shape[l], post.scale[l], theta.prior_shape[l], rate);
    out.kl = l == 0 ? kl : ad::add(out.kl, kl);
  }
  if (options.beta > 0.0) {
    out.edge = edge_loglik(tape, theta.theta, w.log_u, in.edge_src, in.edge_dst, options.edge_node_weights,
                           options.rate_floor, &out.clamped_edges);
  } else {
    out.edge = tape.scalar_constant(0.0);
  }
  Var total = ad::scale(ad::sub(out.node, out.kl), options.node_scale);
  if (options.beta > 0.0) total = ad::add(total, ad::scale(out.edge, options.beta * options.edge_scale));
  out.total = total;
  return out;
}

Var classification_loglik(Tape& tape, Var theta1, const EncoderVars& w, const std::vector<int>& labels) {
  require(w.has_classifier, ErrorCode::kUsage, "supervised loss needs a classifier head");
  require(static_cast<Eigen::Index>(labels.size()) == theta1.rows(), ErrorCode::kInternal,
          "label vector length mismatch");
  const Eigen::Index classes = w.cls_w.cols();
  std::vector<int> idx;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] < 0) continue;
    require(labels[j] < classes, ErrorCode::kData, "label index out of range at node " + std::to_string(j));
    idx.push_back(static_cast<int>(j));
  }
  if (idx.empty()) return tape.scalar_constant(0.0);
  Matrix onehot = Matrix::Zero(static_cast<Eigen::Index>(idx.size()), classes);
  for (std::size_t r = 0; r < idx.size(); ++r) onehot(static_cast<Eigen::Index>(r), labels[idx[r]]) = 1.0;
  const Var z = ad::add_row(ad::matmul(ad::gather_rows(theta1, idx), w.cls_w), w.cls_b);
  return ad::sub(ad::sum(ad::mul(z, tape.constant(onehot))), ad::sum(ad::row_logsumexp(z)));
}

Var supervised_loss(Tape& tape, Var elbo_total, Var theta1, const EncoderVars& w, const std::vector<int>& labels) {
  return ad::add(classification_loglik(tape, theta1, w, labels), elbo_total);
}

Eigen::MatrixXd classifier_probabilities(const EncoderWeights& w, const Eigen::MatrixXd& theta1) {
  require(w.cls_w.size() > 0, ErrorCode::kUsage, "model has no classifier head");
  Eigen::MatrixXd z = (theta1 * w.cls_w).rowwise() + w.cls_b.row(0);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    z.row(r).array() -= z.row(r).maxCoeff();
    z.row(r) = z.row(r).array().exp().matrix();
    z.row(r) /= z.row(r).sum();
  }
  return z;
}

void write_encoder(std::ostream& out, const EncoderWeights& w) {
  out.precision(17);
  const auto& c = w.config;
  out << "wgae-encoder 1\nkind " << kind_name(c.kind) << "\nwidths " << c.widths.size();
  for (int k : c.widths) out << ' ' << k;
  out << "\ninput " << w.input_dim << "\nheads " << c.heads << "\nk_att " << c.k_att << "\nleaky_slope "
      << c.leaky_slope << "\nshape_floor " << c.shape_floor << "\nsoftmax_of_log " << (c.softmax_of_log ? 1 : 0)
      << "\nclasses " << w.num_classes() << '\n';
  const auto names = w.parameter_names();
  const auto params = w.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    out << names[p] << ' ' << params[p]->rows() << ' ' << params[p]->cols() << '\n';
    for (Eigen::Index r = 0; r < params[p]->rows(); ++r) {
      for (Eigen::Index col = 0; col < params[p]->cols(); ++col) out << (col ? " " : "") << (*params[p])(r, col);
      out << '\n';
    }
  }
  out << "end-encoder\n";
}

EncoderWeights read_encoder(std::istream& in) {
  auto expect = [&](const std::string& token) {
    std::string got;
    in >> got;
    if (got != token) fail(ErrorCode::kData, "checkpoint: expected '" + token + "', got '" + got + "'");
  };
  expect("wgae-encoder");
  int version = 0;
  in >> version;
  if (version != 1) fail(ErrorCode::kData, "checkpoint: unsupported encoder version");
  EncoderConfig c;
  std::string kind;
  expect("kind");
  in >> kind;
  if (kind == "wgcae") {
    c.kind = EncoderKind::kWgcae;
  } else if (kind == "wgaae") {
    c.kind = EncoderKind::kWgaae;
  } else {
    fail(ErrorCode::kData, "checkpoint: unknown encoder kind '" + kind + "'");
  }
  std::size_t layers = 0;
  expect("widths");
  in >> layers;
  if (!in || layers == 0 || layers > 64) fail(ErrorCode::kData, "checkpoint: bad encoder layer count");
  c.widths.resize(layers);
  for (int& k : c.widths) in >> k;
  Index input = 0;
  int classes = 0, softmax_log = 0;
  expect("input");
  in >> input;
  expect("heads");
  in >> c.heads;
  expect("k_att");
  in >> c.k_att;
  expect("leaky_slope");
  in >> c.leaky_slope;
  expect("shape_floor");
  in >> c.shape_floor;
  expect("softmax_of_log");
  in >> softmax_log;
  c.softmax_of_log = softmax_log != 0;
  expect("classes");
  in >> classes;
  if (!in) fail(ErrorCode::kData, "checkpoint: truncated encoder header");
  EncoderWeights w = init_encoder(c, input, classes, 0);
  const auto names = w.parameter_names();
  const auto params = w.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    in >> name >> rows >> cols;
    if (!in || name != names[p] || rows != params[p]->rows() || cols != params[p]->cols()) {
      fail(ErrorCode::kData, "checkpoint: expected encoder block '" + names[p] + "'");
    }
    for (Eigen::Index k = 0; k < rows * cols; ++k) in >> (*params[p])(k / cols, k % cols);
  }
  if (!in) fail(ErrorCode::kData, "checkpoint: truncated encoder weights");
  expect("end-encoder");
  return w;
}

}  // namespace wgae
