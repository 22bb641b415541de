#include "wgae/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "wgae/error.hpp"

namespace wgae {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorCode::kUsage, "config: invalid value '" + value + "' for key '" + key + "'");
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v);
  }
  if (used != v.size() || !std::isfinite(d)) bad_value(key, v);
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long i = 0;
  try {
    i = std::stoll(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v);
  }
  if (used != v.size()) bad_value(key, v);
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

// Shortest text that parses back to the same double.
std::string num(double d) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += num(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<TrainerKind> kTrainers[] = {{TrainerKind::kFullBatch, "full_batch"},
                                               {TrainerKind::kScalable, "scalable"}};
constexpr EnumName<Debias> kDebias[] = {{Debias::kNone, "none"}, {Debias::kEndpointProduct, "endpoint_product"}};
constexpr EnumName<Importance> kImportance[] = {{Importance::kDegree, "degree"}, {Importance::kLength, "length"}};
constexpr EnumName<KlRate> kKlRates[] = {{KlRate::kFixed, "fixed"}, {KlRate::kDecoder, "decoder"}};
constexpr EnumName<EncoderKind> kEncoders[] = {{EncoderKind::kWgcae, "wgcae"}, {EncoderKind::kWgaae, "wgaae"}};

template <typename E, std::size_t N>
E parse_enum(const EnumName<E> (&table)[N], const std::string& key, const std::string& v) {
  for (const auto& e : table) {
    if (v == e.name) return e.value;
  }
  bad_value(key, v);
}

template <typename E, std::size_t N>
std::string enum_name(const EnumName<E> (&table)[N], E value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  return "?";
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{
      "widths",       "beta",          "learning_rate", "iterations",   "trainer",     "subset_size",
      "k_mix",        "alpha_imp",     "importance",    "debias",       "seed",        "encoder",
      "heads",        "k_att",         "leaky_slope",   "softmax_of_log", "tau_a",     "tau_phi",
      "tau_u",        "eta",           "kl_rate",       "tlasgr_eps0",  "tlasgr_tau0", "tlasgr_kappa",
      "checkpoint_interval", "supervised", "val_frac",  "test_frac",    "eval_seeds",  "threads",
      "sample_scoring", "score_samples", "label_per_class", "label_val", "label_test", "layers"};
  return k;
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "widths") {
    widths.clear();
    for (const auto& w : split_list(v)) widths.push_back(static_cast<int>(to_int(key, w)));
  } else if (key == "layers") {
    // Accepted for readability; must agree with widths.
    const auto t = to_int(key, v);
    if (t < 1) bad_value(key, v);
    if (static_cast<std::size_t>(t) != widths.size()) {
      fail(ErrorCode::kUsage, "config: layers = " + v + " but widths lists " + std::to_string(widths.size()));
    }
  } else if (key == "beta") {
    beta = to_double(key, v);
  } else if (key == "learning_rate") {
    learning_rate = to_double(key, v);
  } else if (key == "iterations") {
    iterations = static_cast<int>(to_int(key, v));
  } else if (key == "trainer") {
    trainer = parse_enum(kTrainers, key, v);
  } else if (key == "subset_size") {
    subset_size = static_cast<int>(to_int(key, v));
  } else if (key == "k_mix") {
    k_mix = to_double(key, v);
  } else if (key == "alpha_imp") {
    alpha_imp = to_double(key, v);
  } else if (key == "importance") {
    importance = parse_enum(kImportance, key, v);
  } else if (key == "debias") {
    debias = parse_enum(kDebias, key, v);
  } else if (key == "seed") {
    const auto s = to_int(key, v);
    if (s < 0) bad_value(key, v);
    seed = static_cast<std::uint64_t>(s);
  } else if (key == "encoder") {
    encoder = parse_enum(kEncoders, key, v);
  } else if (key == "heads") {
    heads = static_cast<int>(to_int(key, v));
  } else if (key == "k_att") {
    k_att = to_double(key, v);
  } else if (key == "leaky_slope") {
    leaky_slope = to_double(key, v);
  } else if (key == "softmax_of_log") {
    softmax_of_log = to_bool(key, v);
  } else if (key == "tau_a") {
    tau_a = to_double(key, v);
  } else if (key == "tau_phi") {
    tau_phi.clear();
    for (const auto& t : split_list(v)) tau_phi.push_back(to_double(key, t));
  } else if (key == "tau_u") {
    tau_u = to_double(key, v);
  } else if (key == "eta") {
    eta.clear();
    for (const auto& t : split_list(v)) eta.push_back(to_double(key, t));
  } else if (key == "kl_rate") {
    kl_rate = parse_enum(kKlRates, key, v);
  } else if (key == "tlasgr_eps0") {
    tlasgr_eps0 = to_double(key, v);
  } else if (key == "tlasgr_tau0") {
    tlasgr_tau0 = to_double(key, v);
  } else if (key == "tlasgr_kappa") {
    tlasgr_kappa = to_double(key, v);
  } else if (key == "checkpoint_interval") {
    checkpoint_interval = static_cast<int>(to_int(key, v));
  } else if (key == "supervised") {
    supervised = to_bool(key, v);
  } else if (key == "val_frac") {
    val_frac = to_double(key, v);
  } else if (key == "test_frac") {
    test_frac = to_double(key, v);
  } else if (key == "eval_seeds") {
    eval_seeds = static_cast<int>(to_int(key, v));
  } else if (key == "threads") {
    threads = static_cast<int>(to_int(key, v));
  } else if (key == "sample_scoring") {
    sample_scoring = to_bool(key, v);
  } else if (key == "score_samples") {
    score_samples = static_cast<int>(to_int(key, v));
  } else if (key == "label_per_class") {
    label_per_class = static_cast<int>(to_int(key, v));
  } else if (key == "label_val") {
    label_val = static_cast<int>(to_int(key, v));
  } else if (key == "label_test") {
    label_test = static_cast<int>(to_int(key, v));
  } else {
    fail(ErrorCode::kUsage, "config: unknown key '" + key + "'");
  }
}

std::string TrainConfig::get(const std::string& key) const {
  if (key == "widths") return join(widths);
  if (key == "layers") return std::to_string(widths.size());
  if (key == "beta") return num(beta);
  if (key == "learning_rate") return num(learning_rate);
  if (key == "iterations") return std::to_string(iterations);
  if (key == "trainer") return enum_name(kTrainers, trainer);
  if (key == "subset_size") return std::to_string(subset_size);
  if (key == "k_mix") return num(k_mix);
  if (key == "alpha_imp") return num(alpha_imp);
  if (key == "importance") return enum_name(kImportance, importance);
  if (key == "debias") return enum_name(kDebias, debias);
  if (key == "seed") return std::to_string(seed);
  if (key == "encoder") return enum_name(kEncoders, encoder);
  if (key == "heads") return std::to_string(heads);
  if (key == "k_att") return num(k_att);
  if (key == "leaky_slope") return num(leaky_slope);
  if (key == "softmax_of_log") return softmax_of_log ? "true" : "false";
  if (key == "tau_a") return num(tau_a);
  if (key == "tau_phi") return join(tau_phi);
  if (key == "tau_u") return num(tau_u);
  if (key == "eta") return join(eta);
  if (key == "kl_rate") return enum_name(kKlRates, kl_rate);
  if (key == "tlasgr_eps0") return num(tlasgr_eps0);
  if (key == "tlasgr_tau0") return num(tlasgr_tau0);
  if (key == "tlasgr_kappa") return num(tlasgr_kappa);
  if (key == "checkpoint_interval") return std::to_string(checkpoint_interval);
  if (key == "supervised") return supervised ? "true" : "false";
  if (key == "val_frac") return num(val_frac);
  if (key == "test_frac") return num(test_frac);
  if (key == "eval_seeds") return std::to_string(eval_seeds);
  if (key == "threads") return std::to_string(threads);
  if (key == "sample_scoring") return sample_scoring ? "true" : "false";
  if (key == "score_samples") return std::to_string(score_samples);
  if (key == "label_per_class") return std::to_string(label_per_class);
  if (key == "label_val") return std::to_string(label_val);
  if (key == "label_test") return std::to_string(label_test);
  fail(ErrorCode::kUsage, "config: unknown key '" + key + "'");
}

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::kUsage, "config: " + what); };
  check(!widths.empty(), "widths must list at least one layer");
  for (int w : widths) check(w > 0, "widths must be positive");
  check(beta >= 0.0, "beta must be >= 0");
  check(learning_rate > 0.0, "learning_rate must be positive");
  check(iterations >= 0, "iterations must be >= 0");
  check(subset_size >= 2, "subset_size must be >= 2");
  check(k_mix >= 0.0 && k_mix <= 1.0, "k_mix must lie in [0, 1]");
  check(alpha_imp >= 0.0, "alpha_imp must be >= 0");
  check(heads >= 1, "heads must be >= 1");
  check(k_att > 0.0, "k_att must be positive");
  check(tau_phi.size() == 1 || tau_phi.size() == widths.size(), "tau_phi needs one value or one per layer");
  for (double t : tau_phi) check(t >= 0.0, "tau_phi must be >= 0");
  check(tau_u >= 0.0, "tau_u must be >= 0");
  check(eta.size() == 1 || eta.size() == widths.size(), "eta needs one value or one per layer");
  for (double e : eta) check(e > 0.0, "eta must be positive");
  check(tlasgr_eps0 > 0 && tlasgr_tau0 >= 0 && tlasgr_kappa > 0.5 && tlasgr_kappa <= 1.0,
        "tlasgr schedule needs eps0 > 0, tau0 >= 0, kappa in (0.5, 1]");
  check(checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
  check(val_frac >= 0 && test_frac >= 0 && val_frac + test_frac < 1, "val_frac + test_frac must be below 1");
  check(eval_seeds >= 1, "eval_seeds must be >= 1");
  check(threads >= 1, "threads must be >= 1");
  check(score_samples >= 1, "score_samples must be >= 1");
  check(label_per_class >= 1 && label_val >= 0 && label_test >= 1,
        "label split needs label_per_class >= 1, label_val >= 0, label_test >= 1");
}

void TrainConfig::validate_for(Index num_nodes) const {
  validate();
  if (trainer == TrainerKind::kScalable) {
    require(static_cast<Index>(subset_size) <= num_nodes, ErrorCode::kUsage,
            "config: subset_size " + std::to_string(subset_size) + " exceeds the node count " +
                std::to_string(num_nodes));
  }
}

double TrainConfig::tau_phi_at(int layer) const { return tau_phi.size() == 1 ? tau_phi[0] : tau_phi.at(layer); }

EncoderConfig TrainConfig::encoder_config() const {
  EncoderConfig c;
  c.kind = encoder;
  c.widths = widths;
  c.heads = heads;
  c.k_att = k_att;
  c.leaky_slope = leaky_slope;
  c.softmax_of_log = softmax_of_log;
  return c;
}

DecoderHyper TrainConfig::decoder_hyper() const {
  DecoderHyper h = DecoderHyper::defaults(widths);
  for (std::size_t l = 0; l < widths.size(); ++l) h.eta[l] = eta.size() == 1 ? eta[0] : eta[l];
  return h;
}

TrainConfig parse_config(std::istream& in, const std::string& origin) {
  TrainConfig c;
  std::string line;
  int line_no = 0;
  std::string layers;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::kUsage, origin + ": line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      // layers is checked against the final widths
      if (key == "layers") {
        layers = value;
      } else {
        c.set(key, value);
      }
    } catch (const Error& e) {
      fail(e.code(), origin + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!layers.empty()) c.set("layers", layers);
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open config " + path.string());
  return parse_config(in, path.string());
}

std::string to_text(const TrainConfig& config) {
  std::ostringstream out;
  for (const auto& k : TrainConfig::keys()) {
    if (k == "layers") continue;
    out << k << " = " << config.get(k) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Node subsampling

std::vector<double> node_inclusion_probabilities(std::span<const double> importance, double k_mix,
                                                 double alpha_imp) {
  const std::size_t n = importance.size();
  require(n >= 2, ErrorCode::kUsage, "node sampling needs at least two nodes");
  require(k_mix >= 0.0 && k_mix <= 1.0, ErrorCode::kUsage, "k_mix must lie in [0, 1]");
  std::vector<double> q(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    require(importance[i] >= 0.0 && std::isfinite(importance[i]), ErrorCode::kData,
            "node importance must be finite and nonnegative");
    // 0^0 = 1 keeps alpha = 0 uniform even for zero-importance nodes
    q[i] = alpha_imp == 0.0 ? 1.0 : std::pow(importance[i], alpha_imp);
    total += q[i];
  }
  require(total > 0.0, ErrorCode::kData, "node importance is zero for every node");
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] /= total;
    p[i] = k_mix * q[i] + (1.0 - k_mix) * (1.0 - q[i]) / static_cast<double>(n - 1);
  }
  return p;
}

std::vector<Index> sample_node_subset(const AliasTable& table, int subset_size, Rng& rng) {
  std::vector<Index> out(static_cast<std::size_t>(subset_size));
  for (auto& v : out) v = static_cast<Index>(table.sample(rng));
  return out;
}

std::vector<double> node_importance(const SparseCountMatrix& x, const AdjacencyGraph& graph, Importance kind) {
  std::vector<double> f(x.num_nodes());
  for (Index i = 0; i < x.num_nodes(); ++i) {
    f[i] = kind == Importance::kDegree ? static_cast<double>(graph.degree(i)) : static_cast<double>(x.row_total(i));
  }
  return f;
}

// ---------------------------------------------------------------------------
// Optimizers

void Adam::ascend(std::span<Matrix* const> params, std::span<const Matrix> grads) {
  require(params.size() == grads.size(), ErrorCode::kInternal, "Adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grads[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() += lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double TlasgrState::stepsize() const { return eps0 * std::pow(tau0 + static_cast<double>(step), -kappa); }

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v, double floor) {
  const Eigen::Index n = v.size();
  const double mass = 1.0 - floor * static_cast<double>(n);
  require(n > 0 && mass > 0.0, ErrorCode::kInternal, "simplex projection: floor too large for the dimension");
  std::vector<double> w(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) w[i] = std::isfinite(v[i]) ? v[i] - floor : 0.0;
  std::vector<double> s = w;
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0, shift = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    cum += s[j];
    const double t = (cum - mass) / static_cast<double>(j + 1);
    if (s[j] - t > 0.0) shift = t;
  }
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = std::max(w[i] - shift, 0.0) + floor;
  out /= out.sum();  // removes rounding drift; the floor holds up to one ulp
  return out;
}

Eigen::MatrixXd tlasgr_update_phi(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& term_topic, double eta,
                                  TlasgrState& state, int layer, std::uint64_t seed, bool noise) {
  require(phi.rows() == term_topic.rows() && phi.cols() == term_topic.cols(), ErrorCode::kInternal,
          "tlasgr_update_phi: dimension mismatch");
  if (state.precond.size() <= static_cast<std::size_t>(layer)) state.precond.resize(layer + 1);
  Eigen::VectorXd& m = state.precond[layer];
  const double eps = state.stepsize();
  const double k_prev = static_cast<double>(phi.rows());
  const Eigen::VectorXd scale = (state.rho * term_topic.colwise().sum().transpose()).array() + eta * k_prev;
  if (m.size() != phi.cols()) {
    m = scale;
  } else {
    m = (1.0 - eps) * m + eps * scale;
  }
  Eigen::MatrixXd out(phi.rows(), phi.cols());
  for (Eigen::Index k = 0; k < phi.cols(); ++k) {
    const Eigen::VectorXd drift =
        (state.rho * term_topic.col(k).array() + eta).matrix() - scale[k] * phi.col(k);
    Eigen::VectorXd next = phi.col(k) + (eps / m[k]) * drift;
    if (noise) {
      Rng rng = Rng::derive(seed, kTagTlasgr, state.step, (static_cast<std::uint64_t>(layer) << 32) | k);
      for (Eigen::Index v = 0; v < next.size(); ++v) {
        next[v] += std::sqrt(2.0 * eps / m[k] * phi(v, k)) * sample_normal(rng);
      }
    }
    out.col(k) = project_to_simplex(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loops

std::string to_text(const IterationRecord& r) {
  std::ostringstream out;
  out.precision(10);
  out << "iter=" << r.iteration << " elbo=" << r.elbo << " node=" << r.node << " edge=" << r.edge << " kl=" << r.kl
      << " time=" << r.seconds;
  if (r.subgraph_nodes > 0) out << " sub_nodes=" << r.subgraph_nodes << " sub_edges=" << r.subgraph_edges;
  if (r.edge_skipped) out << " edge_skipped=1";
  if (r.clamped_edges > 0) out << " clamped_edges=" << r.clamped_edges;
  return out.str();
}

namespace {

struct StepResult {
  double total = 0, node = 0, edge = 0, kl = 0;
  int clamped = 0;
  std::vector<Eigen::MatrixXd> theta;
};

struct StepInputs {
  const EncoderInput* in = nullptr;
  const DecoderState* decoder = nullptr;
  Eigen::MatrixXd kl_rate;
  ElboOptions elbo;
  const std::vector<int>* labels = nullptr;  // aligned with the input rows
  double label_scale = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
};

// One gradient step of the encoder on the (sub)graph ELBO; returns the
// sampled theta the decoder update consumes.
StepResult encoder_step(EncoderWeights& enc, Adam& adam, const StepInputs& s) {
  const EncoderConfig& cfg = enc.config;
  Tape tape;
  const auto params = enc.parameters();
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Matrix* p : params) vars.push_back(tape.parameter(*p));
  const EncoderVars v = encoder_vars_from(enc, vars);
  Rng att = Rng::derive(s.seed, kTagAttentionNoise, s.iteration);
  const WeibullPosterior post = encoder_forward(tape, v, cfg, *s.in, &att, false);
  Rng noise = Rng::derive(s.seed, kTagEncoderNoise, s.iteration);
  const auto eps = draw_theta_noise(cfg, s.in->num_nodes, noise);
  const DecoderView view{&s.decoder->phi, s.decoder->hyper.gamma, s.kl_rate};
  const ThetaStack th = sample_theta_stack(post, view, cfg, eps);
  const ElboTerms terms = elbo(tape, *s.in, th, post, v, view, s.elbo);
  Var objective = terms.total;
  if (s.labels != nullptr) {
    objective = ad::add(ad::scale(classification_loglik(tape, th.theta[0], v, *s.labels), s.label_scale), objective);
  }
  tape.backward(objective);
  std::vector<Matrix> grads;
  grads.reserve(vars.size());
  for (const Var& p : vars) {
    grads.push_back(tape.grad(p));
    require(grads.back().allFinite(), ErrorCode::kNumeric, "non-finite gradient");
  }
  adam.ascend(params, grads);

  StepResult r;
  r.total = objective.scalar();
  r.node = terms.node.scalar();
  r.edge = terms.edge.scalar();
  r.kl = terms.kl.scalar();
  r.clamped = terms.clamped_edges;
  require(std::isfinite(r.total), ErrorCode::kNumeric, "non-finite loss");
  for (const Var& t : th.theta) r.theta.push_back(t.value());
  return r;
}

// Latent term-topic counts per layer given sampled theta: node augmentation
// at the bottom, CRT propagation (with edge counts) upward.
std::vector<Eigen::MatrixXd> latent_term_topic(const SparseCountMatrix& x, const AdjacencyGraph& graph,
                                               const std::vector<Eigen::MatrixXd>& phi,
                                               const std::vector<Eigen::VectorXd>& u,
                                               const std::vector<Eigen::MatrixXd>& theta, std::uint64_t seed,
                                               std::uint64_t iteration) {
  const int t = static_cast<int>(phi.size());
  const AugmentOptions aug{false, iteration};
  const bool edges = graph.num_edges() > 0;
  EdgeAugment ea;
  if (edges) ea = augment_edge_counts(graph, u, theta, seed, aug);
  std::vector<Eigen::MatrixXd> out;
  NodeAugment na = augment_node_counts(x, phi[0], theta[0], seed, 0, aug);
  out.push_back(na.term_topic);
  const Eigen::MatrixXd none;
  for (int l = 0; l + 1 < t; ++l) {
    const SparseCountMatrix above = propagate_counts_upward(na.doc_topic, edges ? ea.doc_topic[l] : none,
                                                            phi[l + 1], theta[l + 1], seed, l, iteration);
    na = augment_node_counts(above, phi[l + 1], theta[l + 1], seed, l + 1, aug);
    out.push_back(na.term_topic);
  }
  return out;
}

void sync_u(DecoderState& dec, const EncoderWeights& enc) {
  for (std::size_t l = 0; l < dec.u.size(); ++l) {
    dec.u[l] = enc.log_u[l].transpose().array().exp().max(kValueFloor).matrix();
  }
}

Eigen::MatrixXd kl_rate_for(const TrainConfig& config, const DecoderState& dec, std::span<const Index> rows) {
  const int t = dec.num_layers();
  Eigen::MatrixXd rate = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(rows.size()), t);
  if (config.kl_rate == KlRate::kDecoder) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (int l = 0; l < t; ++l) rate(static_cast<Eigen::Index>(r), l) = dec.c(rows[r], l + 1);
    }
  }
  return rate;
}

struct Session {
  const TrainConfig& config;
  const TrainHooks& hooks;
  DecoderState dec;
  EncoderWeights enc;
  std::vector<IterationRecord> log;

  void checkpoint() const {
    if (hooks.checkpoint_path) save_checkpoint(*hooks.checkpoint_path, Checkpoint{config, dec, enc});
  }

  // Returns false when the hook asks to stop.
  bool finish_iteration(const IterationRecord& r) {
    log.push_back(r);
    if (hooks.log_stream) *hooks.log_stream << to_text(r) << '\n';
    if (config.checkpoint_interval > 0 && (r.iteration + 1) % config.checkpoint_interval == 0) checkpoint();
    return !hooks.on_iteration || hooks.on_iteration(r, dec, enc);
  }

  [[noreturn]] void abort_numeric(const Error& e, int iteration) const {
    checkpoint();
    fail(ErrorCode::kNumeric, "training aborted at iteration " + std::to_string(iteration) + ": " + e.what() +
                                  (hooks.checkpoint_path ? " (checkpoint written)" : ""));
  }
};

Session start_session(const SparseCountMatrix& x, const AdjacencyGraph& graph, const TrainConfig& config,
                      const std::vector<int>* labels, const TrainHooks& hooks, int num_classes) {
  config.validate_for(x.num_nodes());
  require(graph.num_nodes() == x.num_nodes(), ErrorCode::kData, "features and graph disagree on node count");
  if (config.supervised) {
    require(labels != nullptr && labels->size() == x.num_nodes(), ErrorCode::kData,
            "supervised training needs one label entry per node");
    require(num_classes >= 2, ErrorCode::kData, "supervised training needs at least two classes");
  }
  Session s{config, hooks,
            init_decoder(config.widths, x.vocab_size(), x.num_nodes(), config.decoder_hyper(), config.seed),
            init_encoder(config.encoder_config(), x.vocab_size(), config.supervised ? num_classes : 0, config.seed),
            {}};
  return s;
}

void finalize(Session& s, const SparseCountMatrix& x, const AdjacencyGraph& graph) {
  sync_u(s.dec, s.enc);
  if (s.config.iterations > 0) s.dec.theta = infer_theta(s.enc, s.dec, x, graph);
}

}  // namespace

TrainResult train_full_batch(const SparseCountMatrix& x, const AdjacencyGraph& graph, const TrainConfig& config,
                             const std::vector<int>* labels, const TrainHooks& hooks, int num_classes) {
  Session s = start_session(x, graph, config, labels, hooks, num_classes);
  const EncoderInput in = EncoderInput::build(x, graph);
  std::vector<Index> all(x.num_nodes());
  std::iota(all.begin(), all.end(), Index{0});
  Adam adam(config.learning_rate);
  const bool edges = graph.num_edges() > 0;

  for (int it = 0; it < config.iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    StepInputs step;
    step.in = &in;
    step.decoder = &s.dec;
    step.kl_rate = kl_rate_for(config, s.dec, all);
    step.elbo.beta = edges ? config.beta : 0.0;
    step.labels = config.supervised ? labels : nullptr;
    step.seed = config.seed;
    step.iteration = static_cast<std::uint64_t>(it);
    StepResult r;
    try {
      r = encoder_step(s.enc, adam, step);
      sync_u(s.dec, s.enc);
      s.dec.theta = r.theta;
      const auto counts = latent_term_topic(x, graph, s.dec.phi, s.dec.u, s.dec.theta, config.seed, s.dec.iteration);
      for (int l = 0; l < s.dec.num_layers(); ++l) {
        s.dec.phi[l] = update_phi_gibbs(counts[l], s.dec.hyper.eta[l], config.seed, l, s.dec.iteration);
      }
      update_scales(s.dec, s.dec.iteration);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      s.abort_numeric(e, it);
    }
    ++s.dec.iteration;
    IterationRecord rec;
    rec.iteration = it;
    rec.elbo = r.total;
    rec.node = r.node;
    rec.edge = r.edge;
    rec.kl = r.kl;
    rec.edge_skipped = !edges;
    rec.clamped_edges = r.clamped;
    rec.seconds = seconds_since(start);
    if (!s.finish_iteration(rec)) break;
  }
  finalize(s, x, graph);
  return {std::move(s.dec), std::move(s.enc), std::move(s.log)};
}

TrainResult train_scalable(const SparseCountMatrix& x, const AdjacencyGraph& graph, const TrainConfig& config,
                           const std::vector<int>* labels, const TrainHooks& hooks, int num_classes) {
  Session s = start_session(x, graph, config, labels, hooks, num_classes);
  const double n_total = static_cast<double>(x.num_nodes());
  const auto probs =
      node_inclusion_probabilities(node_importance(x, graph, config.importance), config.k_mix, config.alpha_imp);
  const AliasTable table(probs);
  Adam adam(config.learning_rate);
  TlasgrState tl;
  tl.eps0 = config.tlasgr_eps0;
  tl.tau0 = config.tlasgr_tau0;
  tl.kappa = config.tlasgr_kappa;
  const double ns = static_cast<double>(config.subset_size);

  for (int it = 0; it < config.iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    Rng pick = Rng::derive(config.seed, kTagNodeSubset, static_cast<std::uint64_t>(it));
    const auto sample = sample_node_subset(table, config.subset_size, pick);
    auto [sub, kept] = graph.induced(sample);
    const SparseCountMatrix xs = x.select_rows(kept);
    const EncoderInput in = EncoderInput::build(xs, sub);
    const double n_sub = static_cast<double>(kept.size());
    const bool edges = sub.num_edges() > 0;

    StepInputs step;
    step.in = &in;
    step.decoder = &s.dec;
    step.kl_rate = kl_rate_for(config, s.dec, kept);
    step.elbo.node_scale = n_total / n_sub;
    step.elbo.beta = edges ? config.beta : 0.0;
    if (edges && kept.size() >= 2) {
      if (config.debias == Debias::kEndpointProduct) {
        // pair weight 1 / (N_s (N_s - 1) p_i p_j), factorized over endpoints
        const double root = std::sqrt(ns * (ns - 1.0));
        step.elbo.edge_node_weights.resize(kept.size());
        for (std::size_t a = 0; a < kept.size(); ++a) step.elbo.edge_node_weights[a] = 1.0 / (root * probs[kept[a]]);
      } else {
        step.elbo.edge_scale = n_total * (n_total - 1.0) / (n_sub * (n_sub - 1.0));
      }
    }
    std::vector<int> sub_labels;
    if (config.supervised) {
      sub_labels.reserve(kept.size());
      for (Index k : kept) sub_labels.push_back((*labels)[k]);
      step.labels = &sub_labels;
      step.label_scale = n_total / n_sub;
    }
    step.seed = config.seed;
    step.iteration = static_cast<std::uint64_t>(it);
    tl.rho = n_total / n_sub;

    StepResult r;
    try {
      r = encoder_step(s.enc, adam, step);
      sync_u(s.dec, s.enc);
      const auto counts = latent_term_topic(xs, sub, s.dec.phi, s.dec.u, r.theta, config.seed, s.dec.iteration);
      for (int l = 0; l < s.dec.num_layers(); ++l) {
        s.dec.phi[l] = tlasgr_update_phi(s.dec.phi[l], counts[l], s.dec.hyper.eta[l], tl, l, config.seed);
      }
      ++tl.step;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      s.abort_numeric(e, it);
    }
    ++s.dec.iteration;
    IterationRecord rec;
    rec.iteration = it;
    rec.elbo = r.total;
    rec.node = r.node;
    rec.edge = r.edge;
    rec.kl = r.kl;
    rec.subgraph_nodes = static_cast<int>(kept.size());
    rec.subgraph_edges = sub.num_edges();
    rec.edge_skipped = !edges;
    rec.clamped_edges = r.clamped;
    rec.seconds = seconds_since(start);
    if (!s.finish_iteration(rec)) break;
  }
  finalize(s, x, graph);
  return {std::move(s.dec), std::move(s.enc), std::move(s.log)};
}

TrainResult train(const SparseCountMatrix& x, const AdjacencyGraph& graph, const TrainConfig& config,
                  const std::vector<int>* labels, const TrainHooks& hooks, int num_classes) {
  return config.trainer == TrainerKind::kScalable ? train_scalable(x, graph, config, labels, hooks, num_classes)
                                                  : train_full_batch(x, graph, config, labels, hooks, num_classes);
}

namespace {

std::vector<Eigen::MatrixXd> theta_from_encoder(const EncoderWeights& encoder, const DecoderState& decoder,
                                                const SparseCountMatrix& x, const AdjacencyGraph& graph,
                                                Rng* noise) {
  require(x.vocab_size() == encoder.input_dim, ErrorCode::kData, "features do not match the encoder vocabulary");
  const EncoderInput in = EncoderInput::build(x, graph);
  Tape tape;
  const EncoderVars v = bind_encoder(tape, encoder, false);
  const WeibullPosterior post = encoder_forward(tape, v, encoder.config, in, noise, noise == nullptr);
  const DecoderView view{&decoder.phi, decoder.hyper.gamma,
                         Eigen::MatrixXd::Ones(in.num_nodes, decoder.num_layers())};
  const auto eps = noise ? draw_theta_noise(encoder.config, in.num_nodes, *noise) : std::vector<Matrix>{};
  const ThetaStack th = sample_theta_stack(post, view, encoder.config, eps);
  std::vector<Eigen::MatrixXd> out;
  for (const Var& t : th.theta) out.push_back(t.value());
  return out;
}

}  // namespace

std::vector<Eigen::MatrixXd> infer_theta(const EncoderWeights& encoder, const DecoderState& decoder,
                                         const SparseCountMatrix& x, const AdjacencyGraph& graph) {
  return theta_from_encoder(encoder, decoder, x, graph, nullptr);
}

std::vector<Eigen::MatrixXd> sample_theta_draw(const EncoderWeights& encoder, const DecoderState& decoder,
                                               const SparseCountMatrix& x, const AdjacencyGraph& graph,
                                               std::uint64_t seed, std::uint64_t draw) {
  Rng noise = Rng::derive(seed, kTagEncoderNoise, ~std::uint64_t{0}, draw);
  return theta_from_encoder(encoder, decoder, x, graph, &noise);
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  const std::string cfg = to_text(c.config);
  out << "wgae-checkpoint 1\nconfig " << std::count(cfg.begin(), cfg.end(), '\n') << '\n' << cfg;
  write_decoder(out, c.decoder);
  write_encoder(out, c.encoder);
  out << "end-checkpoint\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string tag;
  int version = 0;
  in >> tag >> version;
  require(tag == "wgae-checkpoint" && version == 1, ErrorCode::kData, "not a version-1 checkpoint");
  std::size_t lines = 0;
  in >> tag >> lines;
  require(tag == "config", ErrorCode::kData, "checkpoint: missing config block");
  std::string line;
  std::getline(in, line);
  std::string cfg;
  for (std::size_t i = 0; i < lines && std::getline(in, line); ++i) cfg += line + '\n';
  std::istringstream cfg_in(cfg);
  Checkpoint c;
  c.config = parse_config(cfg_in, "checkpoint config");
  c.decoder = read_decoder(in);
  c.encoder = read_encoder(in);
  in >> tag;
  require(tag == "end-checkpoint", ErrorCode::kData, "checkpoint: missing end marker");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    require(out.good(), ErrorCode::kIo, "cannot write checkpoint " + path.string());
    write_checkpoint(out, c);
    require(out.good(), ErrorCode::kIo, "failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace wgae
