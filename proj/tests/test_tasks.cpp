#include <fstream>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "wgae/error.hpp"
#include "wgae/tasks.hpp"

using namespace wgae;

namespace {

// Labels follow the dominant top-layer topic, so they carry signal.
Dataset synthetic_dataset(Index n, std::uint64_t seed) {
  const std::vector<int> widths{4, 2};
  DecoderHyper h = DecoderHyper::defaults(widths);
  h.gamma.setConstant(0.3);
  GenerativeOptions opt;
  opt.node_scale = 0.05;
  opt.phi_eta = 0.1;
  opt.u_layers = {Eigen::VectorXd::Constant(4, 0.01), Eigen::VectorXd::Constant(2, 0.01)};
  auto s = sample_gpgbn(widths, 30, n, h, opt, seed);
  Dataset d;
  d.features = s.features;
  d.graph = s.graph;
  LabelVector labels;
  labels.num_classes = 2;
  labels.class_names = {"a", "b"};
  for (Index i = 0; i < n; ++i) labels.labels.push_back(s.truth.theta[1](i, 0) >= s.truth.theta[1](i, 1) ? 0 : 1);
  d.labels = labels;
  return d;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.widths = {4, 2};
  c.iterations = 3;
  c.learning_rate = 1e-2;
  c.eval_seeds = 2;
  c.label_per_class = 5;
  c.label_val = 5;
  c.label_test = 10;
  return c;
}

}  // namespace

TEST_CASE("ingest triples with edges, labels and vocabulary") {
  test::TempFile features("# nodes 3 vocab 3\n0 0 2\n1 1 1\n2 2 4\n2 0 1\n");
  test::TempFile edges("0 1\n1 2\n2 1\n");
  test::TempFile labels("0 sports\n2 arts\n");
  test::TempFile vocab("ball\ngoal\npaint\n");
  IngestOptions opt;
  opt.features = features.path();
  opt.edges = edges.path();
  opt.labels = labels.path();
  opt.vocabulary = vocab.path();
  const Dataset d = ingest(opt);
  CHECK(d.features.num_nodes() == 3);
  CHECK(d.graph.num_edges() == 2);
  REQUIRE(d.labels);
  CHECK(d.labels->class_names == std::vector<std::string>{"arts", "sports"});
  CHECK(d.labels->labels == std::vector<int>{1, -1, 0});
  CHECK(d.vocabulary.size() == 3);

  test::TempDir dir;
  save_dataset(d, dir.path());
  const Dataset back = load_dataset(dir.path());
  CHECK(back.features.entries().size() == d.features.entries().size());
  CHECK(back.graph.num_edges() == 2);
  CHECK(back.labels->labels == d.labels->labels);
  CHECK(back.labels->class_names == d.labels->class_names);
  CHECK(back.vocabulary == d.vocabulary);
  CHECK(dataset_files(dir.path()).size() == 5);
}

TEST_CASE("ingest errors") {
  test::TempFile features("0 0 1\n1 1 1\n");
  test::TempFile bad_labels("0 x y\n");
  test::TempFile short_vocab("one\n");
  IngestOptions opt;
  opt.features = features.path();
  opt.labels = bad_labels.path();
  CHECK_THROWS_AS(ingest(opt), Error);
  opt.labels.reset();
  opt.vocabulary = short_vocab.path();
  CHECK_THROWS_AS(ingest(opt), Error);
  test::TempDir dir;
  try {
    load_dataset(dir.path());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}

TEST_CASE("cosine graph built at ingest") {
  test::TempFile features("0 0 1\n0 1 1\n1 0 1\n2 2 1\n");
  IngestOptions opt;
  opt.features = features.path();
  opt.tau_a = 0.7;
  const Dataset d = ingest(opt);
  REQUIRE(d.graph.num_edges() == 1);
  CHECK(d.graph.has_edge(0, 1));
}

TEST_CASE("link prediction over seeds is deterministic and thread-count independent") {
  const Dataset d = synthetic_dataset(40, 2);
  REQUIRE(d.graph.num_edges() >= 20);
  TrainConfig c = tiny_config();
  std::ostringstream log;
  const auto a = evaluate_link_prediction(d, c, &log);
  c.threads = 2;
  const auto b = evaluate_link_prediction(d, c);
  REQUIRE(a.runs.size() == 2);
  CHECK(a.runs[0].seed == 1);
  CHECK(a.runs[1].seed == 2);
  for (std::size_t r = 0; r < 2; ++r) CHECK(a.runs[r].values == b.runs[r].values);
  for (const auto& run : a.runs) {
    CHECK(run.values.count("auc") == 1);
    CHECK(run.values.at("auc") >= 0.0);
    CHECK(run.values.at("auc") <= 1.0);
  }
  CHECK(log.str().find("link-pred seed=1") < log.str().find("link-pred seed=2"));
}

TEST_CASE("clustering and classification tasks") {
  const Dataset d = synthetic_dataset(40, 3);
  TrainConfig c = tiny_config();
  c.eval_seeds = 1;
  const auto cl = evaluate_clustering(d, c);
  CHECK(cl.mean("acc") >= 0.5);
  CHECK(cl.mean("nmi") >= 0.0);

  const auto cf = evaluate_classification(d, c);
  const double acc = cf.mean("acc");
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  // Re-scoring the same supervised model from a checkpoint agrees.
  TrainConfig sup = c;
  sup.supervised = true;
  const auto model = train_on_dataset(d, sup);
  const auto rescored = evaluate_classification(d, Checkpoint{sup, model.decoder, model.encoder});
  CHECK(rescored.mean("acc") == acc);

  Dataset unlabeled = d;
  unlabeled.labels.reset();
  CHECK_THROWS_AS(evaluate_clustering(unlabeled, c), Error);
  CHECK_THROWS_AS(evaluate_classification(unlabeled, c), Error);
  const auto unsup = train_on_dataset(d, c);
  CHECK_THROWS_AS(evaluate_classification(d, Checkpoint{c, unsup.decoder, unsup.encoder}), Error);
}

TEST_CASE("supervised training sees only the training labels") {
  const Dataset d = synthetic_dataset(40, 4);
  TrainConfig c = tiny_config();
  const auto split = label_split_for(d, c);
  CHECK(split.train.size() == 10);
  CHECK(split.val.size() == 5);
  CHECK(split.test.size() == 10);
  for (Index i : split.test) {
    CHECK(std::find(split.train.begin(), split.train.end(), i) == split.train.end());
  }
}
