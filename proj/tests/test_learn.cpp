#include <gtest/gtest.h>

#include "plcbinx/learn/gnn.hpp"
#include "plcbinx/learn/linear.hpp"
#include "plcbinx/learn/params_io.hpp"
#include "plcbinx/learn/seqmodel.hpp"
#include "plcbinx/learn/train.hpp"
#include "support.hpp"

using namespace plcbinx;
using namespace plcbinx::learn;

namespace {

Param random_param(const std::string& name, std::size_t r, std::size_t c, Rng& rng) {
  Param p(name, r, c);
  for (auto& x : p.value.data) x = rng.uniform(-1, 1);
  return p;
}

// Reduces any matrix to a scalar with fixed random weights so every output
// entry matters.
Tape::Id reduce(Tape& t, Tape::Id x, Rng& rng) {
  const Mat& v = t.value(x);
  Mat w(v.cols, 1);
  for (auto& e : w.data) e = rng.uniform(-1, 1);
  auto y = t.matmul(x, t.input(std::move(w)));
  return t.mean_rows(y);
}

void check_op(const std::string& name, std::vector<Param*> ps,
              const std::function<Tape::Id(Tape&, std::vector<Tape::Id>&)>& build) {
  testkit::GradStats st;
  Rng rng(5);
  testkit::grad_check(ps, [&](bool back) {
    Tape t;
    std::vector<Tape::Id> ids;
    for (auto* p : ps) ids.push_back(t.param(*p));
    Rng r(99);
    const auto l = reduce(t, build(t, ids), r);
    if (back) t.backward(l);
    return t.value(l).data[0];
  }, st, rng, 12);
  EXPECT_LE(st.worst, 1e-6) << name << " worst in " << st.worst_name;
}

}  // namespace

TEST(Tape, OperatorGradients) {
  Rng rng(3);
  auto a = random_param("a", 4, 3, rng), b = random_param("b", 3, 5, rng), c = random_param("c", 4, 3, rng);
  auto d = random_param("d", 5, 3, rng), row = random_param("row", 1, 3, rng), g = random_param("g", 1, 3, rng);
  check_op("matmul", {&a, &b}, [](Tape& t, auto& x) { return t.matmul(x[0], x[1]); });
  check_op("matmul_nt", {&a, &d}, [](Tape& t, auto& x) { return t.matmul_nt(x[0], x[1]); });
  check_op("matmul_tn", {&a, &c}, [](Tape& t, auto& x) { return t.matmul_tn(x[0], x[1]); });
  check_op("add", {&a, &c}, [](Tape& t, auto& x) { return t.add(x[0], x[1]); });
  check_op("add_row", {&a, &row}, [](Tape& t, auto& x) { return t.add_row(x[0], x[1]); });
  check_op("scale", {&a}, [](Tape& t, auto& x) { return t.scale(x[0], -2.5); });
  check_op("relu", {&a}, [](Tape& t, auto& x) { return t.relu(x[0]); });
  check_op("tanh", {&a}, [](Tape& t, auto& x) { return t.tanh(x[0]); });
  check_op("softmax_rows", {&a}, [](Tape& t, auto& x) { return t.softmax_rows(x[0]); });
  check_op("softmax_all", {&a}, [](Tape& t, auto& x) { return t.softmax_all(x[0]); });
  check_op("layer_norm", {&a, &g, &row}, [](Tape& t, auto& x) { return t.layer_norm(x[0], x[1], x[2]); });
  check_op("gather", {&d}, [](Tape& t, auto& x) { return t.gather(x[0], {4, 0, 4, 2}); });
  check_op("neighbor_mean", {&a}, [](Tape& t, auto& x) { return t.neighbor_mean(x[0], {{1, 2}, {}, {0}, {0, 1, 2}}); });
  check_op("segment_mean", {&a}, [](Tape& t, auto& x) { return t.segment_mean(x[0], {0, 1, 4}); });
  check_op("max_rows", {&a}, [](Tape& t, auto& x) { return t.max_rows(x[0]); });
  check_op("concat_cols", {&a, &c}, [](Tape& t, auto& x) { return t.concat_cols({x[0], x[1], x[0]}); });
  check_op("sparse_matmul", {&b}, [](Tape& t, auto& x) {
    SparseRows s;
    s.cols = 3;
    s.rows = {{{0, 1.5}, {2, -1.0}}, {}, {{1, 0.5}}};
    return t.sparse_matmul(s, x[0]);
  });
  check_op("cross_entropy", {&row}, [](Tape& t, auto& x) { return t.cross_entropy(x[0], 1); });
}

TEST(Tape, CrossEntropyValue) {
  Tape t;
  Mat l(1, 3);
  l.data = {1.0, 2.0, 3.0};
  const auto id = t.cross_entropy(t.input(l), 2);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(t.value(id).data[0], -std::log(std::exp(3.0) / z), 1e-12);
}

TEST(Models, SequenceModelGradients) {
  for (std::uint64_t seed : {1, 2, 3}) {
    SeqClassifierConfig sc;
    sc.vocab = 40;
    sc.embed_dim = 8;
    sc.ff_dim = 12;
    sc.max_len = 10;
    sc.encoder_layers = 2;
    sc.seed = seed;
    SeqClassifier m(sc);
    Rng rng(seed);
    std::vector<std::uint32_t> idx;
    for (int i = 0; i < 9; ++i) idx.push_back(static_cast<std::uint32_t>(rng.below(sc.vocab)));
    testkit::GradStats st;
    testkit::grad_check(m.params(), [&](bool back) {
      Tape t;
      const auto l = t.cross_entropy(m.forward(t, idx), seed % 3);
      if (back) t.backward(l);
      return t.value(l).data[0];
    }, st, rng);
    EXPECT_EQ(st.tensors, m.params().size());
    EXPECT_LE(st.worst, 1e-3) << "seed " << seed << " " << st.worst_name;
  }
}

TEST(Models, GraphModelGradients) {
  const std::vector<Acfg> graphs{build_acfg(testkit::acfg_fixture()), build_acfg(testkit::two_edge_fixture())};
  for (std::uint64_t seed : {1, 2, 3}) {
    GnnConfig gc;
    gc.bag_dim = 16;
    gc.hidden = 6;
    gc.head_hidden = 5;
    gc.classes = 4;
    gc.seed = seed;
    GnnClassifier m(gc);
    const auto batch = make_batch(graphs, gc);
    Rng rng(seed);
    testkit::GradStats st;
    testkit::grad_check(m.params(), [&](bool back) {
      Tape t;
      const auto l = t.cross_entropy(m.forward(t, batch), seed % 4);
      if (back) t.backward(l);
      return t.value(l).data[0];
    }, st, rng);
    EXPECT_EQ(st.tensors, m.params().size());
    EXPECT_LE(st.worst, 1e-3) << "seed " << seed << " " << st.worst_name;
  }
}

TEST(Models, SequenceTruncationAndPadding) {
  SeqClassifierConfig sc;
  sc.vocab = 20;
  sc.embed_dim = 8;
  sc.ff_dim = 8;
  sc.max_len = 6;
  SeqClassifier m(sc);
  std::vector<std::uint32_t> longer{1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<std::uint32_t> cut(longer.begin(), longer.begin() + 6);
  EXPECT_EQ(m.logits(longer), m.logits(cut));
  EXPECT_EQ(m.logits({}).size(), sc.classes);
}

TEST(Models, VocabularyHashing) {
  EXPECT_EQ(vocab_index("mov", 4096), fnv1a64("mov") % 4096);
  EXPECT_LT(vocab_index("anything", 7), 7u);
}

TEST(Models, ParamsRoundTrip) {
  GnnConfig gc;
  gc.bag_dim = 8;
  gc.hidden = 4;
  gc.head_hidden = 4;
  gc.classes = 3;
  GnnClassifier a(gc);
  gc.seed = 9;
  GnnClassifier b(gc);
  const auto batch = make_batch({build_acfg(testkit::acfg_fixture())}, gc);
  EXPECT_NE(a.logits(batch), b.logits(batch));
  params_from_json(params_to_json(a.params()), b.params(), "");
  EXPECT_EQ(a.logits(batch), b.logits(batch));
  auto j = params_to_json(a.params());
  j.begin().value()["shape"] = {1, 1};
  EXPECT_THROW(params_from_json(j, b.params(), ""), Error);
}

TEST(Linear, SeparatesTwoClasses) {
  std::vector<SparseVec> xs;
  std::vector<int> ys;
  for (int i = 0; i < 20; ++i) {
    xs.push_back({{static_cast<std::uint32_t>(i % 2), 1.0}, {2, 0.5}});
    ys.push_back(i % 2);
  }
  LogisticModel m(3);
  m.fit(xs, ys, LogisticConfig{});
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(m.predict(xs[i]), ys[i]);
  EXPECT_THROW(m.fit(xs, std::vector<int>(20, 1), LogisticConfig{}), Error);
  const auto back = LogisticModel::from_json(m.to_json(), 3, "");
  EXPECT_EQ(back.weights(), m.weights());
}

TEST(Train, SelectsBestEpochAndRestoresIt) {
  Param p("p", 1, 1);
  ParamList ps{&p};
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.patience = 0;
  cfg.adam.lr = 0.1;
  const std::vector<double> scores{0.2, 0.6, 0.4, 0.6, 0.3, 0.1};
  std::size_t epoch = 0;
  std::vector<double> values;
  const auto log = train_minibatch(ps, 4, cfg,
                                   [&](std::size_t, double scale) {
                                     p.grad.data[0] += scale;
                                     return 1.0;
                                   },
                                   [&]() -> std::optional<double> {
                                     values.push_back(p.value.data[0]);
                                     return scores[epoch++];
                                   });
  EXPECT_EQ(log.selected_epoch, 4u);  // ties keep the later epoch
  EXPECT_EQ(log.validation.size(), 6u);
  EXPECT_DOUBLE_EQ(p.value.data[0], values[3]);
}

TEST(Train, Patience) {
  Param p("p", 1, 1);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.patience = 3;
  std::size_t epoch = 0;
  const auto log = train_minibatch({&p}, 2, cfg, [](std::size_t, double) { return 0.0; },
                                   [&]() -> std::optional<double> { return ++epoch == 2 ? 0.9 : 0.5; });
  EXPECT_EQ(log.selected_epoch, 2u);
  EXPECT_EQ(log.validation.size(), 5u);
}

TEST(Train, StopsAfterRepeatedPerfectValidation) {
  Param p("p", 1, 1);
  TrainConfig cfg;
  cfg.epochs = 20;
  const auto log = train_minibatch({&p}, 2, cfg, [](std::size_t, double) { return 0.0; },
                                   []() -> std::optional<double> { return 1.0; });
  EXPECT_EQ(log.validation.size(), cfg.perfect_patience);
  EXPECT_EQ(log.selected_epoch, cfg.perfect_patience);
}

TEST(Train, NoValidationKeepsLastEpoch) {
  Param p("p", 1, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto log = train_minibatch({&p}, 2, cfg, [](std::size_t, double) { return 0.0; }, nullptr);
  EXPECT_EQ(log.selected_epoch, 3u);
  EXPECT_EQ(log.epoch_loss.size(), 3u);
}

TEST(Train, ConfigJson) {
  TrainConfig c;
  c.epochs = 7;
  c.patience = 2;
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(train_config_from_json({{"batch", 0}}), Error);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Param p("p", 1, 2);
  p.grad.data = {3.0, -0.5};
  Adam opt(AdamConfig{0.01});
  opt.step({&p});
  EXPECT_NEAR(p.value.data[0], -0.01, 1e-9);
  EXPECT_NEAR(p.value.data[1], 0.01, 1e-9);
}
