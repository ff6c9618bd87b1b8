#include <cmath>
#include <filesystem>
#include <numeric>

#include <gtest/gtest.h>

#include "fairac.hpp"
#include "support/checks.hpp"

using namespace fairac;
using checks::random_matrix;
namespace fs = std::filesystem;

namespace {

const double kLn2 = std::log(2.0);

FairACConfig tiny_config() {
  FairACConfig c;
  c.embed_dim = 2;
  c.sensitive_hidden = 3;
  c.num_heads = 1;
  c.seed = 1;
  return c;
}

// D = 2, embed 2, topo 2; encoder identity, C_s outputs 0.5 everywhere.
FairACParams hand_params() {
  FairACParams p = FairACParams::init(2, 2, tiny_config());
  p.encoder.weight.value = Matrix::identity(2);
  p.encoder.bias.value.fill(0.0);
  p.decoder.weight.value = Matrix::identity(2);
  p.decoder.bias.value.fill(0.0);
  p.cs_out.weight.value.fill(0.0);
  p.cs_out.bias.value.fill(0.0);
  return p;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(r.size(), r.begin()->size());
  std::size_t i = 0;
  for (const auto& row : r) {
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

double max_abs_grad(const std::vector<Parameter*>& ps) {
  double m = 0;
  for (const auto* p : ps)
    for (double g : p->grad.data()) m = std::max(m, std::abs(g));
  return m;
}

std::vector<Matrix> values(const std::vector<Parameter*>& ps) {
  std::vector<Matrix> out;
  for (const auto* p : ps) out.push_back(p->value);
  return out;
}

TopoEmbeddingTable random_topo(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  TopoEmbeddingTable t;
  t.vectors = random_matrix(n, dim, rng);
  return t;
}

FairACConfig small_train_config(std::uint64_t seed) {
  FairACConfig c;
  c.embed_dim = 8;
  c.sensitive_hidden = 6;
  c.epochs = 5;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Autoencoder, EncodeDecode) {
  FairACParams p = hand_params();
  const Matrix x = rows({{1, 2}, {-3, 0.5}});
  EXPECT_EQ(decode(p, encode(p, x)), x);
  p.encoder.weight.value.fill(0.0);
  p.encoder.bias.value = rows({{0.25, -1}});
  const Matrix h = encode(p, x);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(h(i, 0), 0.25);
    EXPECT_EQ(h(i, 1), -1.0);
  }
  EXPECT_THROW(encode(p, Matrix(1, 3)), ShapeError);
}

TEST(Autoencoder, ReconstructionLoss) {
  FairACParams p = hand_params();
  {
    Tape t;
    EXPECT_EQ(t.scalar(loss_ae(t, p, rows({{1, 2}, {3, 4}}))), 0.0);
  }
  {
    p.decoder.bias.value = rows({{3, 4}});
    Tape t;
    EXPECT_NEAR(t.scalar(loss_ae(t, p, rows({{0.7, -2}}))), 5.0, 1e-12);
  }
  {
    // recon = 2x, so the residual is x itself
    p.decoder.bias.value.fill(0.0);
    p.decoder.weight.value = rows({{2, 0}, {0, 2}});
    Tape t;
    EXPECT_NEAR(t.scalar(loss_ae(t, p, rows({{3, 4}, {1, 0}}))), 3.0, 1e-12);
  }
  Tape t;
  EXPECT_THROW(loss_ae(t, p, Matrix(0, 2)), ConfigError);
}

TEST(SensitiveClassifier, HalfProbabilityGivesLn2) {
  FairACParams p = hand_params();
  Tape t;
  const Var h = t.constant(rows({{1, 2}, {3, -4}}));
  const std::vector<int> s{0, 1};
  EXPECT_NEAR(t.scalar(loss_cs(t, p, h, s, true)), kLn2, 1e-12);
  EXPECT_THROW(loss_cs(t, p, h, std::vector<int>{}, true), ConfigError);
  EXPECT_THROW(loss_cs(t, p, h, std::vector<int>{0, kUnavailable}, true), DataError);
}

TEST(SensitiveClassifier, ConfidentCorrectIsNearZero) {
  FairACParams p = hand_params();
  p.cs_out.bias.value = rows({{40.0}});
  Tape t;
  const double l = t.scalar(loss_cs(t, p, t.constant(rows({{0, 0}})), std::vector<int>{1}, true));
  EXPECT_GE(l, 0.0);
  EXPECT_LT(l, 1e-6);
}

TEST(FeatureFairness, CombinesReconstructionAndAdversary) {
  FairACParams p = hand_params();
  p.decoder.bias.value = rows({{3, 4}});
  const Matrix x = rows({{0, 0}});
  const std::vector<int> s{1};
  {
    Tape t;
    const auto l = loss_feature_fairness(t, p, x, s, 1.0);
    EXPECT_NEAR(t.scalar(l.ae), 5.0, 1e-12);
    EXPECT_NEAR(t.scalar(l.cs), kLn2, 1e-12);
    EXPECT_NEAR(t.scalar(l.total), 4.3069, 1e-4);
  }
  {
    Tape t;
    const auto l = loss_feature_fairness(t, p, x, s, 0.0);
    EXPECT_EQ(t.scalar(l.total), t.scalar(l.ae));
  }
}

TEST(FeatureFairness, GradientSkipsClassifier) {
  FairACParams p = FairACParams::init(3, 2, tiny_config());
  Rng rng(3);
  const Matrix x = random_matrix(4, 3, rng);
  Tape t;
  const auto l = loss_feature_fairness(t, p, x, std::vector<int>{0, 1, 1, 0}, 1.0);
  t.backward(l.total);
  EXPECT_GT(max_abs_grad(p.autoencoder_parameters()), 0.0);
  EXPECT_EQ(max_abs_grad(p.classifier_parameters()), 0.0);
  EXPECT_EQ(max_abs_grad(p.attention_parameters()), 0.0);
}

TEST(Attention, Scores) {
  const Matrix eye = Matrix::identity(2);
  const std::vector<double> e1{1, 0}, e2{0, 1};
  EXPECT_EQ(attention_score(eye, e1, e2), 0.0);
  EXPECT_NEAR(attention_score(eye, e1, e1), 0.7616, 1e-4);
  EXPECT_NEAR(attention_score(rows({{0, 1}, {0, 0}}), std::vector<double>{2, 0}, std::vector<double>{0, 3}),
              std::tanh(6.0), 1e-15);
  EXPECT_GT(attention_score(rows({{0, 1}, {0, 0}}), std::vector<double>{2, 0}, std::vector<double>{0, 3}),
            0.9999);
  EXPECT_THROW(attention_score(eye, std::vector<double>{1, 0, 0}, e1), ShapeError);
}

TEST(Attention, Coefficients) {
  for (double c : attention_coefficients(std::vector<double>{0.3, 0.3, 0.3})) EXPECT_NEAR(c, 1.0 / 3, 1e-15);
  const auto two = attention_coefficients(std::vector<double>{0.0, kLn2});
  EXPECT_NEAR(two[0], 1.0 / 3, 1e-15);
  EXPECT_NEAR(two[1], 2.0 / 3, 1e-15);
  for (double s : {-5.0, 0.0, 0.99}) EXPECT_EQ(attention_coefficients(std::vector<double>{s})[0], 1.0);
  EXPECT_THROW(attention_coefficients(std::vector<double>{}), ShapeError);
}

TEST(Completion, SingleNeighborIsCopied) {
  Rng rng(5);
  for (std::size_t heads : {1u, 2u, 4u}) {
    FairACConfig c = tiny_config();
    c.num_heads = heads;
    c.embed_dim = 3;
    FairACParams p = FairACParams::init(2, 4, c);
    for (auto& w : p.attention) w.value = random_matrix(4, 4, rng, 3.0);
    const Matrix h = rows({{1, 0, 0}});
    const Matrix out = complete_embedding(p, random_matrix(1, 4, rng).row(0), random_matrix(1, 4, rng), h);
    EXPECT_EQ(out, h);
  }
}

TEST(Completion, EqualCoefficientsAverage) {
  FairACConfig c = tiny_config();
  c.embed_dim = 2;
  FairACParams p = FairACParams::init(2, 2, c);
  p.attention[0].value.fill(0.0);  // every score tanh(0)
  const Matrix out = complete_embedding(p, std::vector<double>{1, 1}, rows({{1, 0}, {0, 1}}),
                                        rows({{1, 0}, {0, 1}}));
  EXPECT_NEAR(out(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(out(0, 1), 0.5, 1e-15);
}

TEST(Completion, IdenticalHeadsMatchSingleHead) {
  Rng rng(8);
  const Matrix w = random_matrix(4, 4, rng);
  const auto tu = random_matrix(1, 4, rng);
  const Matrix tn = random_matrix(5, 4, rng), hn = random_matrix(5, 3, rng);
  FairACConfig c = tiny_config();
  c.embed_dim = 3;
  FairACParams one = FairACParams::init(2, 4, c);
  one.attention[0].value = w;
  c.num_heads = 3;
  FairACParams three = FairACParams::init(2, 4, c);
  for (auto& a : three.attention) a.value = w;
  const Matrix a = complete_embedding(one, tu.row(0), tn, hn);
  const Matrix b = complete_embedding(three, tu.row(0), tn, hn);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(Completion, CoefficientsSumToOne) { EXPECT_LE(checks::max_coefficient_sum_error(21), 1e-9); }

TEST(Completion, LossValues) {
  Tape t;
  const Matrix truth = rows({{1, 2, 3}});
  EXPECT_EQ(t.scalar(loss_completion(t.constant(truth), truth)), 0.0);
  EXPECT_NEAR(t.scalar(loss_completion(t.constant(rows({{3, 2, 3}})), truth)), 2.0, 1e-15);
}

TEST(TopoFairness, UniformTarget) {
  FairACParams p = hand_params();
  {
    Tape t;
    const Var h = t.constant(rows({{1, 2}, {5, 6}}));
    EXPECT_NEAR(t.scalar(loss_topo_fairness(t, p, h, {}, TopoLossMode::uniform_target)), kLn2, 1e-12);
  }
  p.cs_out.bias.value = rows({{std::log(9.0)}});  // s_hat = 0.9
  Tape t;
  const Var h = t.constant(rows({{1, 2}}));
  EXPECT_NEAR(t.scalar(loss_topo_fairness(t, p, h, {}, TopoLossMode::uniform_target)),
              -0.5 * (std::log(0.9) + std::log(0.1)), 1e-12);
  EXPECT_NEAR(t.scalar(loss_topo_fairness(t, p, h, {}, TopoLossMode::uniform_target)), 1.204, 1e-3);
  EXPECT_NEAR(t.scalar(loss_topo_fairness(t, p, h, std::vector<int>{1}, TopoLossMode::negated_bce)),
              std::log(0.9), 1e-12);
  EXPECT_THROW(loss_topo_fairness(t, p, h, std::vector<int>{}, TopoLossMode::negated_bce), ShapeError);
}

TEST(TopoFairness, GradientReachesAttentionOnly) {
  const Graph g = checks::toy_graph(4);
  FairACConfig c = small_train_config(4);
  FairACParams p = FairACParams::init(g.attribute_dim(), 5, c);
  const auto topo = random_topo(g.num_nodes(), 5, 4);
  Rng rng(4);
  const Matrix h = random_matrix(g.num_nodes(), c.embed_dim, rng);
  std::vector<char> usable(g.num_nodes(), 1);
  for (NodeId u = 0; u < 6; ++u) usable[u] = 0;
  const CompletionPlan plan = plan_completion(g, {0, 1, 2, 3, 4, 5}, usable);
  Tape t;
  const Var done = complete_all(t, p, plan, topo.vectors, h, mean_rows(h, {6, 7}), true);
  t.backward(loss_topo_fairness(t, p, done, {}, TopoLossMode::uniform_target));
  EXPECT_GT(max_abs_grad(p.attention_parameters()), 0.0);
  EXPECT_EQ(max_abs_grad(p.classifier_parameters()), 0.0);
  EXPECT_EQ(max_abs_grad(p.autoencoder_parameters()), 0.0);
}

TEST(TotalLoss, Sum) {
  EXPECT_NEAR(total_loss(4.3069, 2.0, 0.6931, 1.0), 7.0, 1e-12);
  EXPECT_EQ(total_loss(1.5, 2.0, 9.0, 0.0), 3.5);
  EXPECT_LT(total_loss(1, 1, 0.5, 0.3), total_loss(1, 1, 0.6, 0.3));
}

TEST(Training, ZeroEpochsReturnsInitialization) {
  const Graph g = apply_attribute_missing(checks::toy_graph(2), 0.3, 2);
  FairACConfig c = small_train_config(2);
  c.epochs = 0;
  const auto topo = random_topo(g.num_nodes(), 4, 2);
  FairACModel m = train_fairac(g, topo, c);
  FairACParams init = FairACParams::init(g.attribute_dim(), 4, c);
  EXPECT_EQ(values(m.params.all_parameters()), values(init.all_parameters()));
  EXPECT_TRUE(m.trace.empty());
}

// Replays one epoch by hand: C_s changes only in step (b), the autoencoder
// only in step (c) and W (with beta = 0) only in step (e).
TEST(Training, AlternationTouchesOneBlockPerStep) {
  const Graph g = apply_attribute_missing(checks::toy_graph(3, 30, 80), 0.3, 3);
  FairACConfig c = small_train_config(3);
  c.epochs = 1;
  c.beta = 0.0;
  const auto topo = random_topo(g.num_nodes(), 4, 3);
  FairACModel trained = train_fairac(g, topo, c);

  FairACParams p = FairACParams::init(g.attribute_dim(), 4, c);
  Adam opt_cs(p.classifier_parameters(), c.adam), opt_ae(p.autoencoder_parameters(), c.adam),
      opt_w(p.attention_parameters(), c.adam);
  const NodeList plus = g.v_plus();
  Matrix h_all(g.num_nodes(), c.embed_dim);
  {
    Matrix x(plus.size(), g.attribute_dim());
    for (std::size_t r = 0; r < plus.size(); ++r) {
      const auto src = g.attributes_of(plus[r]);
      std::copy(src.begin(), src.end(), x.row(r).begin());
    }
    const Matrix h = encode(p, x);
    for (std::size_t r = 0; r < plus.size(); ++r)
      std::copy(h.row(r).begin(), h.row(r).end(), h_all.row(plus[r]).begin());
  }
  const NodeSplit first = sample_keep_drop(g, c.drop_rate, derive_seed(c.seed, 0));
  std::vector<int> s_keep;
  Matrix x_keep(first.v_keep.size(), g.attribute_dim());
  for (std::size_t r = 0; r < first.v_keep.size(); ++r) {
    s_keep.push_back(g.sensitive_of(first.v_keep[r]));
    const auto src = g.attributes_of(first.v_keep[r]);
    std::copy(src.begin(), src.end(), x_keep.row(r).begin());
  }
  {
    Tape t;
    t.backward(loss_cs(t, p, t.constant(gather_rows(h_all, first.v_keep)), s_keep, true));
    opt_cs.step();
  }
  EXPECT_EQ(values(trained.params.classifier_parameters()), values(p.classifier_parameters()));
  {
    Tape t;
    t.backward(loss_feature_fairness(t, p, x_keep, s_keep, c.beta).total);
    opt_ae.step();
  }
  EXPECT_EQ(values(trained.params.autoencoder_parameters()), values(p.autoencoder_parameters()));
  {
    const NodeSplit next = sample_keep_drop(g, c.drop_rate, derive_seed(c.seed, 1));
    std::vector<char> usable(g.num_nodes(), 0);
    for (NodeId v : next.v_keep) usable[v] = 1;
    const CompletionPlan plan = plan_completion(g, next.v_drop, usable);
    Tape t;
    const Var done = complete_all(t, p, plan, topo.vectors, h_all, mean_rows(h_all, next.v_keep), true);
    t.backward(loss_completion(done, gather_rows(h_all, plan.row_order())));
    opt_w.step();
  }
  EXPECT_EQ(values(trained.params.attention_parameters()), values(p.attention_parameters()));
}

TEST(Training, BetaZeroIgnoresTopoLossMode) {
  const Graph g = apply_attribute_missing(checks::toy_graph(6), 0.3, 6);
  const auto topo = random_topo(g.num_nodes(), 4, 6);
  FairACConfig a = small_train_config(6);
  a.beta = 0.0;
  FairACConfig b = a;
  b.lt_mode = TopoLossMode::negated_bce;
  FairACModel ma = train_fairac(g, topo, a), mb = train_fairac(g, topo, b);
  EXPECT_EQ(values(ma.params.all_parameters()), values(mb.params.all_parameters()));
  FairACConfig fair = a;
  fair.beta = 1.0;
  FairACModel mf = train_fairac(g, topo, fair);
  EXPECT_NE(values(ma.params.attention_parameters()), values(mf.params.attention_parameters()));
}

TEST(Training, TraceIsFiniteAndDeterministic) {
  const Graph g = apply_attribute_missing(checks::toy_graph(7), 0.3, 7);
  const auto topo = random_topo(g.num_nodes(), 4, 7);
  const FairACConfig c = small_train_config(7);
  const FairACModel a = train_fairac(g, topo, c), b = train_fairac(g, topo, c);
  ASSERT_EQ(a.trace.size(), c.epochs);
  for (std::size_t e = 0; e < c.epochs; ++e) {
    EXPECT_TRUE(std::isfinite(a.trace[e].total));
    EXPECT_EQ(a.trace[e].total, b.trace[e].total);
    EXPECT_NEAR(a.trace[e].total,
                total_loss(a.trace[e].feature, a.trace[e].completion, a.trace[e].topo, c.beta), 1e-12);
  }
}

TEST(Training, RejectsMismatchedTopology) {
  const Graph g = checks::toy_graph(8);
  EXPECT_THROW(train_fairac(g, random_topo(g.num_nodes() - 1, 4, 8), small_train_config(8)), ShapeError);
  FairACConfig bad = small_train_config(8);
  bad.drop_rate = 1.0;
  EXPECT_THROW(train_fairac(g, random_topo(g.num_nodes(), 4, 8), bad), ConfigError);
}

TEST(Training, SmoothedReconstructionLossDecreases) {
  const Graph g = apply_attribute_missing(make_synthetic_graph({}), 0.3, 0);
  FairACConfig c;
  c.epochs = 400;
  c.seed = 0;
  const FairACModel m = train_fairac(g, random_topo(g.num_nodes(), 64, 0), c);
  const std::size_t window = 50;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start + window <= m.trace.size(); start += window) {
    double mean = 0;
    for (std::size_t e = start; e < start + window; ++e) mean += m.trace[e].ae;
    mean /= window;
    EXPECT_LE(mean, prev) << "window starting at epoch " << start;
    prev = mean;
  }
}

TEST(Inference, CountsAndProvenance) {
  const Graph full = make_synthetic_graph({});
  const auto topo = random_topo(full.num_nodes(), 8, 1);
  FairACConfig c = small_train_config(1);
  FairACParams p = FairACParams::init(full.attribute_dim(), 8, c);
  const EmbeddingSet all = infer_embeddings(full, p, topo);
  EXPECT_EQ(all.count(Provenance::encoded), 403u);

  const Graph g = apply_attribute_missing(full, 0.3, 1);
  const EmbeddingSet e = infer_embeddings(g, p, topo);
  EXPECT_EQ(e.count(Provenance::completed), 121u);
  EXPECT_EQ(e.count(Provenance::encoded), 282u);
  for (double v : e.h.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Inference, SingleAttributedNeighborIsCopied) { EXPECT_TRUE(checks::singleton_copies_neighbor(22)); }

TEST(Inference, IsolatedMissingNodeUsesMeanEmbedding) {
  // 0 - 1, node 2 isolated and missing
  Graph g = make_graph(rows({{1, 0}, {0, 1}, {5, 5}}), {0, 1, 0}, {1, 0, 1}, {{0, 1}});
  g = apply_attribute_missing(g, 0.0, 0);
  g.has_attributes[2] = 0;
  g.sensitive[2] = kUnavailable;
  FairACParams p = FairACParams::init(2, 3, tiny_config());
  const EmbeddingSet e = infer_embeddings(g, p, random_topo(3, 3, 0));
  EXPECT_EQ(e.fallback_count, 1u);
  const Matrix h = encode(p, rows({{1, 0}, {0, 1}}));
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(e.h(2, c), (h(0, c) + h(1, c)) / 2, 1e-15);
}

TEST(Inference, PermutationEquivariant) {
  // 6 nodes, 2 and 5 missing
  Rng rng(13);
  const Matrix x = random_matrix(6, 3, rng);
  const std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {1, 5}, {2, 4}};
  const std::vector<int> s{0, 1, 0, 1, 1, 0};
  const Matrix topo = random_matrix(6, 4, rng);
  const std::vector<NodeId> perm{3, 5, 0, 4, 1, 2};  // old id -> new id

  const auto build = [&](const std::vector<NodeId>& map) {
    Matrix px(6, 3), pt(6, 4);
    std::vector<int> ps(6);
    std::vector<std::pair<NodeId, NodeId>> pe;
    for (NodeId u = 0; u < 6; ++u) {
      std::copy(x.row(u).begin(), x.row(u).end(), px.row(map[u]).begin());
      std::copy(topo.row(u).begin(), topo.row(u).end(), pt.row(map[u]).begin());
      ps[map[u]] = s[u];
    }
    for (auto [u, v] : edges) pe.emplace_back(map[u], map[v]);
    Graph g = make_graph(px, ps, std::vector<int>(6, 1), pe);
    for (NodeId u : {NodeId{2}, NodeId{5}}) {
      g.has_attributes[map[u]] = 0;
      g.sensitive[map[u]] = kUnavailable;
    }
    TopoEmbeddingTable t;
    t.vectors = pt;
    return std::pair{g, t};
  };
  std::vector<NodeId> id(6);
  std::iota(id.begin(), id.end(), NodeId{0});
  const auto [g0, t0] = build(id);
  const auto [g1, t1] = build(perm);
  FairACConfig c = tiny_config();
  c.num_heads = 2;
  c.embed_dim = 5;
  FairACParams p = FairACParams::init(3, 4, c);
  const EmbeddingSet a = infer_embeddings(g0, p, t0);
  const EmbeddingSet b = infer_embeddings(g1, p, t1);
  for (NodeId u = 0; u < 6; ++u)
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(a.h(u, k), b.h(perm[u], k), 1e-12);
}

TEST(Inference, PoisonedMissingRowsAreIgnored) { EXPECT_TRUE(checks::poisoning_is_inert(31)); }

TEST(Checkpoint, RoundTrip) {
  const fs::path path = fs::temp_directory_path() / "fairac_ckpt_test" / "model.ckpt";
  const Graph g = apply_attribute_missing(checks::toy_graph(9), 0.3, 9);
  const auto topo = random_topo(g.num_nodes(), 4, 9);
  FairACConfig c = small_train_config(9);
  c.lt_mode = TopoLossMode::negated_bce;
  c.beta = 0.4;
  FairACModel m = train_fairac(g, topo, c);
  save_checkpoint(path, m.params, c);
  Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(values(ck.params.all_parameters()), values(m.params.all_parameters()));
  EXPECT_EQ(ck.config.beta, 0.4);
  EXPECT_EQ(ck.config.lt_mode, TopoLossMode::negated_bce);
  EXPECT_EQ(ck.config.num_heads, c.num_heads);
  EXPECT_EQ(infer_embeddings(g, ck.params, topo).h, infer_embeddings(g, m.params, topo).h);

  std::ofstream(path) << "FAIRAC-CKPT 1\nbeta=1\n";
  EXPECT_THROW(load_checkpoint(path), DataError);
  std::ofstream(path) << "something else\n";
  EXPECT_THROW(load_checkpoint(path), DataError);
  fs::remove_all(path.parent_path());
}
