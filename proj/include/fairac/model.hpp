#pragma once

// Fair attribute completion.
//
// An autoencoder maps node attributes to embeddings H while a sensitive
// classifier C_s is trained adversarially against it. Nodes without
// attributes get embeddings from their attributed neighbors through
// multi-head bilinear attention over topological embeddings T; the
// attention matrices are additionally trained so that completed embeddings
// push C_s towards an uninformative 0.5 output.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairac/adam.hpp"
#include "fairac/autodiff.hpp"
#include "fairac/deepwalk.hpp"
#include "fairac/error.hpp"
#include "fairac/graph.hpp"
#include "fairac/io.hpp"
#include "fairac/log.hpp"
#include "fairac/matrix.hpp"
#include "fairac/random.hpp"

namespace fairac {

enum class TopoLossMode {
  uniform_target,  // cross-entropy of C_s(H^) against 0.5
  negated_bce,     // -BCE(C_s(H^), s)
};

inline std::string to_string(TopoLossMode m) {
  return m == TopoLossMode::uniform_target ? "uniform_target" : "negated_bce";
}
inline TopoLossMode parse_topo_loss_mode(const std::string& s) {
  if (s == "uniform_target") return TopoLossMode::uniform_target;
  if (s == "negated_bce") return TopoLossMode::negated_bce;
  throw ConfigError("unknown topological loss mode '" + s + "'");
}

struct FairACConfig {
  double beta = 1.0;
  std::size_t num_heads = 2;
  std::size_t embed_dim = 128;
  std::size_t epochs = 1000;
  std::size_t sensitive_hidden = 64;
  double drop_rate = 0.3;  // |V_drop| / |V+|, matches the graph's missing rate
  std::uint64_t seed = 0;
  TopoLossMode lt_mode = TopoLossMode::uniform_target;
  AdamOptions adam{};

  void validate() const {
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (num_heads < 1) throw ConfigError("need at least one attention head");
    if (embed_dim < 1 || sensitive_hidden < 1) throw ConfigError("layer sizes must be >= 1");
    if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw ConfigError("drop_rate must lie in [0, 1)");
  }
};

inline Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Matrix w(in, out), b(1, out);
  for (auto& v : w.data()) v = uniform(rng, -bound, bound);
  for (auto& v : b.data()) v = uniform(rng, -bound, bound);
  return Linear(name, std::move(w), std::move(b));
}

struct FairACParams {
  Linear encoder;     // D -> embed_dim
  Linear decoder;     // embed_dim -> D
  Linear cs_hidden;   // embed_dim -> sensitive_hidden, leaky relu
  Linear cs_out;      // sensitive_hidden -> 1, sigmoid
  std::vector<Parameter> attention;  // K matrices, topo_dim x topo_dim

  static FairACParams init(std::size_t attr_dim, std::size_t topo_dim, const FairACConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 0x70617261 /* "para" */));
    FairACParams p;
    p.encoder = make_linear("encoder", attr_dim, cfg.embed_dim, rng);
    p.decoder = make_linear("decoder", cfg.embed_dim, attr_dim, rng);
    p.cs_hidden = make_linear("cs_hidden", cfg.embed_dim, cfg.sensitive_hidden, rng);
    p.cs_out = make_linear("cs_out", cfg.sensitive_hidden, 1, rng);
    const double bound = std::sqrt(6.0 / static_cast<double>(2 * topo_dim));
    for (std::size_t k = 0; k < cfg.num_heads; ++k) {
      Matrix w(topo_dim, topo_dim);
      for (auto& v : w.data()) v = uniform(rng, -bound, bound);
      p.attention.emplace_back("attention." + std::to_string(k), std::move(w));
    }
    return p;
  }

  std::size_t attr_dim() const { return encoder.in_dim(); }
  std::size_t embed_dim() const { return encoder.out_dim(); }
  std::size_t topo_dim() const { return attention.empty() ? 0 : attention[0].value.rows(); }
  std::size_t num_heads() const { return attention.size(); }

  std::vector<Parameter*> autoencoder_parameters() {
    return {&encoder.weight, &encoder.bias, &decoder.weight, &decoder.bias};
  }
  std::vector<Parameter*> classifier_parameters() {
    return {&cs_hidden.weight, &cs_hidden.bias, &cs_out.weight, &cs_out.bias};
  }
  std::vector<Parameter*> attention_parameters() {
    std::vector<Parameter*> out;
    for (auto& w : attention) out.push_back(&w);
    return out;
  }
  std::vector<Parameter*> all_parameters() {
    auto out = autoencoder_parameters();
    for (auto* p : classifier_parameters()) out.push_back(p);
    for (auto* p : attention_parameters()) out.push_back(p);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Autoencoder and sensitive classifier

inline Var encode(Tape& t, FairACParams& p, Var x, bool trainable) {
  return p.encoder.forward(t, x, trainable);
}
inline Var decode(Tape& t, FairACParams& p, Var h, bool trainable) {
  return p.decoder.forward(t, h, trainable);
}
inline Matrix encode(const FairACParams& p, const Matrix& x) { return p.encoder.apply(x); }
inline Matrix decode(const FairACParams& p, const Matrix& h) { return p.decoder.apply(h); }

// C_s(H): probability that each row belongs to sensitive group 1.
inline Var classify_sensitive(Tape& t, FairACParams& p, Var h, bool trainable) {
  return ops::sigmoid(
      p.cs_out.forward(t, ops::leaky_relu(p.cs_hidden.forward(t, h, trainable)), trainable));
}

// Mean over nodes of ||decode(encode(x)) - x||_2.
inline Var loss_ae(Tape& t, FairACParams& p, const Matrix& x, bool trainable = true) {
  if (x.rows() == 0) throw ConfigError("autoencoder loss on an empty batch");
  const Var xv = t.constant(x);
  const Var recon = decode(t, p, encode(t, p, xv, trainable), trainable);
  return ops::row_l2_mean(ops::sub(recon, xv));
}

inline Matrix sensitive_targets(std::span<const int> s) {
  Matrix m(s.size(), 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != 0 && s[i] != 1) throw DataError("sensitive target must be 0 or 1");
    m[i] = s[i];
  }
  return m;
}

// Mean binary cross-entropy of C_s(h) against known sensitive values.
inline Var loss_cs(Tape& t, FairACParams& p, Var h, std::span<const int> s, bool trainable) {
  if (s.empty()) throw ConfigError("sensitive-classifier loss on an empty batch");
  return ops::bce_mean(classify_sensitive(t, p, h, trainable), sensitive_targets(s));
}

struct FeatureFairnessLoss {
  Var total;  // L_ae - beta * L_Cs
  Var ae;
  Var cs;
};

// Autoencoder parameters are tracked, C_s is frozen.
inline FeatureFairnessLoss loss_feature_fairness(Tape& t, FairACParams& p, const Matrix& x,
                                                 std::span<const int> s, double beta) {
  if (x.rows() != s.size()) throw ShapeError("feature-fairness batch and labels differ");
  if (x.rows() == 0) throw ConfigError("feature-fairness loss on an empty batch");
  const Var xv = t.constant(x);
  const Var h = encode(t, p, xv, true);
  const Var ae = ops::row_l2_mean(ops::sub(decode(t, p, h, true), xv));
  const Var cs = loss_cs(t, p, h, s, false);
  return {ops::sub(ae, ops::scale(cs, beta)), ae, cs};
}

// ---------------------------------------------------------------------------
// Attention-based completion

// tanh(T_u^T W T_v)
inline double attention_score(const Matrix& w, std::span<const double> tu,
                              std::span<const double> tv) {
  if (w.rows() != tu.size() || w.cols() != tv.size()) {
    throw ShapeError("attention_score: W " + to_string(w.shape()) + " vs T of size " +
                     std::to_string(tu.size()) + "/" + std::to_string(tv.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) row += w(i, j) * tv[j];
    s += tu[i] * row;
  }
  return std::tanh(s);
}

// Softmax over one node's neighbor scores.
inline std::vector<double> attention_coefficients(std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("softmax over empty row");
  Tape t;
  const Var c = ops::softmax_rows(t.constant(Matrix::row_vector(scores)));
  const auto v = t.value(c).data();
  return {v.begin(), v.end()};
}

// Which neighbors each completed node aggregates over. Targets with no
// usable neighbor are listed separately and take the fallback row.
struct CompletionPlan {
  NodeList targets;        // nodes with >= 1 usable neighbor; output row order
  NodeList fallback;       // nodes with none
  std::vector<std::size_t> offsets{0};  // targets.size() + 1
  NodeList pair_neighbor;  // neighbor id per (target, neighbor) pair
  std::vector<std::size_t> pair_target;  // index into targets per pair

  std::size_t num_pairs() const { return pair_neighbor.size(); }
  // targets followed by fallback: the row order of complete_all().
  NodeList row_order() const {
    NodeList out = targets;
    out.insert(out.end(), fallback.begin(), fallback.end());
    return out;
  }
};

inline CompletionPlan plan_completion(const Graph& g, const NodeList& targets,
                                      const std::vector<char>& usable) {
  CompletionPlan plan;
  for (NodeId u : targets) {
    const std::size_t before = plan.pair_neighbor.size();
    for (NodeId v : g.neighbors.at(u)) {
      if (!usable.at(v)) continue;
      plan.pair_neighbor.push_back(v);
      plan.pair_target.push_back(plan.targets.size());
    }
    if (plan.pair_neighbor.size() == before) {
      plan.fallback.push_back(u);
    } else {
      plan.targets.push_back(u);
      plan.offsets.push_back(plan.pair_neighbor.size());
    }
  }
  return plan;
}

// Multi-head aggregation for plan.targets:
//   H^_u = 1/K sum_k sum_{v in N_u} softmax_v(tanh(T_u^T W_k T_v)) H_v
// `h` holds source embeddings (rows of usable neighbors must be valid).
// Per-head coefficient vectors are appended to `coefficients` if given.
inline Var complete_targets(Tape& t, FairACParams& p, const CompletionPlan& plan,
                            const Matrix& topo, const Matrix& h, bool train_attention,
                            std::vector<Var>* coefficients = nullptr) {
  if (plan.targets.empty()) throw ConfigError("completion plan has no targets with neighbors");
  if (topo.cols() != p.topo_dim()) {
    throw ShapeError("topological embeddings have dim " + std::to_string(topo.cols()) +
                     ", attention expects " + std::to_string(p.topo_dim()));
  }
  const Var tc = t.constant(gather_rows(topo, plan.targets));
  const Var tn = t.constant(gather_rows(topo, plan.pair_neighbor));
  const Var hn = t.constant(gather_rows(h, plan.pair_neighbor));
  std::optional<Var> acc;
  for (auto& w : p.attention) {
    const Var proj = ops::matmul(tc, t.bind(w, train_attention));
    const Var scores =
        ops::tanh(ops::rowwise_dot(ops::gather_rows(proj, plan.pair_target), tn));
    const Var coef = ops::segment_softmax(scores, plan.offsets);
    if (coefficients) coefficients->push_back(coef);
    const Var agg = ops::segment_weighted_sum(coef, hn, plan.offsets);
    acc = acc ? ops::add(*acc, agg) : agg;
  }
  return ops::scale(*acc, 1.0 / static_cast<double>(p.num_heads()));
}

inline Matrix mean_rows(const Matrix& h, const NodeList& ids) {
  if (ids.empty()) throw DataError("fallback embedding needs at least one source node");
  Matrix m(1, h.cols());
  for (NodeId i : ids)
    for (std::size_t c = 0; c < h.cols(); ++c) m[c] += h(i, c);
  for (auto& v : m.data()) v /= static_cast<double>(ids.size());
  return m;
}

// Completion for every target in plan.row_order(). Fallback rows are the
// constant `fallback_row`.
inline Var complete_all(Tape& t, FairACParams& p, const CompletionPlan& plan, const Matrix& topo,
                        const Matrix& h, const Matrix& fallback_row, bool train_attention) {
  std::optional<Var> fb;
  if (!plan.fallback.empty()) {
    Matrix rows(plan.fallback.size(), fallback_row.cols());
    for (std::size_t i = 0; i < rows.rows(); ++i)
      std::copy(fallback_row.data().begin(), fallback_row.data().end(), rows.row(i).begin());
    fb = t.constant(std::move(rows));
    log::debug(plan.fallback.size(), " completion targets have no usable neighbor");
  }
  if (plan.targets.empty()) return *fb;
  const Var main = complete_targets(t, p, plan, topo, h, train_attention);
  return fb ? ops::concat_rows(main, *fb) : main;
}

// Single-node completion from explicit neighbor rows.
inline Matrix complete_embedding(FairACParams& p, std::span<const double> topo_u,
                                 const Matrix& neighbor_topo, const Matrix& neighbor_h) {
  if (neighbor_topo.rows() == 0 || neighbor_topo.rows() != neighbor_h.rows()) {
    throw ShapeError("complete_embedding needs matching, non-empty neighbor rows");
  }
  const std::size_t m = neighbor_topo.rows();
  Matrix topo(m + 1, topo_u.size());
  std::copy(topo_u.begin(), topo_u.end(), topo.row(0).begin());
  Matrix h(m + 1, neighbor_h.cols());
  CompletionPlan plan;
  plan.targets = {0};
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(neighbor_topo.row(i).begin(), neighbor_topo.row(i).end(), topo.row(i + 1).begin());
    std::copy(neighbor_h.row(i).begin(), neighbor_h.row(i).end(), h.row(i + 1).begin());
    plan.pair_neighbor.push_back(i + 1);
    plan.pair_target.push_back(0);
  }
  plan.offsets = {0, m};
  Tape t;
  return t.value(complete_targets(t, p, plan, topo, h, false));
}

// Mean over targets of ||H^_i - H_i||_2.
inline Var loss_completion(Var completed, const Matrix& truth) {
  Tape& t = *completed.tape;
  return ops::row_l2_mean(ops::sub(completed, t.constant(truth)));
}

// C_s is frozen; the gradient reaches whatever produced `completed`.
inline Var loss_topo_fairness(Tape& t, FairACParams& p, Var completed, std::span<const int> s,
                              TopoLossMode mode) {
  const Var prob = classify_sensitive(t, p, completed, false);
  const Shape sh = t.shape(prob);
  if (mode == TopoLossMode::uniform_target) {
    return ops::bce_mean(prob, Matrix(sh.rows, 1, 0.5));
  }
  if (s.size() != sh.rows) throw ShapeError("topological-fairness labels do not match batch");
  return ops::scale(ops::bce_mean(prob, sensitive_targets(s)), -1.0);
}

inline double total_loss(double l_f, double l_c, double l_t, double beta) {
  return l_f + l_c + beta * l_t;
}

// ---------------------------------------------------------------------------
// Training

struct FairACEpoch {
  double ae = 0.0;
  double cs = 0.0;  // C_s loss on V_keep before its update
  double feature = 0.0;
  double completion = 0.0;
  double topo = 0.0;
  double total = 0.0;
};

struct FairACModel {
  FairACParams params;
  FairACConfig config;
  std::vector<FairACEpoch> trace;
};

namespace detail {
inline void require_finite(double v, const char* what, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string(what) + " became non-finite at epoch " + std::to_string(epoch));
  }
}
inline std::vector<int> sensitive_of(const Graph& g, const NodeList& ids) {
  std::vector<int> s;
  s.reserve(ids.size());
  for (NodeId i : ids) s.push_back(g.sensitive_of(i));
  return s;
}
inline Matrix attributes_of(const Graph& g, const NodeList& ids) {
  Matrix x(ids.size(), g.attribute_dim());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto src = g.attributes_of(ids[r]);
    std::copy(src.begin(), src.end(), x.row(r).begin());
  }
  return x;
}
}  // namespace detail

// One optimizer step per component per epoch:
//   (a) H = f_E(X) on V+
//   (b) C_s  <- min L_Cs on V_keep
//   (c) f_E, f_D <- min L_ae - beta L_Cs on V_keep (C_s frozen)
//   (d) resample V_keep / V_drop
//   (e) W <- min L_C on V_drop (H detached)
//   (f) W <- min beta L_T on V_drop (C_s frozen), skipped when beta == 0
// A single Adam state is shared by (e) and (f).
inline FairACModel train_fairac(const Graph& g, const TopoEmbeddingTable& topo,
                                const FairACConfig& cfg,
                                std::optional<FairACParams> initial = {}) {
  cfg.validate();
  if (topo.num_nodes() != g.num_nodes()) {
    throw ShapeError("topological embeddings cover " + std::to_string(topo.num_nodes()) +
                     " nodes, graph has " + std::to_string(g.num_nodes()));
  }
  const NodeList plus = g.v_plus();
  if (plus.empty()) throw DataError("FairAC needs at least one attributed node");

  FairACModel model;
  model.config = cfg;
  model.params = initial ? std::move(*initial) : FairACParams::init(g.attribute_dim(), topo.dim(), cfg);
  FairACParams& p = model.params;
  Adam opt_cs(p.classifier_parameters(), cfg.adam);
  Adam opt_ae(p.autoencoder_parameters(), cfg.adam);
  Adam opt_w(p.attention_parameters(), cfg.adam);

  const Matrix x_plus = detail::attributes_of(g, plus);
  std::vector<std::size_t> row_of(g.num_nodes(), 0);
  for (std::size_t r = 0; r < plus.size(); ++r) row_of[plus[r]] = r;

  NodeSplit split = sample_keep_drop(g, cfg.drop_rate, derive_seed(cfg.seed, 0));
  Matrix h_all(g.num_nodes(), p.embed_dim());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    FairACEpoch rec;

    // (a)
    const Matrix h_plus = encode(p, x_plus);
    for (std::size_t r = 0; r < plus.size(); ++r)
      std::copy(h_plus.row(r).begin(), h_plus.row(r).end(), h_all.row(plus[r]).begin());

    const std::vector<int> s_keep = detail::sensitive_of(g, split.v_keep);
    const Matrix x_keep = detail::attributes_of(g, split.v_keep);

    // (b)
    if (!split.v_keep.empty()) {
      Tape t;
      const Var l = loss_cs(t, p, t.constant(gather_rows(h_all, split.v_keep)), s_keep, true);
      rec.cs = t.scalar(l);
      detail::require_finite(rec.cs, "sensitive-classifier loss", epoch);
      t.backward(l);
      opt_cs.step();
    }

    // (c)
    if (!split.v_keep.empty()) {
      Tape t;
      const auto lf = loss_feature_fairness(t, p, x_keep, s_keep, cfg.beta);
      rec.ae = t.scalar(lf.ae);
      rec.feature = t.scalar(lf.total);
      detail::require_finite(rec.feature, "feature-fairness loss", epoch);
      t.backward(lf.total);
      opt_ae.step();
    }

    // (d)
    split = sample_keep_drop(g, cfg.drop_rate, derive_seed(cfg.seed, epoch + 1));
    if (split.v_drop.empty() || split.v_keep.empty()) {
      rec.total = total_loss(rec.feature, 0.0, 0.0, cfg.beta);
      model.trace.push_back(rec);
      continue;
    }
    std::vector<char> usable(g.num_nodes(), 0);
    for (NodeId v : split.v_keep) usable[v] = 1;
    const CompletionPlan plan = plan_completion(g, split.v_drop, usable);
    const NodeList order = plan.row_order();
    const Matrix truth = gather_rows(h_all, order);
    const Matrix fallback = mean_rows(h_all, split.v_keep);
    const std::vector<int> s_drop = detail::sensitive_of(g, order);

    // (e)
    {
      Tape t;
      const Var l = loss_completion(complete_all(t, p, plan, topo.vectors, h_all, fallback, true), truth);
      rec.completion = t.scalar(l);
      detail::require_finite(rec.completion, "completion loss", epoch);
      t.backward(l);
      opt_w.step();
    }

    // (f)
    {
      Tape t;
      const Var completed = complete_all(t, p, plan, topo.vectors, h_all, fallback, true);
      const Var l = loss_topo_fairness(t, p, completed, s_drop, cfg.lt_mode);
      rec.topo = t.scalar(l);
      detail::require_finite(rec.topo, "topological-fairness loss", epoch);
      if (cfg.beta > 0.0) {
        t.backward(ops::scale(l, cfg.beta));
        opt_w.step();
      }
    }
    rec.total = total_loss(rec.feature, rec.completion, rec.topo, cfg.beta);
    model.trace.push_back(rec);
  }
  for (auto* prm : p.all_parameters()) prm->zero_grad();
  return model;
}

// ---------------------------------------------------------------------------
// Inference

enum class Provenance : std::uint8_t { encoded, completed };

struct EmbeddingSet {
  Matrix h;                           // N x embed_dim
  std::vector<Provenance> provenance;
  std::size_t fallback_count = 0;

  std::size_t count(Provenance p) const {
    std::size_t n = 0;
    for (auto q : provenance) n += q == p;
    return n;
  }
};

// Encoded rows for V+, attention-completed rows for V-.
inline EmbeddingSet infer_embeddings(const Graph& g, FairACParams& p,
                                     const TopoEmbeddingTable& topo) {
  const NodeList plus = g.v_plus();
  if (plus.empty()) throw DataError("inference needs at least one attributed node");
  EmbeddingSet out;
  out.h = Matrix(g.num_nodes(), p.embed_dim());
  out.provenance.assign(g.num_nodes(), Provenance::encoded);
  const Matrix h_plus = encode(p, detail::attributes_of(g, plus));
  for (std::size_t r = 0; r < plus.size(); ++r)
    std::copy(h_plus.row(r).begin(), h_plus.row(r).end(), out.h.row(plus[r]).begin());

  const NodeList minus = g.v_minus();
  if (minus.empty()) return out;
  std::vector<char> usable(g.has_attributes.begin(), g.has_attributes.end());
  const CompletionPlan plan = plan_completion(g, minus, usable);
  Tape t;
  const Matrix completed =
      t.value(complete_all(t, p, plan, topo.vectors, out.h, mean_rows(out.h, plus), false));
  const NodeList order = plan.row_order();
  for (std::size_t r = 0; r < order.size(); ++r) {
    std::copy(completed.row(r).begin(), completed.row(r).end(), out.h.row(order[r]).begin());
    out.provenance[order[r]] = Provenance::completed;
  }
  out.fallback_count = plan.fallback.size();
  if (out.fallback_count) {
    log::info(out.fallback_count, " attribute-less nodes had no attributed neighbor; used mean embedding");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

// Layout:
//   FAIRAC-CKPT 1
//   key=value lines (config)
//   param <name> <rows> <cols> followed by the values
//   END
inline void save_checkpoint(const std::filesystem::path& path, FairACParams& p,
                            const FairACConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write checkpoint " + path.string());
  os << "FAIRAC-CKPT 1\n";
  os << "beta=" << io::format_double(cfg.beta) << '\n'
     << "num_heads=" << cfg.num_heads << '\n'
     << "embed_dim=" << cfg.embed_dim << '\n'
     << "epochs=" << cfg.epochs << '\n'
     << "sensitive_hidden=" << cfg.sensitive_hidden << '\n'
     << "drop_rate=" << io::format_double(cfg.drop_rate) << '\n'
     << "seed=" << cfg.seed << '\n'
     << "lt_mode=" << to_string(cfg.lt_mode) << '\n'
     << "learning_rate=" << io::format_double(cfg.adam.learning_rate) << '\n'
     << "weight_decay=" << io::format_double(cfg.adam.weight_decay) << '\n';
  for (auto* prm : p.all_parameters()) {
    os << "param " << prm->name << ' ' << prm->value.rows() << ' ' << prm->value.cols() << '\n';
    io::write_matrix_body(os, prm->value);
  }
  os << "END\n";
}

struct Checkpoint {
  FairACParams params;
  FairACConfig config;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "FAIRAC-CKPT 1") {
    throw DataError("not a version-1 checkpoint: " + path.string());
  }
  Checkpoint ck;
  std::map<std::string, Matrix> mats;
  std::string tok;
  while (is >> tok) {
    if (tok == "END") break;
    if (tok == "param") {
      std::string name;
      std::size_t r = 0, c = 0;
      if (!(is >> name >> r >> c)) throw DataError("truncated parameter header");
      mats[name] = io::read_matrix_body(is, r, c);
      continue;
    }
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw DataError("unexpected checkpoint token '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    auto& cfg = ck.config;
    if (key == "beta") cfg.beta = io::parse_double(val);
    else if (key == "num_heads") cfg.num_heads = std::stoull(val);
    else if (key == "embed_dim") cfg.embed_dim = std::stoull(val);
    else if (key == "epochs") cfg.epochs = std::stoull(val);
    else if (key == "sensitive_hidden") cfg.sensitive_hidden = std::stoull(val);
    else if (key == "drop_rate") cfg.drop_rate = io::parse_double(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "lt_mode") cfg.lt_mode = parse_topo_loss_mode(val);
    else if (key == "learning_rate") cfg.adam.learning_rate = io::parse_double(val);
    else if (key == "weight_decay") cfg.adam.weight_decay = io::parse_double(val);
    else throw DataError("unknown checkpoint key '" + key + "'");
  }
  if (tok != "END") throw DataError("checkpoint is truncated");
  const auto take = [&](const std::string& name) {
    const auto it = mats.find(name);
    if (it == mats.end()) throw DataError("checkpoint lacks parameter " + name);
    return Parameter(name, it->second);
  };
  auto& p = ck.params;
  const auto linear = [&](const std::string& n) {
    Linear l;
    l.weight = take(n + ".weight");
    l.bias = take(n + ".bias");
    return l;
  };
  p.encoder = linear("encoder");
  p.decoder = linear("decoder");
  p.cs_hidden = linear("cs_hidden");
  p.cs_out = linear("cs_out");
  for (std::size_t k = 0; k < ck.config.num_heads; ++k) {
    p.attention.push_back(take("attention." + std::to_string(k)));
  }
  return ck;
}

// One line per node: <node name> followed by the embedding values.
inline void export_embeddings(const std::filesystem::path& path, const Graph& g,
                              const EmbeddingSet& e) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write embeddings " + path.string());
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    os << g.node_names[u];
    for (double v : e.h.row(u)) os << ' ' << io::format_double(v);
    os << '\n';
  }
}

}  // namespace fairac
