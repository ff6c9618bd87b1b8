#pragma once

// Two-layer GCN node classifier with accuracy-threshold model selection.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <vector>

#include "fairac/adam.hpp"
#include "fairac/autodiff.hpp"
#include "fairac/error.hpp"
#include "fairac/graph.hpp"
#include "fairac/io.hpp"
#include "fairac/matrix.hpp"
#include "fairac/metrics.hpp"
#include "fairac/random.hpp"

namespace fairac {

// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
inline SparseMatrix normalize_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (NodeId u = 0; u < n; ++u) inv_sqrt[u] = 1.0 / std::sqrt(static_cast<double>(g.degree(u) + 1));
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(n + g.adjacency_nnz());
  for (NodeId u = 0; u < n; ++u) {
    entries.push_back({u, u, inv_sqrt[u] * inv_sqrt[u]});
    for (NodeId v : g.neighbors[u]) entries.push_back({u, v, inv_sqrt[u] * inv_sqrt[v]});
  }
  return SparseMatrix(n, n, std::move(entries));
}

struct GCNConfig {
  std::size_t hidden = 64;
  double dropout = 0.5;
  std::size_t epochs = 1000;
  double accuracy_threshold = 0.65;
  std::uint64_t seed = 0;
  AdamOptions adam{};

  void validate() const {
    if (hidden < 1) throw ConfigError("GCN hidden size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }
};

struct GCNParams {
  Linear layer1;  // in -> hidden, relu
  Linear layer2;  // hidden -> 1, sigmoid

  static GCNParams init(std::size_t in_dim, std::size_t hidden, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x67636e70 /* "gcnp" */));
    const auto glorot = [&rng](const std::string& name, std::size_t in, std::size_t out) {
      const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
      Matrix w(in, out);
      for (auto& v : w.data()) v = uniform(rng, -bound, bound);
      return Linear(name, std::move(w), Matrix(1, out));
    };
    GCNParams p;
    p.layer1 = glorot("gcn1", in_dim, hidden);
    p.layer2 = glorot("gcn2", hidden, 1);
    return p;
  }

  std::vector<Parameter*> parameters() {
    return {&layer1.weight, &layer1.bias, &layer2.weight, &layer2.bias};
  }
};

// sigmoid(A relu(A X W1 + b1) W2 + b2), with an optional dropout mask on the
// hidden layer.
inline Var gcn_forward(Tape& t, GCNParams& p, const SparseMatrix& adj, Var x, bool trainable,
                       const Matrix* dropout_mask = nullptr) {
  Var h = ops::relu(ops::add_bias(ops::spmm(adj, ops::matmul(x, t.bind(p.layer1.weight, trainable))),
                                  t.bind(p.layer1.bias, trainable)));
  if (dropout_mask) h = ops::mask(h, *dropout_mask);
  const Var z = ops::add_bias(ops::spmm(adj, ops::matmul(h, t.bind(p.layer2.weight, trainable))),
                              t.bind(p.layer2.bias, trainable));
  return ops::sigmoid(z);
}

// Per-node probability of the positive class (N x 1).
inline Matrix predict(GCNParams& p, const Matrix& x, const SparseMatrix& adj) {
  Tape t;
  return t.value(gcn_forward(t, p, adj, t.constant(x), false));
}

inline std::vector<int> hard_labels(const Matrix& probs) {
  std::vector<int> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= 0.5 ? 1 : 0;
  return out;
}

struct GCNEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  // delta_sp + delta_eo on validation, +inf when undefined (empty group).
  double val_fairness = std::numeric_limits<double>::infinity();
  std::optional<EvaluationReport> test;
};

struct CheckpointChoice {
  std::size_t epoch = 0;
  bool below_threshold = false;  // no epoch met the threshold; max-accuracy fallback
};

// Among epochs whose validation accuracy reaches the threshold, the one
// with the smallest validation delta_sp + delta_eo (earliest on ties);
// otherwise the most accurate epoch, flagged.
inline CheckpointChoice select_checkpoint(const std::vector<GCNEpoch>& trace, double threshold) {
  if (trace.empty()) throw ConfigError("cannot select from an empty trace");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].val_accuracy < threshold) continue;
    if (!best || trace[i].val_fairness < trace[*best].val_fairness) best = i;
  }
  if (best) return {*best, false};
  std::size_t top = 0;
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i].val_accuracy > trace[top].val_accuracy) top = i;
  return {top, true};
}

struct ClassifierResult {
  GCNParams params;  // weights at the selected epoch
  std::vector<GCNEpoch> trace;
  CheckpointChoice choice;
  Matrix probabilities;  // N x 1 at the selected epoch
};

namespace detail {
template <typename F>
std::vector<int> pick(const NodeList& ids, F&& f) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (NodeId i : ids) out.push_back(f(i));
  return out;
}
inline std::optional<EvaluationReport> try_evaluate(const Matrix& probs, const Graph& g,
                                                    const NodeList& ids) {
  if (ids.empty()) return std::nullopt;
  std::vector<double> scores;
  for (NodeId i : ids) scores.push_back(probs[i]);
  const auto yhat = pick(ids, [&](NodeId i) { return probs[i] >= 0.5 ? 1 : 0; });
  const auto y = pick(ids, [&](NodeId i) { return g.labels[i]; });
  const auto s = pick(ids, [&](NodeId i) { return g.sensitive_truth[i]; });
  try {
    return evaluate(yhat, scores, y, s);
  } catch (const NumericError&) {
    return std::nullopt;
  }
}
}  // namespace detail

// Full-batch training with BCE on the train ids. Validation accuracy and
// fairness are logged every epoch, as are test metrics; the reported model
// is chosen afterwards by select_checkpoint().
inline ClassifierResult train_classifier(const Matrix& features, const SparseMatrix& adj,
                                         const Graph& g, const NodeSplit& split,
                                         const GCNConfig& cfg) {
  cfg.validate();
  if (features.rows() != g.num_nodes() || adj.rows() != g.num_nodes()) {
    throw ShapeError("features / adjacency do not match the graph");
  }
  if (split.train_ids.empty()) throw ConfigError("no training nodes");
  for (NodeId i : split.train_ids)
    if (g.labels[i] == kUnavailable) throw DataError("training node without label");

  ClassifierResult result;
  GCNParams p = GCNParams::init(features.cols(), cfg.hidden, cfg.seed);
  Adam opt(p.parameters(), cfg.adam);
  Rng rng(derive_seed(cfg.seed, 0x64726f70 /* "drop" */));
  Matrix targets(split.train_ids.size(), 1);
  for (std::size_t i = 0; i < split.train_ids.size(); ++i) targets[i] = g.labels[split.train_ids[i]];
  const auto y_val = detail::pick(split.val_ids, [&](NodeId i) { return g.labels[i]; });

  std::optional<GCNParams> best_fair, best_acc;
  std::optional<Matrix> probs_fair, probs_acc;
  std::optional<std::size_t> fair_idx;
  std::size_t acc_idx = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    GCNEpoch rec;
    rec.epoch = epoch;
    {
      Matrix mask(g.num_nodes(), cfg.hidden, 1.0);
      if (cfg.dropout > 0.0) {
        const double keep = 1.0 - cfg.dropout;
        for (auto& v : mask.data()) v = bernoulli(rng, keep) ? 1.0 / keep : 0.0;
      }
      Tape t;
      const Var probs = gcn_forward(t, p, adj, t.constant(features), true, &mask);
      const Var loss = ops::bce_mean(ops::gather_rows(probs, split.train_ids), targets);
      rec.train_loss = t.scalar(loss);
      if (!std::isfinite(rec.train_loss)) {
        throw NumericError("GCN loss became non-finite at epoch " + std::to_string(epoch));
      }
      t.backward(loss);
      opt.step();
    }
    const Matrix probs = predict(p, features, adj);
    if (!split.val_ids.empty()) {
      const auto yhat = detail::pick(split.val_ids, [&](NodeId i) { return probs[i] >= 0.5 ? 1 : 0; });
      rec.val_accuracy = accuracy(yhat, y_val);
      if (auto r = detail::try_evaluate(probs, g, split.val_ids)) rec.val_fairness = r->combined;
    }
    rec.test = detail::try_evaluate(probs, g, split.test_ids);

    if (rec.val_accuracy >= cfg.accuracy_threshold &&
        (!fair_idx || rec.val_fairness < result.trace[*fair_idx].val_fairness)) {
      fair_idx = epoch;
      best_fair = p;
      probs_fair = probs;
    }
    if (!best_acc || rec.val_accuracy > result.trace[acc_idx].val_accuracy) {
      acc_idx = epoch;
      best_acc = p;
      probs_acc = probs;
    }
    result.trace.push_back(std::move(rec));
  }
  if (result.trace.empty()) {
    result.params = std::move(p);
    result.probabilities = predict(result.params, features, adj);
    return result;
  }
  result.choice = select_checkpoint(result.trace, cfg.accuracy_threshold);
  if (result.choice.below_threshold) {
    result.params = std::move(*best_acc);
    result.probabilities = std::move(*probs_acc);
  } else {
    result.params = std::move(*best_fair);
    result.probabilities = std::move(*probs_fair);
  }
  return result;
}

// One line per node: id probability hard_label ground_truth sensitive
// (ground truth is -1 for unlabeled nodes).
inline void export_predictions(const std::filesystem::path& path, const Graph& g,
                               const Matrix& probs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write predictions " + path.string());
  os << "# node probability prediction label sensitive\n";
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    os << g.node_names[u] << ' ' << io::format_double(probs[u]) << ' ' << (probs[u] >= 0.5 ? 1 : 0)
       << ' ' << g.labels[u] << ' ' << g.sensitive_truth[u] << '\n';
  }
}

}  // namespace fairac
