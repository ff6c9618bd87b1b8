#pragma once

// Topological node embeddings: uniform truncated random walks fed to a
// skip-gram model trained with negative sampling.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairac/error.hpp"
#include "fairac/graph.hpp"
#include "fairac/io.hpp"
#include "fairac/log.hpp"
#include "fairac/matrix.hpp"
#include "fairac/random.hpp"

namespace fairac {

struct WalkConfig {
  std::size_t walk_length = 100;
  std::size_t walks_per_node = 10;
  std::size_t window = 5;
  std::size_t dim = 64;
  std::size_t epochs = 10;
  std::size_t negatives = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 0;

  void validate() const {
    if (walk_length < 1) throw ConfigError("walk_length must be >= 1");
    if (window < 1) throw ConfigError("window must be >= 1");
    if (dim < 1) throw ConfigError("embedding dim must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("skip-gram learning rate must be positive");
  }

  std::uint64_t hash() const {
    std::uint64_t h = 0x7f4a7c15ULL;
    for (std::uint64_t v : {std::uint64_t{walk_length}, std::uint64_t{walks_per_node},
                            std::uint64_t{window}, std::uint64_t{dim}, std::uint64_t{epochs},
                            std::uint64_t{negatives}, std::bit_cast<std::uint64_t>(learning_rate),
                            seed}) {
      h = mix_seed(h ^ v);
    }
    return h;
  }
};

using Walk = std::vector<NodeId>;

struct TopoEmbeddingTable {
  Matrix vectors;                   // N x dim, the matrix T
  std::vector<double> epoch_loss;   // mean negative-sampling loss per epoch
  bool from_cache = false;

  std::size_t num_nodes() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
  std::span<const double> operator[](NodeId u) const { return vectors.row(u); }
};

// walks_per_node rounds; in each round one walk starts from every node in id
// order. Each walk has its own derived RNG stream, so generation order does
// not affect the result.
inline std::vector<Walk> generate_walks(const Graph& g, const WalkConfig& cfg) {
  cfg.validate();
  std::vector<Walk> walks;
  walks.reserve(g.num_nodes() * cfg.walks_per_node);
  for (std::size_t round = 0; round < cfg.walks_per_node; ++round) {
    for (NodeId start = 0; start < g.num_nodes(); ++start) {
      Rng rng(derive_seed(cfg.seed, start, round));
      Walk w;
      w.reserve(cfg.walk_length);
      w.push_back(start);
      while (w.size() < cfg.walk_length) {
        const auto& nb = g.neighbors[w.back()];
        if (nb.empty()) break;
        w.push_back(nb[uniform_index(rng, nb.size())]);
      }
      walks.push_back(std::move(w));
    }
  }
  return walks;
}

// Loss and gradients of one skip-gram pair with negatives:
//   L = -log sig(c.o) - sum_k log sig(-c.n_k)
// Gradients are written into the caller's buffers (sized like the inputs).
inline double sgns_pair_gradient(std::span<const double> center,
                                 std::span<const double> context,
                                 std::span<const std::span<const double>> negatives,
                                 std::span<double> grad_center,
                                 std::span<double> grad_context,
                                 std::span<double> grad_negatives) {
  const std::size_t d = center.size();
  const auto sig = [](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  };
  const auto dot = [d](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
  };
  // log sig(x) computed stably
  const auto log_sig = [](double x) {
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  };
  std::fill(grad_center.begin(), grad_center.end(), 0.0);
  const double sp = dot(center, context);
  double loss = -log_sig(sp);
  const double gp = sig(sp) - 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    grad_center[i] += gp * context[i];
    grad_context[i] = gp * center[i];
  }
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    const double sn = dot(center, negatives[k]);
    loss -= log_sig(-sn);
    const double gn = sig(sn);
    for (std::size_t i = 0; i < d; ++i) {
      grad_center[i] += gn * negatives[k][i];
      grad_negatives[k * d + i] = gn * center[i];
    }
  }
  return loss;
}

inline Matrix init_skipgram_vectors(std::size_t num_nodes, const WalkConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 0x696e6974 /* "init" */));
  Matrix m(num_nodes, cfg.dim);
  for (auto& v : m.data()) v = (uniform01(rng) - 0.5) / static_cast<double>(cfg.dim);
  return m;
}

// SGD over all walks. The context radius for each center is drawn uniformly
// from [1, window] as in word2vec; the learning rate decays linearly to
// 1e-4 of its start value.
inline TopoEmbeddingTable train_skipgram(const std::vector<Walk>& walks,
                                         std::size_t num_nodes, const WalkConfig& cfg) {
  cfg.validate();
  if (walks.empty()) throw ConfigError("skip-gram needs at least one walk");
  std::vector<double> counts(num_nodes, 0.0);
  std::size_t total_tokens = 0;
  for (const auto& w : walks) {
    for (NodeId u : w) {
      if (u >= num_nodes) {
        throw DataError("walk references node " + std::to_string(u) + " >= " +
                        std::to_string(num_nodes));
      }
      counts[u] += 1.0;
    }
    total_tokens += w.size();
  }

  TopoEmbeddingTable table;
  table.vectors = init_skipgram_vectors(num_nodes, cfg);
  if (cfg.epochs == 0) return table;

  std::vector<double> cdf(num_nodes);
  double acc = 0.0;
  for (std::size_t i = 0; i < num_nodes; ++i) cdf[i] = (acc += std::pow(counts[i], 0.75));
  for (auto& c : cdf) c /= acc;

  Matrix& in = table.vectors;
  Matrix out(num_nodes, cfg.dim);
  Rng rng(derive_seed(cfg.seed, 0x73676e73 /* "sgns" */));
  const std::size_t d = cfg.dim;
  std::vector<double> g_center(d), g_context(d), g_neg(cfg.negatives * d);
  std::vector<NodeId> neg_ids;
  std::vector<std::span<const double>> neg_rows;
  const double total = static_cast<double>(cfg.epochs * total_tokens);
  std::size_t processed = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t pairs = 0;
    for (const auto& w : walks) {
      for (std::size_t pos = 0; pos < w.size(); ++pos, ++processed) {
        const double lr = cfg.learning_rate *
                          std::max(1e-4, 1.0 - static_cast<double>(processed) / total);
        const std::size_t radius = 1 + uniform_index(rng, cfg.window);
        const std::size_t lo = pos >= radius ? pos - radius : 0;
        const std::size_t hi = std::min(w.size() - 1, pos + radius);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == pos) continue;
          const NodeId center = w[pos];
          const NodeId context = w[j];
          neg_ids.clear();
          neg_rows.clear();
          for (std::size_t k = 0; k < cfg.negatives; ++k) {
            const double r = uniform01(rng);
            auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
            NodeId nid = static_cast<NodeId>(std::min<std::ptrdiff_t>(
                it - cdf.begin(), static_cast<std::ptrdiff_t>(num_nodes) - 1));
            if (nid == context) continue;
            neg_ids.push_back(nid);
            neg_rows.push_back(out.row(nid));
          }
          epoch_loss += sgns_pair_gradient(in.row(center), out.row(context), neg_rows,
                                           g_center, g_context,
                                           std::span<double>(g_neg).first(neg_ids.size() * d));
          ++pairs;
          auto oc = out.row(context);
          for (std::size_t i = 0; i < d; ++i) oc[i] -= lr * g_context[i];
          for (std::size_t k = 0; k < neg_ids.size(); ++k) {
            auto on = out.row(neg_ids[k]);
            for (std::size_t i = 0; i < d; ++i) on[i] -= lr * g_neg[k * d + i];
          }
          auto ic = in.row(center);
          for (std::size_t i = 0; i < d; ++i) ic[i] -= lr * g_center[i];
        }
      }
    }
    table.epoch_loss.push_back(pairs ? epoch_loss / static_cast<double>(pairs) : 0.0);
  }
  return table;
}

namespace detail {

inline std::optional<TopoEmbeddingTable> read_topo_cache(const std::filesystem::path& path,
                                                         std::size_t n, const WalkConfig& cfg,
                                                         std::uint64_t ghash) {
  std::ifstream is(path);
  if (!is) return std::nullopt;
  try {
    std::string magic, version, gh, ch;
    std::size_t rows = 0, cols = 0;
    if (!(is >> magic >> version >> rows >> cols >> gh >> ch)) return std::nullopt;
    if (magic != "FAIRAC-TOPO" || version != "1" || rows != n || cols != cfg.dim ||
        gh != io::hex64(ghash) || ch != io::hex64(cfg.hash())) {
      return std::nullopt;
    }
    TopoEmbeddingTable t;
    t.vectors = io::read_matrix_body(is, rows, cols);
    std::size_t epochs = 0;
    if (!(is >> epochs)) return std::nullopt;
    for (std::size_t e = 0; e < epochs; ++e) {
      std::string tok;
      if (!(is >> tok)) return std::nullopt;
      t.epoch_loss.push_back(io::parse_double(tok));
    }
    std::string trailer;
    if (!(is >> trailer) || trailer != "END") return std::nullopt;
    t.from_cache = true;
    return t;
  } catch (const DataError&) {
    return std::nullopt;
  }
}

}  // namespace detail

inline std::filesystem::path topo_cache_path(const std::filesystem::path& dir, const Graph& g,
                                             const WalkConfig& cfg) {
  return dir / ("topo_" + io::hex64(graph_hash(g)) + "_" + io::hex64(cfg.hash()) + ".txt");
}

// Cache layout (plain text):
//   FAIRAC-TOPO 1 <N> <dim> <graph hash hex> <config hash hex>
//   N rows of dim values
//   <#epochs> <epoch losses...>
//   END
inline void write_topo_cache(const std::filesystem::path& path, const TopoEmbeddingTable& t,
                             std::uint64_t ghash, const WalkConfig& cfg) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw Error("cannot write embedding cache " + tmp);
    os << "FAIRAC-TOPO 1 " << t.num_nodes() << ' ' << t.dim() << ' ' << io::hex64(ghash) << ' '
       << io::hex64(cfg.hash()) << '\n';
    io::write_matrix_body(os, t.vectors);
    os << t.epoch_loss.size();
    for (double l : t.epoch_loss) os << ' ' << io::format_double(l);
    os << "\nEND\n";
  }
  std::filesystem::rename(tmp, path);
}

// Walks + skip-gram for every node. Isolated nodes keep their random
// initialization rescaled to unit norm. With a cache directory the table is
// reused when graph and config hashes match; unreadable caches are rebuilt.
inline TopoEmbeddingTable embed_all(const Graph& g, const WalkConfig& cfg,
                                    const std::optional<std::filesystem::path>& cache_dir = {}) {
  cfg.validate();
  if (g.num_nodes() == 0) throw DataError("cannot embed an empty graph");
  const std::uint64_t ghash = graph_hash(g);
  std::optional<std::filesystem::path> path;
  if (cache_dir) {
    path = topo_cache_path(*cache_dir, g, cfg);
    if (auto cached = detail::read_topo_cache(*path, g.num_nodes(), cfg, ghash)) return *cached;
    if (std::filesystem::exists(*path)) log::warn("embedding cache ", path->string(), " unusable, recomputing");
  }
  TopoEmbeddingTable t = train_skipgram(generate_walks(g, cfg), g.num_nodes(), cfg);
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    if (g.degree(u) != 0) continue;
    auto row = t.vectors.row(u);
    double q = 0.0;
    for (double v : row) q += v * v;
    if (q > 0.0) {
      const double inv = 1.0 / std::sqrt(q);
      for (auto& v : row) v *= inv;
    }
  }
  if (path) write_topo_cache(*path, t, ghash, cfg);
  return t;
}

}  // namespace fairac
