#pragma once

// Attributed graphs with partially missing node attributes: representation,
// CSV ingestion, missingness simulation, node splits and the neighbor-mean
// completion baseline.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fairac/error.hpp"
#include "fairac/log.hpp"
#include "fairac/matrix.hpp"
#include "fairac/random.hpp"

namespace fairac {

using NodeId = std::size_t;
using NodeList = std::vector<NodeId>;

inline constexpr int kUnavailable = -1;

// Undirected simple graph with node attributes X, a binary sensitive
// attribute S and binary task labels Y.
//
// Attribute rows and sensitive values of nodes in V- (has_attributes[i] ==
// false) must never reach a training loss. They are overwritten with NaN /
// kUnavailable when the node is dropped; `sensitive_truth` keeps the ground
// truth for evaluation only.
struct Graph {
  std::vector<std::string> node_names;
  std::vector<NodeList> neighbors;                // sorted, no self loops
  std::vector<std::pair<NodeId, NodeId>> edges;   // u < v, sorted
  Matrix attributes;                              // N x D
  std::vector<std::string> attribute_names;
  std::vector<int> sensitive;                     // 0/1, kUnavailable on V-
  std::vector<int> sensitive_truth;               // 0/1 for every node
  std::vector<int> labels;                        // 0/1, kUnavailable if unlabeled
  std::vector<char> has_attributes;

  std::size_t num_nodes() const noexcept { return neighbors.size(); }
  std::size_t attribute_dim() const noexcept { return attributes.cols(); }
  std::size_t num_edges() const noexcept { return edges.size(); }
  // Nonzeros of the symmetric adjacency, i.e. 2|E|.
  std::size_t adjacency_nnz() const noexcept { return 2 * edges.size(); }
  std::size_t degree(NodeId u) const { return neighbors.at(u).size(); }

  bool is_attributed(NodeId u) const { return has_attributes.at(u) != 0; }

  NodeList v_plus() const {
    NodeList out;
    for (NodeId i = 0; i < num_nodes(); ++i)
      if (has_attributes[i]) out.push_back(i);
    return out;
  }
  NodeList v_minus() const {
    NodeList out;
    for (NodeId i = 0; i < num_nodes(); ++i)
      if (!has_attributes[i]) out.push_back(i);
    return out;
  }
  NodeList labeled_nodes() const {
    NodeList out;
    for (NodeId i = 0; i < num_nodes(); ++i)
      if (labels[i] != kUnavailable) out.push_back(i);
    return out;
  }

  std::span<const double> attributes_of(NodeId u) const {
    if (!is_attributed(u)) {
      throw DataError("attributes of node " + std::to_string(u) + " are unavailable");
    }
    return attributes.row(u);
  }
  int sensitive_of(NodeId u) const {
    if (!is_attributed(u) || sensitive[u] == kUnavailable) {
      throw DataError("sensitive value of node " + std::to_string(u) + " is unavailable");
    }
    return sensitive[u];
  }

  bool has_edge(NodeId u, NodeId v) const {
    const auto& n = neighbors.at(u);
    return std::binary_search(n.begin(), n.end(), v);
  }
};

struct EdgeCleanup {
  std::size_t duplicates = 0;
  std::size_t self_loops = 0;
};

// Builds adjacency from an arbitrary edge list, dropping self loops and
// duplicate (including reversed) edges.
inline EdgeCleanup set_edges(Graph& g, std::size_t n,
                             std::vector<std::pair<NodeId, NodeId>> raw) {
  EdgeCleanup stats;
  std::vector<std::pair<NodeId, NodeId>> canon;
  canon.reserve(raw.size());
  for (auto [u, v] : raw) {
    if (u >= n || v >= n) throw DataError("edge endpoint out of range");
    if (u == v) {
      ++stats.self_loops;
      continue;
    }
    canon.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(canon.begin(), canon.end());
  const auto last = std::unique(canon.begin(), canon.end());
  stats.duplicates = static_cast<std::size_t>(canon.end() - last);
  canon.erase(last, canon.end());
  g.edges = std::move(canon);
  g.neighbors.assign(n, {});
  for (auto [u, v] : g.edges) {
    g.neighbors[u].push_back(v);
    g.neighbors[v].push_back(u);
  }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
  return stats;
}

// Assembles a fully attributed graph from in-memory parts.
inline Graph make_graph(Matrix attributes, std::vector<int> sensitive,
                        std::vector<int> labels,
                        std::vector<std::pair<NodeId, NodeId>> edges) {
  const std::size_t n = attributes.rows();
  if (sensitive.size() != n || labels.size() != n) {
    throw DataError("attribute, sensitive and label lengths differ");
  }
  for (int s : sensitive)
    if (s != 0 && s != 1) throw DataError("sensitive values must be 0 or 1");
  Graph g;
  g.node_names.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.node_names[i] = std::to_string(i);
  set_edges(g, n, std::move(edges));
  g.attributes = std::move(attributes);
  g.attribute_names.resize(g.attributes.cols());
  for (std::size_t c = 0; c < g.attribute_names.size(); ++c)
    g.attribute_names[c] = "x" + std::to_string(c);
  g.sensitive = sensitive;
  g.sensitive_truth = std::move(sensitive);
  g.labels = std::move(labels);
  g.has_attributes.assign(n, 1);
  return g;
}

// Standardizes each attribute column to zero mean and unit (population)
// variance over the attributed nodes. Constant columns become zero.
inline void standardize_attributes(Graph& g) {
  const NodeList plus = g.v_plus();
  if (plus.empty()) return;
  const double n = static_cast<double>(plus.size());
  for (std::size_t c = 0; c < g.attribute_dim(); ++c) {
    double mean = 0.0;
    for (NodeId i : plus) mean += g.attributes(i, c);
    mean /= n;
    double var = 0.0;
    for (NodeId i : plus) {
      const double d = g.attributes(i, c) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / n);
    const bool constant = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
    for (NodeId i : plus) {
      g.attributes(i, c) = constant ? 0.0 : (g.attributes(i, c) - mean) / sd;
    }
  }
}

// Describes a dataset on disk.
//
// Node file: comma-separated, header row, first column is the node id, all
// other columns numeric. The sensitive column must hold 0/1; the label
// column is binarized as negative -> unlabeled, 0 -> 0, positive -> 1.
// Every remaining column that is not listed in `drop_columns` becomes an
// attribute. Edge file: one edge per line, two node ids separated by a comma
// or whitespace.
struct DatasetSpec {
  std::filesystem::path node_file;
  std::filesystem::path edge_file;
  std::string sensitive_column;
  std::string label_column;
  std::vector<std::string> drop_columns;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\"";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_edge_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ',' || std::isspace(static_cast<unsigned char>(line[i])))) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ',' && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline double parse_number(std::string_view cell, std::size_t line_no, std::string_view column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc{} || ptr != last || !std::isfinite(v)) {
    throw DataError("non-numeric value '" + std::string(cell) + "' in column '" +
                    std::string(column) + "' at line " + std::to_string(line_no));
  }
  return v;
}

}  // namespace detail

inline Graph load_dataset(const DatasetSpec& spec) {
  std::ifstream nodes(spec.node_file);
  if (!nodes) throw DataError("cannot open node file " + spec.node_file.string());
  std::ifstream edges_in(spec.edge_file);
  if (!edges_in) throw DataError("cannot open edge file " + spec.edge_file.string());

  std::string line;
  if (!std::getline(nodes, line)) throw DataError("node file is empty");
  std::vector<std::string> header;
  for (auto h : detail::split_csv(line)) header.emplace_back(h);
  if (header.size() < 2) throw DataError("node file needs an id column and data columns");

  const auto find_col = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin() + 1, header.end(), name);
    if (it == header.end()) throw DataError("column '" + name + "' not found in node file");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t sens_col = find_col(spec.sensitive_column);
  const std::size_t label_col = find_col(spec.label_column);
  std::vector<char> skip(header.size(), 0);
  skip[0] = skip[sens_col] = skip[label_col] = 1;
  for (const auto& d : spec.drop_columns) skip[find_col(d)] = 1;
  std::vector<std::size_t> attr_cols;
  for (std::size_t c = 1; c < header.size(); ++c)
    if (!skip[c]) attr_cols.push_back(c);

  Graph g;
  for (auto c : attr_cols) g.attribute_names.push_back(header[c]);
  std::vector<double> values;
  std::unordered_map<std::string, NodeId> index;
  std::size_t line_no = 1;
  while (std::getline(nodes, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != header.size()) {
      throw DataError("node file line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    }
    const std::string id(cells[0]);
    if (id.empty()) throw DataError("empty node id at line " + std::to_string(line_no));
    if (!index.emplace(id, g.node_names.size()).second) {
      throw DataError("duplicate node id '" + id + "'");
    }
    g.node_names.push_back(id);
    const double s = detail::parse_number(cells[sens_col], line_no, header[sens_col]);
    if (s != 0.0 && s != 1.0) {
      throw DataError("sensitive value must be 0 or 1 at line " + std::to_string(line_no));
    }
    g.sensitive.push_back(static_cast<int>(s));
    const double y = detail::parse_number(cells[label_col], line_no, header[label_col]);
    g.labels.push_back(y < 0 ? kUnavailable : (y > 0 ? 1 : 0));
    for (auto c : attr_cols) values.push_back(detail::parse_number(cells[c], line_no, header[c]));
  }
  const std::size_t n = g.node_names.size();
  if (n == 0) throw DataError("node file has no rows");
  g.attributes = Matrix(n, attr_cols.size(), std::move(values));
  g.sensitive_truth = g.sensitive;
  g.has_attributes.assign(n, 1);

  std::vector<std::pair<NodeId, NodeId>> raw;
  line_no = 0;
  while (std::getline(edges_in, line)) {
    ++line_no;
    const auto parts = detail::split_edge_line(line);
    if (parts.empty()) continue;
    if (parts.size() != 2) {
      throw DataError("edge file line " + std::to_string(line_no) + " does not hold two ids");
    }
    NodeId ends[2];
    for (int k = 0; k < 2; ++k) {
      const auto it = index.find(std::string(parts[k]));
      if (it == index.end()) {
        throw DataError("edge file line " + std::to_string(line_no) + " references unknown node '" +
                        std::string(parts[k]) + "'");
      }
      ends[k] = it->second;
    }
    raw.emplace_back(ends[0], ends[1]);
  }
  const auto stats = set_edges(g, n, std::move(raw));
  if (stats.duplicates + stats.self_loops > 0) {
    log::info("removed ", stats.duplicates, " duplicate edges and ", stats.self_loops,
              " self loops");
  }
  standardize_attributes(g);
  return g;
}

// Marks round(alpha * N) uniformly chosen nodes as attribute-less. Their
// attribute rows become NaN and their sensitive values kUnavailable.
inline Graph apply_attribute_missing(const Graph& g, double alpha, std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ConfigError("attribute missing rate must lie in [0, 1), got " + std::to_string(alpha));
  }
  Graph out = g;
  NodeList order(g.num_nodes());
  std::iota(order.begin(), order.end(), NodeId{0});
  Rng rng(derive_seed(seed, 0x6d697373 /* "miss" */));
  shuffle(order, rng);
  const std::size_t k = round_half_up(alpha * static_cast<double>(g.num_nodes()));
  for (std::size_t i = 0; i < k; ++i) {
    const NodeId u = order[i];
    out.has_attributes[u] = 0;
    out.sensitive[u] = kUnavailable;
    for (auto& v : out.attributes.row(u)) v = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

struct NodeSplit {
  NodeList v_keep;
  NodeList v_drop;
  NodeList train_ids;
  NodeList val_ids;
  NodeList test_ids;
  double alpha = 0.0;
};

// Partitions V+ into V_keep / V_drop with |V_drop| = round(alpha * |V+|).
inline NodeSplit sample_keep_drop(const Graph& g, double alpha, std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ConfigError("keep/drop rate must lie in [0, 1), got " + std::to_string(alpha));
  }
  NodeList plus = g.v_plus();
  if (plus.empty()) throw DataError("no attributed nodes to partition");
  Rng rng(derive_seed(seed, 0x6b656570 /* "keep" */));
  shuffle(plus, rng);
  const std::size_t k = round_half_up(alpha * static_cast<double>(plus.size()));
  NodeSplit split;
  split.alpha = alpha;
  split.v_drop.assign(plus.begin(), plus.begin() + static_cast<std::ptrdiff_t>(k));
  split.v_keep.assign(plus.begin() + static_cast<std::ptrdiff_t>(k), plus.end());
  std::sort(split.v_drop.begin(), split.v_drop.end());
  std::sort(split.v_keep.begin(), split.v_keep.end());
  return split;
}

// 75% / 25% train-pool / test split of labeled nodes; a quarter of the pool
// (at least one node) is held out for validation.
inline NodeSplit train_test_split(const Graph& g, std::uint64_t seed) {
  NodeList labeled = g.labeled_nodes();
  if (labeled.size() < 4) {
    throw DataError("need at least 4 labeled nodes, got " + std::to_string(labeled.size()));
  }
  Rng rng(derive_seed(seed, 0x73706c74 /* "splt" */));
  shuffle(labeled, rng);
  const std::size_t pool = labeled.size() * 3 / 4;
  const std::size_t val = std::max<std::size_t>(1, pool / 4);
  NodeSplit split;
  const auto b = labeled.begin();
  split.val_ids.assign(b, b + static_cast<std::ptrdiff_t>(val));
  split.train_ids.assign(b + static_cast<std::ptrdiff_t>(val), b + static_cast<std::ptrdiff_t>(pool));
  split.test_ids.assign(b + static_cast<std::ptrdiff_t>(pool), labeled.end());
  for (auto* ids : {&split.train_ids, &split.val_ids, &split.test_ids})
    std::sort(ids->begin(), ids->end());
  return split;
}

// Average-attribute completion: V- rows become the mean of their attributed
// one-hop neighbors, or the global V+ mean when none exist.
inline Matrix neighbor_mean_completion(const Graph& g) {
  const NodeList plus = g.v_plus();
  if (plus.empty()) throw DataError("neighbor-mean completion needs attributed nodes");
  const std::size_t d = g.attribute_dim();
  Matrix out(g.num_nodes(), d);
  std::vector<double> global(d, 0.0);
  for (NodeId i : plus) {
    const auto x = g.attributes_of(i);
    std::copy(x.begin(), x.end(), out.row(i).begin());
    for (std::size_t c = 0; c < d; ++c) global[c] += x[c];
  }
  for (auto& v : global) v /= static_cast<double>(plus.size());
  for (NodeId u : g.v_minus()) {
    auto o = out.row(u);
    std::size_t count = 0;
    for (NodeId v : g.neighbors[u]) {
      if (!g.is_attributed(v)) continue;
      const auto x = g.attributes_of(v);
      for (std::size_t c = 0; c < d; ++c) o[c] += x[c];
      ++count;
    }
    if (count == 0) {
      std::copy(global.begin(), global.end(), o.begin());
    } else {
      for (auto& v : o) v /= static_cast<double>(count);
    }
  }
  return out;
}

// FNV-1a over the node count and canonical edge list.
inline std::uint64_t graph_hash(const Graph& g) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto feed = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  feed(g.num_nodes());
  for (auto [u, v] : g.edges) {
    feed(u);
    feed(v);
  }
  return h;
}

}  // namespace fairac
