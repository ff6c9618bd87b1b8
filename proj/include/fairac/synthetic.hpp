#pragma once

// Synthetic attributed graphs shaped like the NBA player graph (403 nodes,
// density ~0.1, a minority sensitive group), for tests and for running the
// experiment pipeline without the real dataset.
//
// Generative model:
//   s_i ~ Bernoulli(sensitive_rate); latent skill z_i ~ N(0, 1)
//   y_i = 1[z_i + label_bias * (1 - 2 s_i) + N(0, label_noise^2) > median]
//   performance columns: a_j z_i + N(0, 1)
//   proxy columns:       c_j s_i + 0.3 a_j z_i + N(0, 1)
//   noise columns:       N(0, 1)
//   P(edge ij) = min(1, k w_i w_j h^[s_i == s_j] exp(-(z_i - z_j)^2 / (2 tau^2))),
//   w_i ~ LogNormal(0, 0.5), k solved so the expected edge count matches
//   target_edges.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "fairac/graph.hpp"
#include "fairac/io.hpp"
#include "fairac/random.hpp"

namespace fairac {

struct SyntheticSpec {
  std::size_t nodes = 403;
  std::size_t performance_columns = 24;
  std::size_t proxy_columns = 10;
  std::size_t noise_columns = 5;
  double sensitive_rate = 0.27;
  double label_bias = 0.0;
  double label_noise = 1.1;
  double unlabeled_rate = 0.03;
  std::size_t target_edges = 8285;
  double homophily = 1.2;      // h, same-group edge boost
  double skill_bandwidth = 0.8;  // tau, smaller means stronger skill homophily
  std::uint64_t seed = 20230101;
};

inline Graph make_synthetic_graph(const SyntheticSpec& spec) {
  Rng rng(derive_seed(spec.seed, 0x73796e74 /* "synt" */));
  const std::size_t n = spec.nodes;
  std::vector<int> s(n);
  std::vector<double> z(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = bernoulli(rng, spec.sensitive_rate) ? 1 : 0;
    z[i] = normal(rng);
    w[i] = std::exp(normal(rng, 0.0, 0.5));
  }

  std::vector<double> latent(n);
  for (std::size_t i = 0; i < n; ++i) {
    latent[i] = z[i] + spec.label_bias * (1.0 - 2.0 * s[i]) + normal(rng, 0.0, spec.label_noise);
  }
  std::vector<double> sorted = latent;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[n / 2];
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = bernoulli(rng, spec.unlabeled_rate) ? kUnavailable : (latent[i] > median ? 1 : 0);
  }

  const std::size_t d = spec.performance_columns + spec.proxy_columns + spec.noise_columns;
  std::vector<double> load(d), proxy(d);
  for (std::size_t j = 0; j < d; ++j) {
    load[j] = uniform(rng, 0.3, 1.0);
    proxy[j] = uniform(rng, 0.8, 1.5);
  }
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double v = normal(rng);
      if (j < spec.performance_columns) {
        v += load[j] * z[i];
      } else if (j < spec.performance_columns + spec.proxy_columns) {
        v += proxy[j] * s[i] + 0.3 * load[j] * z[i];
      }
      x(i, j) = v;
    }
  }

  const auto affinity = [&](std::size_t i, std::size_t j) {
    const double dz = z[i] - z[j];
    return w[i] * w[j] * (s[i] == s[j] ? spec.homophily : 1.0) *
           std::exp(-dz * dz / (2.0 * spec.skill_bandwidth * spec.skill_bandwidth));
  };
  const auto expected = [&](double k) {
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) e += std::min(1.0, k * affinity(i, j));
    return e;
  };
  double lo = 0.0, hi = 1.0;
  while (expected(hi) < static_cast<double>(spec.target_edges) && hi < 1e6) hi *= 2.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < static_cast<double>(spec.target_edges) ? lo : hi) = mid;
  }
  const double k = 0.5 * (lo + hi);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (bernoulli(rng, std::min(1.0, k * affinity(i, j))))
        edges.emplace_back(i, j);

  Graph g = make_graph(std::move(x), std::move(s), std::move(labels), std::move(edges));
  for (std::size_t j = 0; j < d; ++j) {
    g.attribute_names[j] = (j < spec.performance_columns ? "perf" :
                            j < spec.performance_columns + spec.proxy_columns ? "proxy" : "noise") +
                           std::to_string(j);
  }
  standardize_attributes(g);
  return g;
}

// Writes nodes.csv (user_id, attributes..., country, SALARY) and edges.csv in
// the layout load_dataset() reads. Attributes must all be available.
inline DatasetSpec write_dataset(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  DatasetSpec spec{dir / "nodes.csv", dir / "edges.csv", "country", "SALARY", {}};
  {
    std::ofstream os(spec.node_file);
    if (!os) throw Error("cannot write " + spec.node_file.string());
    os << "user_id";
    for (const auto& name : g.attribute_names) os << ',' << name;
    os << ",country,SALARY\n";
    for (NodeId u = 0; u < g.num_nodes(); ++u) {
      os << g.node_names[u];
      for (double v : g.attributes_of(u)) os << ',' << io::format_double(v);
      os << ',' << g.sensitive_truth[u] << ',' << g.labels[u] << '\n';
    }
  }
  {
    std::ofstream os(spec.edge_file);
    if (!os) throw Error("cannot write " + spec.edge_file.string());
    for (auto [u, v] : g.edges) os << g.node_names[u] << ',' << g.node_names[v] << '\n';
  }
  return spec;
}

}  // namespace fairac
