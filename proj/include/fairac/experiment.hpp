#pragma once

// Experiment orchestration: per-seed pipelines, sweeps over the missing rate
// and the fairness weight, and report files.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "fairac/deepwalk.hpp"
#include "fairac/error.hpp"
#include "fairac/gcn.hpp"
#include "fairac/graph.hpp"
#include "fairac/io.hpp"
#include "fairac/log.hpp"
#include "fairac/metrics.hpp"
#include "fairac/model.hpp"

namespace fairac {

enum class Mode { fairac, baseac, gcn_avg };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::fairac: return "fairac";
    case Mode::baseac: return "baseac";
    case Mode::gcn_avg: return "gcn_avg";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "fairac") return Mode::fairac;
  if (s == "baseac") return Mode::baseac;
  if (s == "gcn_avg") return Mode::gcn_avg;
  throw ConfigError("unknown mode '" + s + "' (expected fairac, baseac or gcn_avg)");
}

struct ExperimentConfig {
  DatasetSpec dataset;
  double alpha = 0.3;
  double beta = 1.0;
  std::size_t num_heads = 2;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  Mode mode = Mode::fairac;
  double accuracy_threshold = 0.65;
  std::size_t epochs_ac = 1000;
  std::size_t epochs_gcn = 1000;
  std::filesystem::path out_dir = "results";
  std::optional<std::filesystem::path> cache_dir;
  WalkConfig walk{};
  TopoLossMode lt_mode = TopoLossMode::uniform_target;

  // beta as actually used by the model
  double effective_beta() const { return mode == Mode::baseac ? 0.0 : beta; }

  void validate() const {
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (num_heads < 1) throw ConfigError("heads must be >= 1");
    if (!(accuracy_threshold >= 0.0 && accuracy_threshold <= 1.0)) {
      throw ConfigError("threshold must lie in [0, 1]");
    }
    if (epochs_gcn < 1) throw ConfigError("epochs-gcn must be >= 1");
    walk.validate();
  }
};

// ---------------------------------------------------------------------------
// Config text: "key = value" lines, '#' starts a comment.

namespace detail {
inline std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? "," : "") + std::to_string(seeds[i]);
  return out;
}
inline std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  for (auto part : split_csv(v))
    if (!part.empty()) out.emplace_back(part);
  return out;
}
inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}
inline double parse_real(const std::string& key, const std::string& v) {
  try {
    return io::parse_double(v);
  } catch (const DataError&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}
}  // namespace detail

inline std::vector<std::uint64_t> parse_seed_list(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  for (const auto& s : detail::split_list(v)) seeds.push_back(detail::parse_uint("seeds", s));
  return seeds;
}

inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& v) {
  using detail::parse_real;
  using detail::parse_uint;
  if (key == "nodes") cfg.dataset.node_file = v;
  else if (key == "edges") cfg.dataset.edge_file = v;
  else if (key == "sensitive") cfg.dataset.sensitive_column = v;
  else if (key == "label") cfg.dataset.label_column = v;
  else if (key == "drop") cfg.dataset.drop_columns = detail::split_list(v);
  else if (key == "alpha") cfg.alpha = parse_real(key, v);
  else if (key == "beta") cfg.beta = parse_real(key, v);
  else if (key == "heads") cfg.num_heads = parse_uint(key, v);
  else if (key == "seeds") cfg.seeds = parse_seed_list(v);
  else if (key == "mode") cfg.mode = parse_mode(v);
  else if (key == "threshold") cfg.accuracy_threshold = parse_real(key, v);
  else if (key == "epochs_ac") cfg.epochs_ac = parse_uint(key, v);
  else if (key == "epochs_gcn") cfg.epochs_gcn = parse_uint(key, v);
  else if (key == "out") cfg.out_dir = v;
  else if (key == "cache") cfg.cache_dir = v.empty() ? std::nullopt : std::optional<std::filesystem::path>(v);
  else if (key == "walk_length") cfg.walk.walk_length = parse_uint(key, v);
  else if (key == "walks_per_node") cfg.walk.walks_per_node = parse_uint(key, v);
  else if (key == "window") cfg.walk.window = parse_uint(key, v);
  else if (key == "walk_dim") cfg.walk.dim = parse_uint(key, v);
  else if (key == "walk_epochs") cfg.walk.epochs = parse_uint(key, v);
  else if (key == "lt_mode") {
    try {
      cfg.lt_mode = parse_topo_loss_mode(v);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

inline ExperimentConfig parse_config_text(std::istream& is, ExperimentConfig cfg = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(detail::trim(body.substr(0, eq)));
    std::replace(key.begin(), key.end(), '-', '_');
    set_config_value(cfg, key, std::string(detail::trim(body.substr(eq + 1))));
  }
  return cfg;
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  return parse_config_text(is, std::move(base));
}

// Canonical text form; parse_config_text() reads it back.
inline std::string config_text(const ExperimentConfig& c) {
  std::ostringstream os;
  std::string drop;
  for (std::size_t i = 0; i < c.dataset.drop_columns.size(); ++i)
    drop += (i ? "," : "") + c.dataset.drop_columns[i];
  os << "nodes = " << c.dataset.node_file.string() << '\n'
     << "edges = " << c.dataset.edge_file.string() << '\n'
     << "sensitive = " << c.dataset.sensitive_column << '\n'
     << "label = " << c.dataset.label_column << '\n'
     << "drop = " << drop << '\n'
     << "alpha = " << io::format_double(c.alpha) << '\n'
     << "beta = " << io::format_double(c.beta) << '\n'
     << "heads = " << c.num_heads << '\n'
     << "seeds = " << detail::join_seeds(c.seeds) << '\n'
     << "mode = " << to_string(c.mode) << '\n'
     << "threshold = " << io::format_double(c.accuracy_threshold) << '\n'
     << "epochs_ac = " << c.epochs_ac << '\n'
     << "epochs_gcn = " << c.epochs_gcn << '\n'
     << "out = " << c.out_dir.string() << '\n'
     << "cache = " << (c.cache_dir ? c.cache_dir->string() : "") << '\n'
     << "walk_length = " << c.walk.walk_length << '\n'
     << "walks_per_node = " << c.walk.walks_per_node << '\n'
     << "window = " << c.walk.window << '\n'
     << "walk_dim = " << c.walk.dim << '\n'
     << "walk_epochs = " << c.walk.epochs << '\n'
     << "lt_mode = " << to_string(c.lt_mode) << '\n';
  return os.str();
}

// FNV-1a of the canonical text.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_text(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Running

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failure;  // stage and reason when !ok
  EvaluationReport report;
  bool below_threshold = false;  // GCN checkpoint fell back to max accuracy
  std::size_t selected_epoch = 0;
  std::size_t fallback_nodes = 0;
  double seconds = 0.0;
};

// Mean and population std over the successful seeds, in percentage points.
struct Aggregate {
  std::string method;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t runs = 0;
  double acc_mean = 0.0, acc_std = 0.0;
  double auc_mean = 0.0, auc_std = 0.0;
  double dsp_mean = 0.0, dsp_std = 0.0;
  double deo_mean = 0.0, deo_std = 0.0;
  double combined_mean = 0.0, combined_std = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::uint64_t config_hash = 0;
  std::vector<SeedResult> seeds;
  Aggregate aggregate;
};

// Per-seed stream seeds; shared by every mode so splits line up.
struct SeedStreams {
  std::uint64_t missing, split, walk, model, gcn;
  explicit SeedStreams(std::uint64_t s)
      : missing(derive_seed(s, 1)), split(derive_seed(s, 2)), walk(derive_seed(s, 3)),
        model(derive_seed(s, 4)), gcn(derive_seed(s, 5)) {}
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

inline Aggregate aggregate(const ExperimentConfig& cfg, const std::vector<SeedResult>& seeds) {
  Aggregate a;
  a.method = to_string(cfg.mode);
  a.alpha = cfg.alpha;
  a.beta = cfg.effective_beta();
  std::vector<double> acc, auc_v, dsp, deo, comb;
  for (const auto& s : seeds) {
    if (!s.ok) continue;
    acc.push_back(s.report.accuracy_pct());
    auc_v.push_back(s.report.auc_pct());
    dsp.push_back(s.report.delta_sp_pct());
    deo.push_back(s.report.delta_eo_pct());
    comb.push_back(s.report.combined_pct());
  }
  a.runs = acc.size();
  std::tie(a.acc_mean, a.acc_std) = mean_std(acc);
  std::tie(a.auc_mean, a.auc_std) = mean_std(auc_v);
  std::tie(a.dsp_mean, a.dsp_std) = mean_std(dsp);
  std::tie(a.deo_mean, a.deo_std) = mean_std(deo);
  std::tie(a.combined_mean, a.combined_std) = mean_std(comb);
  return a;
}

// One seed of the pipeline on an already loaded, fully attributed graph.
inline SeedResult run_seed(const ExperimentConfig& cfg, const Graph& base, std::uint64_t seed) {
  SeedResult out;
  out.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  const SeedStreams streams(seed);
  std::string stage = "masking";
  try {
    const Graph g = apply_attribute_missing(base, cfg.alpha, streams.missing);
    stage = "split";
    const NodeSplit split = train_test_split(g, streams.split);
    Matrix features;
    if (cfg.mode == Mode::gcn_avg) {
      stage = "completion";
      features = neighbor_mean_completion(g);
    } else {
      stage = "deepwalk";
      WalkConfig wc = cfg.walk;
      wc.seed = streams.walk;
      const TopoEmbeddingTable topo = embed_all(g, wc, cfg.cache_dir);
      stage = "fairac";
      FairACConfig fc;
      fc.beta = cfg.effective_beta();
      fc.num_heads = cfg.num_heads;
      fc.epochs = cfg.epochs_ac;
      fc.drop_rate = cfg.alpha;
      fc.seed = streams.model;
      fc.lt_mode = cfg.lt_mode;
      FairACModel model = train_fairac(g, topo, fc);
      stage = "inference";
      EmbeddingSet emb = infer_embeddings(g, model.params, topo);
      out.fallback_nodes = emb.fallback_count;
      features = std::move(emb.h);
    }
    stage = "gcn";
    GCNConfig gc;
    gc.epochs = cfg.epochs_gcn;
    gc.accuracy_threshold = cfg.accuracy_threshold;
    gc.seed = streams.gcn;
    const ClassifierResult clf = train_classifier(features, normalize_adjacency(g), g, split, gc);
    out.below_threshold = clf.choice.below_threshold;
    out.selected_epoch = clf.choice.epoch;
    if (out.below_threshold) {
      log::warn("seed ", seed, ": no epoch reached validation accuracy ", cfg.accuracy_threshold,
                "; using the most accurate epoch");
    }
    stage = "evaluation";
    std::vector<double> scores;
    std::vector<int> pred, y, s;
    for (NodeId i : split.test_ids) {
      scores.push_back(clf.probabilities[i]);
      pred.push_back(clf.probabilities[i] >= 0.5 ? 1 : 0);
      y.push_back(g.labels[i]);
      s.push_back(g.sensitive_truth[i]);
    }
    out.report = evaluate(pred, scores, y, s, RunMeta{seed, cfg.alpha, cfg.effective_beta(), to_string(cfg.mode)});
    out.ok = true;
  } catch (const std::exception& e) {
    out.failure = stage + ": " + e.what();
    log::warn("seed ", seed, " failed at ", out.failure);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Graph& base) {
  cfg.validate();
  ExperimentResult r;
  r.config = cfg;
  r.config_hash = config_hash(cfg);
  for (auto seed : cfg.seeds) {
    log::info("mode=", to_string(cfg.mode), " alpha=", cfg.alpha, " beta=", cfg.effective_beta(),
              " seed=", seed);
    r.seeds.push_back(run_seed(cfg, base, seed));
  }
  r.aggregate = aggregate(cfg, r.seeds);
  return r;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_experiment(cfg, load_dataset(cfg.dataset));
}

// One experiment per (alpha, mode); rows sorted by alpha, then by the order
// of `modes`.
inline std::vector<ExperimentResult> run_alpha_sweep(const ExperimentConfig& cfg, const Graph& base,
                                                     std::vector<double> alphas = {0.1, 0.3, 0.5, 0.8},
                                                     const std::vector<Mode>& modes = {Mode::fairac,
                                                                                       Mode::gcn_avg}) {
  std::stable_sort(alphas.begin(), alphas.end());
  std::vector<ExperimentResult> out;
  for (double a : alphas) {
    for (Mode m : modes) {
      ExperimentConfig c = cfg;
      c.alpha = a;
      c.mode = m;
      out.push_back(run_experiment(c, base));
    }
  }
  return out;
}

// Spearman rank correlation (average ranks for ties). NaN when either side
// is constant.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: lengths differ");
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k < j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + 1 + j);
      i = j;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nan("");
  return sab / std::sqrt(saa * sbb);
}

struct BetaSweep {
  std::vector<ExperimentResult> runs;  // in beta order
  std::vector<double> betas;
  std::vector<double> accuracy;        // mean, percentage points
  std::vector<double> combined;        // mean delta_sp + delta_eo, points
  double spearman_combined = 0.0;
};

inline BetaSweep run_beta_sweep(const ExperimentConfig& cfg, const Graph& base,
                                std::vector<double> betas = {0.0, 0.2, 0.4, 0.7, 0.8, 1.0}) {
  std::stable_sort(betas.begin(), betas.end());
  BetaSweep out;
  for (double b : betas) {
    ExperimentConfig c = cfg;
    c.mode = Mode::fairac;
    c.beta = b;
    out.runs.push_back(run_experiment(c, base));
    out.betas.push_back(b);
    out.accuracy.push_back(out.runs.back().aggregate.acc_mean);
    out.combined.push_back(out.runs.back().aggregate.combined_mean);
  }
  out.spearman_combined = spearman(out.betas, out.combined);
  return out;
}

// ---------------------------------------------------------------------------
// Reports
//
// <dir>/results.csv    one aggregate row per experiment
// <dir>/runs.jsonl     one object per (experiment, seed)
// <dir>/config.txt     canonical config of the first experiment
// <dir>/manifest.json  config hashes, seeds, failed seeds and build info

inline const std::vector<std::string>& results_columns() {
  static const std::vector<std::string> cols{
      "method", "alpha", "beta", "acc_mean", "acc_std", "auc_mean", "auc_std",
      "dsp_mean", "dsp_std", "deo_mean", "deo_std", "combined_mean", "combined_std"};
  return cols;
}

inline void write_results_csv(std::ostream& os, const std::vector<Aggregate>& rows) {
  const auto& cols = results_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  using io::format_double;
  for (const auto& a : rows) {
    os << a.method << ',' << format_double(a.alpha) << ',' << format_double(a.beta);
    for (double v : {a.acc_mean, a.acc_std, a.auc_mean, a.auc_std, a.dsp_mean, a.dsp_std,
                     a.deo_mean, a.deo_std, a.combined_mean, a.combined_std}) {
      os << ',' << (std::isfinite(v) ? format_double(v) : "nan");
    }
    os << '\n';
  }
}

inline std::vector<Aggregate> read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("results table is empty");
  std::vector<std::string> header;
  for (auto h : detail::split_csv(line)) header.emplace_back(h);
  if (header != results_columns()) throw DataError("unexpected results header");
  std::vector<Aggregate> rows;
  while (std::getline(is, line)) {
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != header.size()) throw DataError("results row has wrong width");
    const auto num = [&](std::size_t i) {
      return cells[i] == "nan" ? std::nan("") : io::parse_double(cells[i]);
    };
    Aggregate a;
    a.method = std::string(cells[0]);
    a.alpha = num(1);
    a.beta = num(2);
    double* fields[] = {&a.acc_mean, &a.acc_std, &a.auc_mean, &a.auc_std, &a.dsp_mean,
                        &a.dsp_std, &a.deo_mean, &a.deo_std, &a.combined_mean, &a.combined_std};
    for (std::size_t i = 0; i < 10; ++i) *fields[i] = num(3 + i);
    rows.push_back(a);
  }
  return rows;
}

inline nlohmann::json seed_json(const ExperimentResult& r, const SeedResult& s) {
  nlohmann::json j;
  j["config_hash"] = io::hex64(r.config_hash);
  j["method"] = to_string(r.config.mode);
  j["alpha"] = r.config.alpha;
  j["beta"] = r.config.effective_beta();
  j["seed"] = s.seed;
  j["ok"] = s.ok;
  j["seconds"] = s.seconds;
  if (!s.ok) {
    j["failure"] = s.failure;
    return j;
  }
  j["accuracy"] = s.report.accuracy;
  j["auc"] = s.report.auc;
  j["delta_sp"] = s.report.delta_sp;
  j["delta_eo"] = s.report.delta_eo;
  j["selected_epoch"] = s.selected_epoch;
  j["below_threshold"] = s.below_threshold;
  j["fallback_nodes"] = s.fallback_nodes;
  j["counts"] = s.report.counts;  // [s][y][yhat]
  return j;
}

inline void emit_report(const std::vector<ExperimentResult>& results,
                        const std::filesystem::path& dir) {
  if (results.empty()) throw ConfigError("nothing to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto open = [&](const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw Error("cannot write " + (dir / name).string());
    return os;
  };
  {
    std::vector<Aggregate> rows;
    for (const auto& r : results) rows.push_back(r.aggregate);
    auto os = open("results.csv");
    write_results_csv(os, rows);
  }
  {
    auto os = open("runs.jsonl");
    for (const auto& r : results)
      for (const auto& s : r.seeds) os << seed_json(r, s).dump() << '\n';
  }
  {
    auto os = open("config.txt");
    os << config_text(results.front().config);
  }
  nlohmann::json m;
  m["experiments"] = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json e;
    e["config_hash"] = io::hex64(r.config_hash);
    e["config"] = config_text(r.config);
    e["seeds"] = r.config.seeds;
    e["failed_seeds"] = nlohmann::json::array();
    for (const auto& s : r.seeds)
      if (!s.ok) e["failed_seeds"].push_back(s.seed);
    m["experiments"].push_back(e);
  }
  m["compiler"] = __VERSION__;
  m["cplusplus"] = __cplusplus;
  auto os = open("manifest.json");
  os << m.dump(2) << '\n';
}

inline void write_beta_series(const BetaSweep& sweep, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "beta,acc_mean,combined_mean\n";
  for (std::size_t i = 0; i < sweep.betas.size(); ++i) {
    os << io::format_double(sweep.betas[i]) << ',' << io::format_double(sweep.accuracy[i]) << ','
       << io::format_double(sweep.combined[i]) << '\n';
  }
}

}  // namespace fairac
