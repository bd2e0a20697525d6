/*
 * Copyright 2026 The fnmr-audit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Monte Carlo study of the margin of error M as a function of group count G,
// subjects per group n, attempts per subject m, FNMR pi and intra-subject
// correlation rho.
//
// Correlated decisions come from a beta-binomial construction: each subject
// draws a personal error probability p_i ~ Beta(a, b) with
//   a = pi (1 - rho) / rho,   b = (1 - pi) (1 - rho) / rho,
// then makes m independent Bernoulli(p_i) decisions. This gives E[D] = pi and
// exchangeable within-subject correlation exactly rho (1 / (a + b + 1)).

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <boost/random/gamma_distribution.hpp>

#include "fnmr/margin_of_error.hpp"
#include "json.hpp"

namespace fnmr {

/// Shortest round-trip decimal text for a double.
inline std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace detail {

// log of a Gamma(shape, 1) draw; stable for small shapes via
// Gamma(a) = Gamma(a + 1) * U^(1/a).
inline double log_gamma_draw(double shape, Stream& rng) {
  if (shape >= 1.0) {
    return std::log(boost::random::gamma_distribution<double>(shape)(rng));
  }
  const double boosted = boost::random::gamma_distribution<double>(shape + 1.0)(rng);
  double u = rng.uniform();
  while (u == 0.0) u = rng.uniform();
  return std::log(boosted) + std::log(u) / shape;
}

inline std::string padded(std::size_t value, std::size_t width) {
  std::string digits = std::to_string(value);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return digits;
}

}  // namespace detail

/// Beta(a, b) draw computed as a logistic of the log-gamma difference.
inline double beta_draw(double a, double b, Stream& rng) {
  const double log_x = detail::log_gamma_draw(a, rng);
  const double log_y = detail::log_gamma_draw(b, rng);
  return 1.0 / (1.0 + std::exp(log_y - log_x));
}

/// One group of n subjects with m correlated decisions each. With rho == 0
/// decisions are i.i.d. Bernoulli(pi), and pi may then be 0 or 1.
inline GroupDataset generate_group(double pi, double rho, std::size_t n, std::size_t m,
                                   Stream& rng, std::string group_id = "G1") {
  if (!(pi >= 0.0 && pi <= 1.0)) throw std::invalid_argument("pi must lie in [0, 1]");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
  if (rho > 0.0 && !(pi > 0.0 && pi < 1.0)) {
    throw std::invalid_argument("pi must lie in (0, 1) when rho > 0");
  }
  if (n < 1 || m < 1) throw std::invalid_argument("n and m must be >= 1");
  const double a = pi * (1.0 - rho) / rho;
  const double b = (1.0 - pi) * (1.0 - rho) / rho;
  const std::size_t width = std::to_string(n).size();
  GroupDataset g;
  g.group_id = group_id;
  g.subjects.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = rho > 0.0 ? beta_draw(a, b, rng) : pi;
    Subject s{group_id + "-s" + detail::padded(i + 1, width), {}};
    s.decisions.resize(m);
    for (auto& d : s.decisions) d = rng.bernoulli(p) ? 1 : 0;
    g.subjects.push_back(std::move(s));
  }
  return g;
}

struct SimConfig {
  double pi = 0.10;
  double rho = 0.15;
  std::size_t n = 400;
  std::size_t m = 3;
  std::size_t groups = 5;  // G
  std::size_t runs = 1000;  // R
  std::size_t replicates = 999;  // K
  double alpha = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("pi must lie in (0, 1)");
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
    if (n < 1 || m < 1 || groups < 1 || runs < 1 || replicates < 1) {
      throw std::invalid_argument("n, m, G, R and K must all be >= 1");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  }

  /// Parameter text that identifies a cell, excluding the seed.
  std::string parameter_key() const {
    return "pi=" + format_double(pi) + ";rho=" + format_double(rho) +
           ";n=" + std::to_string(n) + ";m=" + std::to_string(m) +
           ";G=" + std::to_string(groups) + ";R=" + std::to_string(runs) +
           ";K=" + std::to_string(replicates) + ";alpha=" + format_double(alpha);
  }

  /// Ledger key: parameters plus seed.
  std::uint64_t config_hash() const {
    return fnv1a64(parameter_key() + ";seed=" + std::to_string(seed));
  }

  bool operator==(const SimConfig&) const = default;
};

inline constexpr std::array<double, 6> kMarginPercentiles = {0.50, 0.75, 0.80,
                                                             0.90, 0.95, 0.975};

struct SimCellResult {
  SimConfig config;
  std::array<double, 6> percentiles{};  // at kMarginPercentiles
  double mean_margin = 0.0;
  std::size_t run_count = 0;
  std::vector<double> margins;  // per run; not part of the CSV row

  double median() const noexcept { return percentiles[0]; }
};

/// Study for run `run` of a cell: G groups labelled G01.. drawn on streams
/// keyed by (seed, run, group).
inline StudyDataset generate_study(const SimConfig& cfg, std::uint64_t run) {
  StudyDataset study;
  const std::size_t width = std::max<std::size_t>(2, std::to_string(cfg.groups).size());
  for (std::size_t g = 0; g < cfg.groups; ++g) {
    Stream rng(derive_key(cfg.seed, 0x67656eULL /* gen */, run, g));
    study.groups.push_back(
        generate_group(cfg.pi, cfg.rho, cfg.n, cfg.m, rng, "G" + detail::padded(g + 1, width)));
  }
  study.provenance = "simulated: " + cfg.parameter_key() + ";run=" + std::to_string(run);
  return study;
}

inline std::uint64_t run_bootstrap_seed(const SimConfig& cfg, std::uint64_t run) {
  return derive_key(cfg.seed, 0x626f6f74ULL /* boot */, run);
}

/// R independent studies, M for each, summarised across runs.
inline SimCellResult run_cell(const SimConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  if (cfg.groups < 2) throw std::invalid_argument("G must be >= 2 to compute a margin");
  SimCellResult result;
  result.config = cfg;
  result.run_count = cfg.runs;
  result.margins.resize(cfg.runs);
  parallel_for(cfg.runs, threads, [&](std::size_t r) {
    const StudyDataset study = generate_study(cfg, r);
    BootstrapConfig boot{cfg.replicates, cfg.alpha, run_bootstrap_seed(cfg, r), 1};
    result.margins[r] = margin_of_error(study, boot).margin;
  });
  for (std::size_t k = 0; k < kMarginPercentiles.size(); ++k) {
    result.percentiles[k] = nearest_rank_quantile(result.margins, kMarginPercentiles[k]);
  }
  long double total = 0.0L;
  for (double m : result.margins) total += m;
  result.mean_margin = static_cast<double>(total / static_cast<long double>(cfg.runs));
  return result;
}

struct SimGrid {
  std::vector<double> pi;
  std::vector<double> rho;
  std::vector<std::size_t> n;
  std::vector<std::size_t> m;
  std::vector<std::size_t> groups;
  std::size_t runs = 1000;
  std::size_t replicates = 999;
  double alpha = 0.05;
  std::uint64_t seed = 0;

  /// Full factorial grid of the published study (4000 cells).
  static SimGrid full() {
    return {{0.025, 0.05, 0.10, 0.15, 0.20},
            {0.05, 0.15, 0.25, 0.35, 0.45},
            {100, 200, 400, 800},
            {2, 3, 4, 6, 10},
            {3, 4, 5, 6, 10, 15, 20, 30},
            1000, 999, 0.05, 0};
  }

  /// Reduced grid for desk-scale and CI runs.
  static SimGrid desk() {
    return {{0.05, 0.10, 0.20}, {0.05}, {100, 200}, {2, 3}, {3, 5, 10}, 200, 499, 0.05, 0};
  }

  std::size_t cell_count() const noexcept {
    return pi.size() * rho.size() * n.size() * m.size() * groups.size();
  }

  /// Cells in row-major order over (pi, rho, n, m, G). Each cell's seed is
  /// derived from the grid seed and the cell parameters, so a cell's result
  /// does not depend on which grid it was run in.
  std::vector<SimConfig> cells() const {
    if (cell_count() == 0) throw std::invalid_argument("every grid value list must be non-empty");
    std::vector<SimConfig> out;
    out.reserve(cell_count());
    for (double p : pi)
      for (double r : rho)
        for (std::size_t nn : n)
          for (std::size_t mm : m)
            for (std::size_t gg : groups) {
              SimConfig cfg{p, r, nn, mm, gg, runs, replicates, alpha, 0};
              cfg.seed = derive_key(seed, fnv1a64(cfg.parameter_key()));
              cfg.validate();
              out.push_back(cfg);
            }
    return out;
  }
};

inline const char* grid_csv_header() {
  return "pi,rho,n,m,G,R,K,alpha,p50,p75,p80,p90,p95,p975,mean_M,seed";
}

inline std::string grid_csv_row(const SimCellResult& r) {
  const auto& c = r.config;
  std::string row = format_double(c.pi) + ',' + format_double(c.rho) + ',' +
                    std::to_string(c.n) + ',' + std::to_string(c.m) + ',' +
                    std::to_string(c.groups) + ',' + std::to_string(c.runs) + ',' +
                    std::to_string(c.replicates) + ',' + format_double(c.alpha);
  for (double p : r.percentiles) row += ',' + format_double(p);
  row += ',' + format_double(r.mean_margin) + ',' + std::to_string(c.seed);
  return row;
}

inline nlohmann::json to_json(const SimCellResult& r) {
  const auto& c = r.config;
  return {{"pi", c.pi},       {"rho", c.rho},
          {"n", c.n},         {"m", c.m},
          {"G", c.groups},    {"R", c.runs},
          {"K", c.replicates}, {"alpha", c.alpha},
          {"seed", c.seed},   {"percentiles", r.percentiles},
          {"mean_M", r.mean_margin}, {"runs_completed", r.run_count}};
}

inline SimCellResult sim_cell_from_json(const nlohmann::json& j) {
  SimCellResult r;
  r.config = {j.at("pi").get<double>(),          j.at("rho").get<double>(),
              j.at("n").get<std::size_t>(),      j.at("m").get<std::size_t>(),
              j.at("G").get<std::size_t>(),      j.at("R").get<std::size_t>(),
              j.at("K").get<std::size_t>(),      j.at("alpha").get<double>(),
              j.at("seed").get<std::uint64_t>()};
  r.percentiles = j.at("percentiles").get<std::array<double, 6>>();
  r.mean_margin = j.at("mean_M").get<double>();
  r.run_count = j.at("runs_completed").get<std::size_t>();
  return r;
}

/// Path of the resumability ledger kept next to a grid CSV.
inline std::filesystem::path ledger_path(const std::filesystem::path& csv) {
  auto p = csv;
  p += ".ledger.jsonl";
  return p;
}

/// Completed cells recorded in a ledger, keyed by config hash. Truncated
/// trailing lines (an interrupted append) are ignored.
inline std::map<std::uint64_t, SimCellResult> read_ledger(const std::filesystem::path& path) {
  std::map<std::uint64_t, SimCellResult> done;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.contains("key") || !doc.contains("cell")) continue;
    done[doc["key"].get<std::uint64_t>()] = sim_cell_from_json(doc["cell"]);
  }
  return done;
}

struct GridRunStats {
  std::size_t computed = 0;
  std::size_t skipped = 0;
};

/// Runs every cell of `grid`, skipping cells already in the ledger beside
/// `out_csv`, and writes one CSV row per cell in grid order.
inline std::vector<SimCellResult> run_grid(
    const SimGrid& grid, const std::filesystem::path& out_csv, unsigned threads = 1,
    GridRunStats* stats = nullptr,
    const std::function<void(const SimCellResult&, bool skipped)>& on_cell = {}) {
  const auto cells = grid.cells();
  const auto ledger_file = ledger_path(out_csv);
  auto done = read_ledger(ledger_file);
  std::ofstream ledger(ledger_file, std::ios::app);
  if (!ledger) throw IoError("cannot open ledger '" + ledger_file.string() + "'");

  GridRunStats local;
  std::vector<SimCellResult> results;
  results.reserve(cells.size());
  for (const auto& cfg : cells) {
    const std::uint64_t key = cfg.config_hash();
    if (auto it = done.find(key); it != done.end() && it->second.config == cfg) {
      results.push_back(it->second);
      ++local.skipped;
      if (on_cell) on_cell(results.back(), true);
      continue;
    }
    results.push_back(run_cell(cfg, threads));
    ++local.computed;
    ledger << nlohmann::json{{"key", key}, {"cell", to_json(results.back())}}.dump() << '\n';
    ledger.flush();
    if (!ledger) throw IoError("write to ledger '" + ledger_file.string() + "' failed");
    if (on_cell) on_cell(results.back(), false);
  }

  std::ofstream csv(out_csv, std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot open '" + out_csv.string() + "' for writing");
  csv << grid_csv_header() << '\n';
  for (const auto& r : results) csv << grid_csv_row(r) << '\n';
  csv.flush();
  if (!csv) throw IoError("write to '" + out_csv.string() + "' failed");
  if (stats) *stats = local;
  return results;
}

/// Long-format M-vs-G series. For each series parameter in {pi, rho, n, m},
/// rows sharing every other parameter form one panel; within a panel each
/// value of the series parameter is one curve over G.
inline void write_figure_series(const std::vector<SimCellResult>& results, std::ostream& out) {
  out << "series_param,panel,series_value,G,M_p50,M_mean\n";
  const char* params[] = {"pi", "rho", "n", "m"};
  auto value_of = [](const SimConfig& c, std::string_view p) {
    if (p == "pi") return format_double(c.pi);
    if (p == "rho") return format_double(c.rho);
    if (p == "n") return std::to_string(c.n);
    return std::to_string(c.m);
  };
  for (const char* series : params) {
    std::map<std::string, std::vector<const SimCellResult*>> panels;
    for (const auto& r : results) {
      std::string panel;
      for (const char* p : params) {
        if (std::string_view(p) == series) continue;
        if (!panel.empty()) panel += ';';
        panel += std::string(p) + '=' + value_of(r.config, p);
      }
      panels[panel].push_back(&r);
    }
    for (const auto& [panel, rows] : panels) {
      std::set<std::string> distinct;
      for (const auto* r : rows) distinct.insert(value_of(r->config, series));
      if (distinct.size() < 2 && std::string_view(series) != "pi") continue;
      for (const auto* r : rows) {
        out << series << ',' << panel << ',' << value_of(r->config, series) << ','
            << r->config.groups << ',' << format_double(r->median()) << ','
            << format_double(r->mean_margin) << '\n';
      }
    }
  }
}

}  // namespace fnmr
