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

// Command implementations behind the fnmr_audit executable. Each command
// writes its outputs plus a manifest.json into an output directory; replaying
// a manifest reproduces every output byte-for-byte apart from the manifest's
// own timestamp.
//
// Exit status reports tool failure only. Whether H0 is rejected is a finding
// and lives in the JSON output.

#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fnmr/fnmr.hpp"
#include "json.hpp"

namespace fnmr::cli {

namespace fs = std::filesystem;

struct AuditOptions {
  std::string input;
  std::string out = "fnmr_out";
  std::size_t replicates = 999;
  double alpha = 0.05;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

struct SimulateOptions {
  std::string profile = "desk";
  std::string out = "fnmr_sim";
  std::vector<double> pi, rho;
  std::vector<std::size_t> n, m, groups;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> replicates;
  double alpha = 0.05;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                               &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 initialisation failed");
  }
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

inline std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline void write_manifest(const fs::path& dir, const std::string& command,
                           const nlohmann::json& config, std::uint64_t seed,
                           const std::vector<std::string>& inputs) {
  nlohmann::json digests = nlohmann::json::array();
  for (const auto& path : inputs) {
    digests.push_back({{"path", fs::absolute(path).string()}, {"sha256", sha256_file(path)}});
  }
  nlohmann::json manifest = {{"command", command},   {"config", config},
                             {"seed", seed},         {"inputs", std::move(digests)},
                             {"tool_version", kVersion}, {"timestamp", utc_timestamp()}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline nlohmann::json audit_config(const AuditOptions& o, std::uint64_t seed) {
  return {{"input", fs::absolute(o.input).string()},
          {"replicates", o.replicates},
          {"alpha", o.alpha},
          {"seed", seed}};
}

namespace detail {

inline StudyDataset load_study(const std::string& input) {
  StudyDataset study = ingest_csv(input);
  if (study.group_count() < 2) {
    throw DataError("input has " + std::to_string(study.group_count()) +
                    " group(s); at least two are required");
  }
  return study;
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    body();
    return 0;
  } catch (const UndefinedStatistic& e) {
    err << "error: " << e.what() << "\n  per-group variance terms:";
    for (double t : e.variance_terms()) err << ' ' << t;
    err << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace detail

/// Bootstrap F-test: ftest.json, summary.txt, manifest.json.
inline int cmd_analyze(const AuditOptions& opts, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const std::uint64_t seed = opts.seed.value_or(entropy_seed());
    const StudyDataset study = detail::load_study(opts.input);
    const BootstrapConfig cfg{opts.replicates, opts.alpha, seed, opts.threads};
    const FTestResult result = bootstrap_f_test(study, cfg);

    const fs::path dir(opts.out);
    fs::create_directories(dir);
    write_text(dir / "ftest.json", to_json(result).dump(2) + "\n");
    std::ostringstream summary;
    write_summary(result, summary);
    write_text(dir / "summary.txt", summary.str());
    write_manifest(dir, "analyze", audit_config(opts, seed), seed, {opts.input});
    out << summary.str();
  });
}

/// Margin of error: moe.json, flags.csv, interval_figure.csv, summary.txt,
/// manifest.json.
inline int cmd_moe(const AuditOptions& opts, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const std::uint64_t seed = opts.seed.value_or(entropy_seed());
    const StudyDataset study = detail::load_study(opts.input);
    const BootstrapConfig cfg{opts.replicates, opts.alpha, seed, opts.threads};
    const MoeResult result = margin_of_error(study, cfg);

    const fs::path dir(opts.out);
    fs::create_directories(dir);
    write_text(dir / "moe.json", to_json(result).dump(2) + "\n");
    std::ostringstream flags, figure, summary;
    write_flag_table(result, flags);
    write_text(dir / "flags.csv", flags.str());
    write_interval_figure(result, figure);
    write_text(dir / "interval_figure.csv", figure.str());
    write_summary(result, summary);
    write_text(dir / "summary.txt", summary.str());
    write_manifest(dir, "moe", audit_config(opts, seed), seed, {opts.input});
    out << summary.str();
  });
}

/// Grid implied by a profile plus any per-parameter overrides.
inline SimGrid resolve_grid(const SimulateOptions& o, std::uint64_t seed) {
  SimGrid grid;
  if (o.profile == "full") {
    grid = SimGrid::full();
  } else if (o.profile == "desk") {
    grid = SimGrid::desk();
  } else {
    throw std::invalid_argument("unknown profile '" + o.profile + "' (expected desk or full)");
  }
  if (!o.pi.empty()) grid.pi = o.pi;
  if (!o.rho.empty()) grid.rho = o.rho;
  if (!o.n.empty()) grid.n = o.n;
  if (!o.m.empty()) grid.m = o.m;
  if (!o.groups.empty()) grid.groups = o.groups;
  if (o.runs) grid.runs = *o.runs;
  if (o.replicates) grid.replicates = *o.replicates;
  grid.alpha = o.alpha;
  grid.seed = seed;
  for (std::size_t g : grid.groups) {
    if (g < 2) throw std::invalid_argument("every G value must be >= 2");
  }
  return grid;
}

inline nlohmann::json simulate_config(const SimulateOptions& o, const SimGrid& grid) {
  return {{"profile", o.profile}, {"pi", grid.pi},         {"rho", grid.rho},
          {"n", grid.n},          {"m", grid.m},           {"G", grid.groups},
          {"runs", grid.runs},    {"replicates", grid.replicates},
          {"alpha", grid.alpha},  {"seed", grid.seed}};
}

/// Grid sweep: grid.csv (+ ledger), figure_series.csv, manifest.json.
/// Cells already present in the ledger are not recomputed.
inline int cmd_simulate(const SimulateOptions& opts, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const std::uint64_t seed = opts.seed.value_or(entropy_seed());
    const SimGrid grid = resolve_grid(opts, seed);
    grid.cells();  // validates every cell before any work starts

    const fs::path dir(opts.out);
    fs::create_directories(dir);
    const std::size_t total = grid.cell_count();
    std::size_t index = 0;
    GridRunStats stats;
    const auto results = run_grid(
        grid, dir / "grid.csv", opts.threads, &stats, [&](const SimCellResult& r, bool skipped) {
          ++index;
          out << '[' << index << '/' << total << "] " << r.config.parameter_key()
              << (skipped ? " (cached)" : "") << " M50=" << format_double(r.median()) << '\n';
        });
    std::ostringstream series;
    write_figure_series(results, series);
    write_text(dir / "figure_series.csv", series.str());
    write_manifest(dir, "simulate", simulate_config(opts, grid), seed, {});
    out << stats.computed << " cell(s) computed, " << stats.skipped << " reused from ledger\n";
  });
}

/// Re-runs the command recorded in a manifest into `out_dir` (or the
/// directory holding the manifest when empty). Input files must still match
/// their recorded digests. Thread count is not part of the manifest since it
/// never changes results.
inline int cmd_replay(const std::string& manifest_path, const std::string& out_dir,
                      std::optional<unsigned> threads, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
  nlohmann::json manifest;
  const int status = detail::guarded(err, [&] {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest '" + manifest_path + "'");
    manifest = nlohmann::json::parse(in);
    for (const auto& input : manifest.at("inputs")) {
      const auto path = input.at("path").get<std::string>();
      if (sha256_file(path) != input.at("sha256").get<std::string>()) {
        throw DataError("input '" + path + "' no longer matches its recorded digest");
      }
    }
  });
  if (status != 0) return status;

  const auto& cfg = manifest.at("config");
  std::string target = out_dir;
  if (target.empty()) target = fs::path(manifest_path).parent_path().string();
  if (target.empty()) target = ".";
  const std::string command = manifest.at("command").get<std::string>();
  if (command == "analyze" || command == "moe") {
    AuditOptions o;
    o.input = cfg.at("input").get<std::string>();
    o.out = target;
    o.replicates = cfg.at("replicates").get<std::size_t>();
    o.alpha = cfg.at("alpha").get<double>();
    o.seed = cfg.at("seed").get<std::uint64_t>();
    o.threads = threads.value_or(1u);
    return command == "analyze" ? cmd_analyze(o, out, err) : cmd_moe(o, out, err);
  }
  if (command == "simulate") {
    SimulateOptions o;
    o.profile = cfg.at("profile").get<std::string>();
    o.out = target;
    o.pi = cfg.at("pi").get<std::vector<double>>();
    o.rho = cfg.at("rho").get<std::vector<double>>();
    o.n = cfg.at("n").get<std::vector<std::size_t>>();
    o.m = cfg.at("m").get<std::vector<std::size_t>>();
    o.groups = cfg.at("G").get<std::vector<std::size_t>>();
    o.runs = cfg.at("runs").get<std::size_t>();
    o.replicates = cfg.at("replicates").get<std::size_t>();
    o.alpha = cfg.at("alpha").get<double>();
    o.seed = cfg.at("seed").get<std::uint64_t>();
    o.threads = threads.value_or(1u);
    return cmd_simulate(o, out, err);
  }
  err << "error: manifest names unknown command '" << command << "'\n";
  return 1;
}

}  // namespace fnmr::cli
