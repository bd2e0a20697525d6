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

// Acceptance suite. Runs every criterion at its pinned tolerance, prints one
// PASS/FAIL line per criterion and exits non-zero if any criterion fails.
//
//   acceptance [criterion-number ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "fixtures.hpp"
#include "fnmr/fnmr.hpp"
#include "json.hpp"

namespace fnmr::acceptance {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// 1. rho_hat equals the triple-loop oracle.

Outcome estimator_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(kOracleSeed);
  int compared = 0;
  double worst = 0.0;
  while (compared < kOracleDatasets) {
    const auto g = testing::random_group(rng, "A", 6, 4);
    const double oracle = testing::brute_force_rho(g);
    const auto est = estimate_rho(g);
    if (std::isnan(oracle)) {
      if (est.status == RhoStatus::kEstimated) return {false, "estimator defined where oracle is not"};
      continue;
    }
    worst = std::max(worst, std::abs(est.value - oracle));
    ++compared;
  }
  const double elapsed = seconds_since(start);
  return {worst <= kOracleTolerance && elapsed < kFastRuntimeSeconds,
          std::to_string(compared) + " datasets, max |diff| = " + num(worst) + ", " +
              num(elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Variance identity and balanced reduction.

Outcome variance_identity() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(kOracleSeed + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_identity = 0.0, worst_balanced = 0.0;
  for (int trial = 0; trial < kVarianceConfigurations; ++trial) {
    const auto g = testing::random_group(rng, "A", 40, 10);
    const double pi = unit(rng);
    const double rho = 2.0 * unit(rng) - 1.0;
    const double eq6 = variance_fnmr(pi, rho, g);
    const double eq4 = variance_fnmr_pairs(pi, rho, g);
    if (eq4 != 0.0) worst_identity = std::max(worst_identity, std::abs(eq6 - eq4) / std::abs(eq4));

    // Balanced copy: every subject gets the same number of attempts.
    GroupDataset balanced = g;
    const std::size_t m = 1 + static_cast<std::size_t>(trial % 8);
    for (auto& s : balanced.subjects) s.decisions.assign(m, 0);
    const double n = static_cast<double>(balanced.n_subjects());
    const double closed = pi * (1 - pi) * (1 + (static_cast<double>(m) - 1) * rho) /
                          (n * static_cast<double>(m));
    const double v = variance_fnmr(pi, rho, balanced);
    if (closed != 0.0) worst_balanced = std::max(worst_balanced, std::abs(v - closed) / std::abs(closed));
  }
  const double elapsed = seconds_since(start);
  return {worst_identity <= kVarianceRelTolerance && worst_balanced <= kVarianceRelTolerance &&
              elapsed < kFastRuntimeSeconds,
          "max rel diff identity = " + num(worst_identity) + ", balanced = " +
              num(worst_balanced) + ", " + num(elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// Shared generators for the Monte Carlo criteria.

SimConfig h0_config(std::uint64_t seed, std::size_t n) {
  SimConfig cfg;
  cfg.pi = 0.1;
  cfg.rho = 0.15;
  cfg.n = n;
  cfg.m = 3;
  cfg.groups = 5;
  cfg.seed = seed;
  return cfg;
}

// 3. Type-I error of the F-test.

Outcome type_one_calibration() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<int> rejected(kTypeIStudies);
  parallel_for(kTypeIStudies, 0, [&](std::size_t s) {
    const auto cfg = h0_config(derive_key(kTypeISeed, s), 200);
    const auto study = generate_study(cfg, 0);
    const auto r = bootstrap_f_test(study, {999, 0.05, derive_key(kTypeISeed, s, 1), 1});
    rejected[s] = r.reject_at_alpha ? 1 : 0;
  });
  const double rate =
      std::accumulate(rejected.begin(), rejected.end(), 0.0) / static_cast<double>(kTypeIStudies);
  const double elapsed = seconds_since(start);
  return {rate >= kTypeILow && rate <= kTypeIHigh && elapsed < kTypeIRuntimeSeconds,
          "rejection fraction = " + num(rate) + " over " + std::to_string(kTypeIStudies) +
              " studies (band [" + num(kTypeILow) + ", " + num(kTypeIHigh) + "]), " +
              num(elapsed) + " s"};
}

// 4. Power with one group shifted to pi = 0.2.

Outcome power_smoke() {
  std::vector<int> rejected(kPowerStudies);
  parallel_for(kPowerStudies, 0, [&](std::size_t s) {
    const auto cfg = h0_config(derive_key(kPowerSeed, s), 200);
    auto study = generate_study(cfg, 0);
    Stream rng(derive_key(kPowerSeed, s, 2));
    study.groups.back() = generate_group(0.2, cfg.rho, cfg.n, cfg.m, rng, study.groups.back().group_id);
    const auto r = bootstrap_f_test(study, {999, 0.05, derive_key(kPowerSeed, s, 1), 1});
    rejected[s] = r.reject_at_alpha ? 1 : 0;
  });
  const double rate =
      std::accumulate(rejected.begin(), rejected.end(), 0.0) / static_cast<double>(kPowerStudies);
  return {rate >= kPowerThreshold, "rejection fraction = " + num(rate) + " over " +
                                       std::to_string(kPowerStudies) + " studies (>= " +
                                       num(kPowerThreshold) + ")"};
}

// 5. Margin-of-error flag rate under H0.

Outcome moe_calibration() {
  std::vector<int> any_flag(kMoeStudies);
  parallel_for(kMoeStudies, 0, [&](std::size_t s) {
    const auto cfg = h0_config(derive_key(kMoeSeed, s), 400);
    const auto study = generate_study(cfg, 0);
    const auto r = margin_of_error(study, {999, 0.05, derive_key(kMoeSeed, s, 1), 1});
    any_flag[s] = std::any_of(r.groups.begin(), r.groups.end(),
                              [](const MoeGroup& g) { return g.flagged; })
                      ? 1
                      : 0;
  });
  const double rate =
      std::accumulate(any_flag.begin(), any_flag.end(), 0.0) / static_cast<double>(kMoeStudies);
  return {rate >= kMoeLow && rate <= kMoeHigh,
          "fraction of studies with >= 1 flag = " + num(rate) + " over " +
              std::to_string(kMoeStudies) + " studies (band [" + num(kMoeLow) + ", " +
              num(kMoeHigh) + "])"};
}

// 6. Interval arithmetic: 0.10 +/- 0.03.

Outcome interval_arithmetic() {
  const auto interval = moe_interval(0.10, 0.03);
  std::vector<GroupEstimates> groups(5);
  const double rates[] = {0.05, 0.07, 0.10, 0.12, 0.14};
  for (std::size_t g = 0; g < 5; ++g) {
    groups[g].group_id = "g" + std::to_string(g);
    groups[g].pi_hat = rates[g];
  }
  const auto flags = flag_groups(interval, groups);
  const bool bounds = std::abs(interval.lower - 0.07) <= 1e-15 &&
                      std::abs(interval.upper - 0.13) <= 1e-15;
  const bool flagged_ok = flags[0].flagged && !flags[1].flagged && !flags[2].flagged &&
                          !flags[3].flagged && flags[4].flagged;
  MoeResult report;
  report.pooled_pi_hat = 0.10;
  report.margin = 0.03;
  report.interval = interval;
  report.groups = flags;
  std::ostringstream text;
  write_summary(report, text);
  const bool printed = text.str().find("interval = (0.07, 0.13)") != std::string::npos;
  return {bounds && flagged_ok && printed,
          "interval = (" + num(interval.lower) + ", " + num(interval.upper) +
              "), flagged {0.05, 0.14}, kept {0.07, 0.10, 0.12}"};
}

// ---------------------------------------------------------------------------
// 7 and 8. Simulation trends.

struct CellKey {
  double pi, rho;
  std::size_t n, m, groups;
  auto operator<=>(const CellKey&) const = default;
};

class CellCache {
 public:
  explicit CellCache(std::uint64_t seed) : seed_(seed) {}

  double median(const CellKey& k) {
    if (auto it = cache_.find(k); it != cache_.end()) return it->second;
    SimConfig cfg{k.pi, k.rho, k.n, k.m, k.groups, kDeskRuns, kDeskReplicates, 0.05, 0};
    cfg.seed = derive_key(seed_, fnv1a64(cfg.parameter_key()));
    const double m = run_cell(cfg, 0).median();
    cache_[k] = m;
    return m;
  }

 private:
  std::uint64_t seed_;
  std::map<CellKey, double> cache_;
};

// Adjacent pairs that move against `increasing`.
int inversions(const std::vector<double>& curve, bool increasing) {
  int count = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (increasing ? curve[i] < curve[i - 1] : curve[i] > curve[i - 1]) ++count;
  }
  return count;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + num(x);
  return s;
}

Outcome simulation_trends() {
  const auto start = std::chrono::steady_clock::now();
  CellCache cells(kTrendSeed);
  const std::vector<double> pis = {0.025, 0.05, 0.10, 0.15, 0.20};
  const std::vector<std::size_t> gs = {3, 4, 5, 6, 10, 15, 20, 30};
  const double rho = 0.05;
  bool ok = true;
  std::ostringstream detail;

  // M vs G per pi (n = 100, m = 2): nondecreasing, flattening past G = 10.
  int worst_g = 0, flatten_fail = 0;
  for (double pi : pis) {
    std::vector<double> curve;
    for (std::size_t g : gs) curve.push_back(cells.median({pi, rho, 100, 2, g}));
    worst_g = std::max(worst_g, inversions(curve, true));
    const double early = (curve[4] - curve[0]) / 7.0;   // G 3 -> 10
    const double late = (curve[7] - curve[4]) / 20.0;   // G 10 -> 30
    if (!(late < early)) ++flatten_fail;
    std::cerr << "  M vs G (pi=" << pi << "): " << join(curve) << '\n';
  }
  ok = ok && worst_g <= kAllowedInversions && flatten_fail == 0;
  detail << "G: max inversions " << worst_g << ", flattening failures " << flatten_fail;

  // M vs pi at every G: increasing.
  int worst_pi = 0;
  for (std::size_t g : gs) {
    std::vector<double> curve;
    for (double pi : pis) curve.push_back(cells.median({pi, rho, 100, 2, g}));
    worst_pi = std::max(worst_pi, inversions(curve, true));
  }
  ok = ok && worst_pi <= kAllowedInversions;
  detail << "; pi: max inversions " << worst_pi;

  // M vs n and M vs m (pi = 0.1) at G in {3, 10, 30}: decreasing.
  int worst_n = 0, worst_m = 0;
  for (std::size_t g : {3u, 10u, 30u}) {
    std::vector<double> by_n, by_m;
    for (std::size_t n : {100u, 200u, 800u}) by_n.push_back(cells.median({0.10, rho, n, 2, g}));
    for (std::size_t m : {2u, 3u, 6u}) by_m.push_back(cells.median({0.10, rho, 100, m, g}));
    worst_n = std::max(worst_n, inversions(by_n, false));
    worst_m = std::max(worst_m, inversions(by_m, false));
    std::cerr << "  G=" << g << " M vs n {100,200,800}: " << join(by_n)
              << " | M vs m {2,3,6}: " << join(by_m) << '\n';
  }
  ok = ok && worst_n <= kAllowedInversions && worst_m <= kAllowedInversions;
  const double elapsed = seconds_since(start);
  ok = ok && elapsed < kTrendRuntimeSeconds;
  detail << "; n: max inversions " << worst_n << "; m: max inversions " << worst_m << "; "
         << num(elapsed) << " s";
  return {ok, detail.str()};
}

Outcome sensitivity_ordering() {
  CellCache cells(kSensitivitySeed);
  bool ok = true;
  std::ostringstream detail;
  for (std::size_t g : {5u, 10u}) {
    auto range = [](const std::vector<double>& v) {
      return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
    };
    std::vector<double> by_n, by_pi, by_m, by_rho;
    for (std::size_t n : {100u, 200u, 400u, 800u}) by_n.push_back(cells.median({0.10, 0.05, n, 2, g}));
    for (double pi : {0.025, 0.05, 0.10, 0.15, 0.20}) by_pi.push_back(cells.median({pi, 0.05, 400, 2, g}));
    for (std::size_t m : {2u, 3u, 4u, 6u, 10u}) by_m.push_back(cells.median({0.10, 0.05, 400, m, g}));
    for (double rho : {0.05, 0.15, 0.25, 0.35, 0.45}) by_rho.push_back(cells.median({0.10, rho, 400, 2, g}));
    const double rn = range(by_n), rp = range(by_pi), rm = range(by_m), rr = range(by_rho);
    ok = ok && rn > rp && rp > rm && rp > rr;
    detail << (detail.tellp() > 0 ? "; " : "") << "G=" << g << " ranges n=" << num(rn)
           << " pi=" << num(rp) << " m=" << num(rm) << " rho=" << num(rr);
  }
  return {ok, detail.str()};
}

// ---------------------------------------------------------------------------
// 9. Determinism through the CLI: thread count and manifest replay.

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string manifest_without_timestamp(const fs::path& path) {
  auto doc = nlohmann::json::parse(slurp(path));
  doc.erase("timestamp");
  return doc.dump();
}

int run(const std::string& command) {
  return std::system((command + " > /dev/null 2>&1").c_str());
}

// Compares every file in two output directories (manifest minus timestamp).
bool same_outputs(const fs::path& a, const fs::path& b, std::string& why) {
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) names.insert(e.path().filename().string());
  for (const auto& name : names) {
    if (!fs::exists(a / name) || !fs::exists(b / name)) {
      why = name + " missing";
      return false;
    }
    const bool equal = name == "manifest.json"
                           ? manifest_without_timestamp(a / name) == manifest_without_timestamp(b / name)
                           : slurp(a / name) == slurp(b / name);
    if (!equal) {
      why = name + " differs";
      return false;
    }
  }
  return !names.empty();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "fnmr_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string exe = FNMR_AUDIT_EXE;

  SimConfig cfg{0.1, 0.15, 120, 3, 6, 1, 1, 0.05, kDeterminismSeed};
  auto study = generate_study(cfg, 0);
  Stream rng(kDeterminismSeed + 1);
  study.groups[2] = generate_group(0.2, 0.15, 120, 3, rng, study.groups[2].group_id);
  const auto csv = root / "study.csv";
  write_csv(study, csv.string());

  std::vector<std::string> checked;
  std::string why;
  auto check = [&](const std::string& label, const fs::path& a, const fs::path& b) {
    if (!same_outputs(a, b, why)) {
      why = label + ": " + why;
      return false;
    }
    checked.push_back(label);
    return true;
  };

  for (const std::string cmd : {"analyze", "moe"}) {
    const auto one = root / (cmd + "_t1"), four = root / (cmd + "_t4"), replay = root / (cmd + "_replay");
    const std::string base = exe + " " + cmd + " --input " + csv.string() +
                             " --replicates 999 --alpha 0.05 --seed 12345";
    if (run(base + " --threads 1 --out " + one.string()) != 0 ||
        run(base + " --threads 4 --out " + four.string()) != 0 ||
        run(exe + " replay --threads 2 --manifest " + (one / "manifest.json").string() +
            " --out " + replay.string()) != 0) {
      return {false, cmd + ": command failed"};
    }
    if (!check(cmd + " threads", one, four) || !check(cmd + " replay", one, replay)) {
      return {false, why};
    }
  }

  const auto sim1 = root / "sim_t1", sim3 = root / "sim_t3", sim_replay = root / "sim_replay";
  const std::string sim = exe +
                          " simulate --pi 0.05,0.1 --rho 0.05 --n 60 --m 2 --G 3,5 --runs 20"
                          " --replicates 99 --seed 777";
  if (run(sim + " --threads 1 --out " + sim1.string()) != 0 ||
      run(sim + " --threads 3 --out " + sim3.string()) != 0 ||
      run(exe + " replay --manifest " + (sim1 / "manifest.json").string() + " --out " +
          sim_replay.string()) != 0) {
    return {false, "simulate: command failed"};
  }
  if (!check("simulate threads", sim1, sim3) || !check("simulate replay", sim1, sim_replay)) {
    return {false, why};
  }

  // Library level: full bootstrap output, not just the serialised fields.
  const auto a = bootstrap_f_test(study, {999, 0.05, 5, 1});
  const auto b = bootstrap_f_test(study, {999, 0.05, 5, 4});
  if (a.f_reference != b.f_reference || a.p_value != b.p_value) {
    return {false, "library F reference differs across thread counts"};
  }
  checked.push_back("library");
  std::string list;
  for (const auto& c : checked) list += (list.empty() ? "" : ", ") + c;
  return {true, "bit-identical: " + list};
}

}  // namespace
}  // namespace fnmr::acceptance

int main(int argc, char** argv) {
  using namespace fnmr::acceptance;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"estimator oracle equivalence", estimator_oracle},
      {"variance identity", variance_identity},
      {"type-I calibration of the bootstrap F-test", type_one_calibration},
      {"power smoke test", power_smoke},
      {"margin-of-error calibration", moe_calibration},
      {"interval arithmetic (0.10 +/- 0.03)", interval_arithmetic},
      {"simulation trend reproduction", simulation_trends},
      {"sensitivity ordering at n=400, pi=0.10, rho=0.05, m=2", sensitivity_ordering},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += outcome.pass ? 0 : 1;
    std::cout << (outcome.pass ? "[PASS] " : "[FAIL] ") << id << ". " << criteria[i].first
              << " -- " << outcome.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
