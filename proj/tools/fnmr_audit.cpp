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

// fnmr_audit: FNMR equity audits from decision-level CSV files.
//
//   fnmr_audit analyze  --input decisions.csv --out results/ [--replicates K]
//   fnmr_audit moe      --input decisions.csv --out results/
//   fnmr_audit simulate --profile desk --out sim/ [--pi 0.05,0.1 --G 3,5 ...]
//   fnmr_audit replay   --manifest results/manifest.json --out rerun/
//
// Every option can also be set through an FNMR_AUDIT_<OPTION> environment
// variable (e.g. FNMR_AUDIT_SEED, FNMR_AUDIT_REPLICATES).

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "fnmr/cli.hpp"

namespace {

template <typename T>
CLI::Option* add_optional(CLI::App* app, const std::string& flag, std::optional<T>& target,
                          const std::string& help) {
  return app->add_option_function<T>(flag, [&target](const T& v) { target = v; }, help);
}

void add_audit_flags(CLI::App* cmd, fnmr::cli::AuditOptions& o,
                     std::optional<std::uint64_t>& seed) {
  cmd->add_option("--input", o.input, "Decision CSV (subject_id,group_id,attempt_index,decision)")
      ->required()
      ->check(CLI::ExistingFile)
      ->envname("FNMR_AUDIT_INPUT");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str()
      ->envname("FNMR_AUDIT_OUT");
  cmd->add_option("--replicates,-K", o.replicates, "Bootstrap replicates K")
      ->capture_default_str()
      ->check(CLI::PositiveNumber)
      ->envname("FNMR_AUDIT_REPLICATES");
  cmd->add_option("--alpha", o.alpha, "Significance level")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0))
      ->envname("FNMR_AUDIT_ALPHA");
  add_optional(cmd, "--seed", seed, "Random seed (drawn from entropy when omitted)")
      ->envname("FNMR_AUDIT_SEED");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores); never changes results")
      ->capture_default_str()
      ->envname("FNMR_AUDIT_THREADS");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit false non-match rate differences across demographic groups"};
  app.set_version_flag("--version", fnmr::kVersion);
  app.require_subcommand(1);

  fnmr::cli::AuditOptions analyze_opts, moe_opts;
  std::optional<std::uint64_t> analyze_seed, moe_seed;
  auto* analyze = app.add_subcommand("analyze", "Bootstrap F-test of equal FNMR across groups");
  add_audit_flags(analyze, analyze_opts, analyze_seed);
  auto* moe = app.add_subcommand("moe", "Margin of error around the pooled FNMR; flags outlying groups");
  add_audit_flags(moe, moe_opts, moe_seed);

  fnmr::cli::SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of the margin of error");
  simulate->add_option("--profile", sim.profile, "desk (reduced grid, R=200, K=499) or full (complete grid, R=1000, K=999)")
      ->capture_default_str()
      ->check(CLI::IsMember({"desk", "full"}))
      ->envname("FNMR_AUDIT_PROFILE");
  simulate->add_option("--out", sim.out, "Output directory")->capture_default_str()
      ->envname("FNMR_AUDIT_OUT");
  simulate->add_option("--pi", sim.pi, "FNMR values")->delimiter(',');
  simulate->add_option("--rho", sim.rho, "Intra-subject correlation values")->delimiter(',');
  simulate->add_option("--n", sim.n, "Subjects per group")->delimiter(',');
  simulate->add_option("--m", sim.m, "Attempts per subject")->delimiter(',');
  simulate->add_option("--G", sim.groups, "Group counts")->delimiter(',');
  add_optional(simulate, "--runs,-R", sim.runs, "Simulated studies per cell")
      ->envname("FNMR_AUDIT_RUNS");
  add_optional(simulate, "--replicates,-K", sim.replicates, "Bootstrap replicates per study")
      ->envname("FNMR_AUDIT_REPLICATES");
  simulate->add_option("--alpha", sim.alpha, "Significance level")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0))
      ->envname("FNMR_AUDIT_ALPHA");
  add_optional(simulate, "--seed", sim.seed, "Random seed (drawn from entropy when omitted)")
      ->envname("FNMR_AUDIT_SEED");
  simulate->add_option("--threads", sim.threads, "Worker threads (0 = all cores)")
      ->capture_default_str()
      ->envname("FNMR_AUDIT_THREADS");

  std::string manifest, replay_out;
  std::optional<unsigned> replay_threads;
  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest.json");
  replay->add_option("--manifest", manifest, "Path to manifest.json")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("--out", replay_out, "Output directory (default: the manifest's directory)");
  add_optional(replay, "--threads", replay_threads, "Worker threads");

  CLI11_PARSE(app, argc, argv);

  if (*analyze) {
    analyze_opts.seed = analyze_seed;
    return fnmr::cli::cmd_analyze(analyze_opts);
  }
  if (*moe) {
    moe_opts.seed = moe_seed;
    return fnmr::cli::cmd_moe(moe_opts);
  }
  if (*simulate) return fnmr::cli::cmd_simulate(sim);
  return fnmr::cli::cmd_replay(manifest, replay_out, replay_threads);
}
