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

// Single-group FNMR estimators under the exchangeable intra-subject
// correlation model: E[D] = pi, Corr(D_ij, D_ij') = rho for j != j', and
// decisions on different subjects uncorrelated.
//
// Everything here is computed from per-group integer sufficient statistics,
// so the bootstrap can evaluate replicates without materialising resampled
// decision vectors.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "fnmr/decision_data.hpp"

namespace fnmr {

/// Integer sums over subjects (e_i errors out of m_i attempts). Exact.
struct GroupStats {
  std::int64_t n_subjects = 0;
  std::int64_t errors = 0;         // sum e_i
  std::int64_t decisions = 0;      // sum m_i  (N_pi)
  std::int64_t error_pairs = 0;    // sum e_i (e_i - 1)
  std::int64_t mixed_pairs = 0;    // sum e_i (m_i - 1)
  std::int64_t attempt_pairs = 0;  // sum m_i (m_i - 1)

  void add_subject(std::int64_t e, std::int64_t m) noexcept {
    n_subjects += 1;
    errors += e;
    decisions += m;
    error_pairs += e * (e - 1);
    mixed_pairs += e * (m - 1);
    attempt_pairs += m * (m - 1);
  }

  std::int64_t attempts_squared() const noexcept { return attempt_pairs + decisions; }

  bool operator==(const GroupStats&) const = default;
};

inline GroupStats summarize(const GroupDataset& g) {
  GroupStats stats;
  for (const auto& s : g.subjects) {
    stats.add_subject(static_cast<std::int64_t>(s.errors()),
                      static_cast<std::int64_t>(s.attempts()));
  }
  return stats;
}

enum class RhoStatus {
  kEstimated,
  kDegenerateRate,  // pi_hat in {0, 1}; rho_hat reported as 0
  kInestimable,     // no subject with two or more attempts; rho_hat reported as 0
};

inline const char* to_string(RhoStatus status) noexcept {
  switch (status) {
    case RhoStatus::kEstimated: return "estimated";
    case RhoStatus::kDegenerateRate: return "degenerate_rate";
    case RhoStatus::kInestimable: return "inestimable";
  }
  return "unknown";
}

struct RhoEstimate {
  double value = 0.0;
  RhoStatus status = RhoStatus::kEstimated;
};

inline double fnmr_from_stats(const GroupStats& stats) {
  if (stats.decisions <= 0) throw DataError("FNMR undefined for a group with no decisions");
  return static_cast<double>(stats.errors) / static_cast<double>(stats.decisions);
}

/// Intra-class correlation estimate given the rate `p` used for centering.
///
/// The ordered-pair sum  sum_i sum_{j != j'} (D_ij - p)(D_ij' - p)  expands
/// per subject to  e(e-1) - 2p e(m-1) + p^2 m(m-1),  and the denominator
/// p(1-p) sum_i m_i(m_i-1) counts the same ordered pairs.
inline RhoEstimate rho_from_stats(const GroupStats& stats, double p) {
  if (stats.attempt_pairs == 0) return {0.0, RhoStatus::kInestimable};
  if (!(p > 0.0 && p < 1.0)) return {0.0, RhoStatus::kDegenerateRate};
  const long double lp = p;
  const long double numerator =
      static_cast<long double>(stats.error_pairs) -
      2.0L * lp * static_cast<long double>(stats.mixed_pairs) +
      lp * lp * static_cast<long double>(stats.attempt_pairs);
  const long double denominator =
      lp * (1.0L - lp) * static_cast<long double>(stats.attempt_pairs);
  return {static_cast<double>(numerator / denominator), RhoStatus::kEstimated};
}

inline double m0_from_stats(const GroupStats& stats) {
  if (stats.decisions <= 0) throw DataError("m0 undefined for a group with no decisions");
  return static_cast<double>(stats.attempts_squared()) /
         static_cast<double>(stats.decisions);
}

/// Total errors divided by total decisions.
inline double estimate_fnmr(const GroupDataset& g) { return fnmr_from_stats(summarize(g)); }

inline RhoEstimate estimate_rho(const GroupDataset& g) {
  const GroupStats stats = summarize(g);
  return rho_from_stats(stats, fnmr_from_stats(stats));
}

/// Effective attempts per subject: sum m_i^2 / N_pi. Equals m for balanced designs.
inline double compute_m0(const GroupDataset& g) { return m0_from_stats(summarize(g)); }

namespace detail {
inline void check_proportion(double pi) {
  if (!(pi >= 0.0 && pi <= 1.0)) {
    throw std::invalid_argument("proportion must lie in [0, 1], got " + std::to_string(pi));
  }
}
}  // namespace detail

/// Var[pi_hat] = pi (1 - pi) (1 + (m0 - 1) rho) / N_pi.
inline double variance_fnmr(double pi, double rho, const GroupStats& stats) {
  detail::check_proportion(pi);
  const double n_pi = static_cast<double>(stats.decisions);
  return pi * (1.0 - pi) * (1.0 + (m0_from_stats(stats) - 1.0) * rho) / n_pi;
}

inline double variance_fnmr(double pi, double rho, const GroupDataset& g) {
  return variance_fnmr(pi, rho, summarize(g));
}

/// Same variance written over pairs:
/// pi (1 - pi) [N_pi + rho sum_i m_i (m_i - 1)] / N_pi^2.
inline double variance_fnmr_pairs(double pi, double rho, const GroupStats& stats) {
  detail::check_proportion(pi);
  if (stats.decisions <= 0) throw DataError("variance undefined for a group with no decisions");
  const double n_pi = static_cast<double>(stats.decisions);
  return pi * (1.0 - pi) *
         (n_pi + rho * static_cast<double>(stats.attempt_pairs)) / (n_pi * n_pi);
}

inline double variance_fnmr_pairs(double pi, double rho, const GroupDataset& g) {
  return variance_fnmr_pairs(pi, rho, summarize(g));
}

struct GroupEstimates {
  std::string group_id;
  double pi_hat = 0.0;
  double rho_hat = 0.0;
  double m0 = 1.0;
  std::int64_t n_pi = 0;
  std::int64_t n_subjects = 0;
  double var_pi_hat = 0.0;
  RhoStatus rho_status = RhoStatus::kEstimated;

  bool degenerate() const noexcept { return rho_status != RhoStatus::kEstimated; }
};

inline GroupEstimates estimate_from_stats(std::string group_id, const GroupStats& stats) {
  if (stats.n_subjects <= 0) throw DataError("group '" + group_id + "' is empty");
  GroupEstimates est;
  est.group_id = std::move(group_id);
  est.pi_hat = fnmr_from_stats(stats);
  const RhoEstimate rho = rho_from_stats(stats, est.pi_hat);
  est.rho_hat = rho.value;
  est.rho_status = rho.status;
  est.m0 = m0_from_stats(stats);
  est.n_pi = stats.decisions;
  est.n_subjects = stats.n_subjects;
  est.var_pi_hat = variance_fnmr(est.pi_hat, est.rho_hat, stats);
  return est;
}

inline GroupEstimates estimate_group(const GroupDataset& g) {
  if (g.subjects.empty()) throw DataError("group '" + g.group_id + "' is empty");
  return estimate_from_stats(g.group_id, summarize(g));
}

}  // namespace fnmr
