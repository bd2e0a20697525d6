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

// Subject-level bootstrap test of H0: all group FNMRs are equal.
//
// The observed statistic compares between-group spread of the FNMRs to their
// pooled within-group variance (accounting for intra-subject correlation).
// The reference distribution is built by resampling subjects with
// replacement inside each group, keeping each drawn subject's full decision
// vector, and shifting every bootstrap group rate by (pooled - group rate) so
// that all groups share the pooled FNMR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fnmr/decision_data.hpp"
#include "fnmr/estimators.hpp"
#include "fnmr/parallel.hpp"
#include "fnmr/rng.hpp"

namespace fnmr {

/// Raised when the F ratio has a non-positive denominator.
class UndefinedStatistic : public std::runtime_error {
 public:
  UndefinedStatistic(const std::string& what, std::vector<double> variance_terms)
      : std::runtime_error(what), variance_terms_(std::move(variance_terms)) {}

  /// Per-group N_pi * pi(1-pi) * (1 + (m0-1) rho) contributions.
  const std::vector<double>& variance_terms() const noexcept { return variance_terms_; }

 private:
  std::vector<double> variance_terms_;
};

struct BootstrapConfig {
  std::size_t replicates = 999;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;  // 0 = hardware concurrency; never affects results

  void validate() const {
    if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw std::invalid_argument("alpha must lie in (0, 1)");
    }
  }
};

/// Drawn subject indices (0-based) for one group, one per slot.
struct ResamplePlan {
  std::vector<std::size_t> indices;
};

/// Stream for replicate `replicate` of the group labelled `group_id`.
/// Keyed by label rather than position so group order never matters.
inline Stream replicate_stream(std::uint64_t seed, std::uint64_t replicate,
                               std::string_view group_id) {
  return Stream(derive_key(seed, replicate, fnv1a64(group_id)));
}

inline ResamplePlan draw_plan(std::size_t n_subjects, Stream& rng) {
  ResamplePlan plan;
  plan.indices.resize(n_subjects);
  for (auto& idx : plan.indices) idx = static_cast<std::size_t>(rng.below(n_subjects));
  return plan;
}

inline GroupDataset resample_group(const GroupDataset& g, const ResamplePlan& plan) {
  if (plan.indices.size() != g.subjects.size()) {
    throw std::invalid_argument("resample plan length differs from group size");
  }
  GroupDataset out;
  out.group_id = g.group_id;
  out.subjects.reserve(plan.indices.size());
  for (std::size_t slot = 0; slot < plan.indices.size(); ++slot) {
    const std::size_t idx = plan.indices[slot];
    if (idx >= g.subjects.size()) {
      throw std::out_of_range("resample plan index out of range");
    }
    out.subjects.push_back(g.subjects[idx]);
  }
  return out;
}

inline GroupDataset resample_group(const GroupDataset& g, Stream& rng) {
  return resample_group(g, draw_plan(g.subjects.size(), rng));
}

/// Per-subject (errors, attempts), the only data the bootstrap needs.
struct SubjectTable {
  std::vector<std::int64_t> errors;
  std::vector<std::int64_t> attempts;

  explicit SubjectTable(const GroupDataset& g) {
    errors.reserve(g.subjects.size());
    attempts.reserve(g.subjects.size());
    for (const auto& s : g.subjects) {
      errors.push_back(static_cast<std::int64_t>(s.errors()));
      attempts.push_back(static_cast<std::int64_t>(s.attempts()));
    }
  }

  std::size_t size() const noexcept { return errors.size(); }
};

/// Sufficient statistics of a resampled group. Consumes the stream exactly as
/// draw_plan does, so summarize(resample_group(g, rng)) gives the same value.
inline GroupStats resample_stats(const SubjectTable& table, Stream& rng) {
  GroupStats stats;
  const std::size_t n = table.size();
  for (std::size_t slot = 0; slot < n; ++slot) {
    const auto idx = static_cast<std::size_t>(rng.below(n));
    stats.add_subject(table.errors[idx], table.attempts[idx]);
  }
  return stats;
}

/// Bootstrap rate shifted onto the pooled FNMR. May fall outside [0, 1].
inline double centered_bootstrap_fnmr(double resampled_rate, double pi_hat_g,
                                      double pooled) noexcept {
  return resampled_rate - pi_hat_g + pooled;
}

inline double centered_bootstrap_fnmr(const GroupDataset& resampled, double pi_hat_g,
                                      double pooled) {
  return centered_bootstrap_fnmr(estimate_fnmr(resampled), pi_hat_g, pooled);
}

namespace detail {

// Weighted mean that returns the common value exactly when all values agree.
inline double weighted_rate(std::span<const double> values,
                            std::span<const double> weights) {
  if (std::all_of(values.begin(), values.end(),
                  [&](double v) { return v == values.front(); })) {
    return values.front();
  }
  long double num = 0.0L, den = 0.0L;
  for (std::size_t g = 0; g < values.size(); ++g) {
    num += static_cast<long double>(weights[g]) * values[g];
    den += weights[g];
  }
  return static_cast<double>(num / den);
}

struct FParts {
  double numerator = 0.0;    // between-group mean square
  double denominator = 0.0;  // pooled within-group variance
  std::vector<double> variance_terms;
};

// Shared by the observed and bootstrap statistics. `variance_rate` is the
// rate used in the pi(1-pi) factor; bootstrap replicates clamp it at zero.
inline FParts f_parts(std::span<const double> rates, std::span<const double> weights,
                      std::span<const double> m0, std::span<const double> rho,
                      double pooled, bool clamp_variance) {
  const std::size_t groups = rates.size();
  long double between = 0.0L, within = 0.0L, total_weight = 0.0L;
  FParts parts;
  parts.variance_terms.resize(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    const long double diff = static_cast<long double>(rates[g]) - pooled;
    between += weights[g] * diff * diff;
    double pq = rates[g] * (1.0 - rates[g]);
    if (clamp_variance) pq = std::max(0.0, pq);
    const double term = weights[g] * pq * (1.0 + (m0[g] - 1.0) * rho[g]);
    parts.variance_terms[g] = term;
    within += term;
    total_weight += weights[g];
  }
  parts.numerator = static_cast<double>(between / static_cast<long double>(groups - 1));
  const long double dof = total_weight - static_cast<long double>(groups);
  parts.denominator = dof > 0 ? static_cast<double>(within / dof) : 0.0;
  return parts;
}

inline void check_group_count(std::size_t groups) {
  if (groups < 2) {
    throw DataError("at least two groups are required, got " + std::to_string(groups));
  }
}

}  // namespace detail

/// N_pi-weighted average of the group FNMRs.
inline double pooled_fnmr(std::span<const GroupEstimates> groups) {
  detail::check_group_count(groups.size());
  std::vector<double> rates, weights;
  for (const auto& g : groups) {
    if (g.n_pi <= 0) throw DataError("group '" + g.group_id + "' has no decisions");
    rates.push_back(g.pi_hat);
    weights.push_back(static_cast<double>(g.n_pi));
  }
  return detail::weighted_rate(rates, weights);
}

/// Between-group mean square over pooled within-group variance, with N - G
/// denominator degrees of freedom (N = total decisions). Zero whenever every
/// group rate equals the pooled rate.
inline double f_statistic(std::span<const GroupEstimates> groups, double pooled) {
  detail::check_group_count(groups.size());
  std::vector<double> rates, weights, m0, rho;
  for (const auto& g : groups) {
    rates.push_back(g.pi_hat);
    weights.push_back(static_cast<double>(g.n_pi));
    m0.push_back(g.m0);
    rho.push_back(g.rho_hat);
  }
  const auto parts = detail::f_parts(rates, weights, m0, rho, pooled, false);
  if (parts.numerator == 0.0) return 0.0;
  if (!(parts.denominator > 0.0) || !std::isfinite(parts.denominator)) {
    throw UndefinedStatistic("F statistic undefined: pooled within-group variance is not positive",
                             parts.variance_terms);
  }
  return parts.numerator / parts.denominator;
}

/// p = (1 + #{reference >= observed}) / (K + 1).
inline double bootstrap_p_value(double f_observed, std::span<const double> reference) {
  const auto extreme = std::count_if(reference.begin(), reference.end(),
                                     [&](double f) { return f >= f_observed; });
  return (1.0 + static_cast<double>(extreme)) /
         (static_cast<double>(reference.size()) + 1.0);
}

struct FTestResult {
  double f_observed = 0.0;
  /// One statistic per replicate; +infinity marks an undefined replicate.
  std::vector<double> f_reference;
  double p_value = 1.0;
  double pooled_pi_hat = 0.0;
  std::vector<GroupEstimates> groups;  // input order
  bool reject_at_alpha = false;
  std::size_t degenerate_replicates = 0;
  double alpha = 0.05;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
};

namespace detail {

// Groups in label order, with the tables the resampler needs.
struct PreparedStudy {
  std::vector<std::size_t> order;  // order[k] = input index of k-th group by label
  std::vector<SubjectTable> tables;
  std::vector<GroupEstimates> estimates;  // label order
  double pooled = 0.0;
};

inline PreparedStudy prepare(const StudyDataset& study) {
  study.validate();
  check_group_count(study.groups.size());
  PreparedStudy prep;
  prep.order.resize(study.groups.size());
  std::iota(prep.order.begin(), prep.order.end(), std::size_t{0});
  std::sort(prep.order.begin(), prep.order.end(), [&](std::size_t a, std::size_t b) {
    return study.groups[a].group_id < study.groups[b].group_id;
  });
  for (std::size_t idx : prep.order) {
    const auto& g = study.groups[idx];
    prep.tables.emplace_back(g);
    prep.estimates.push_back(estimate_group(g));
  }
  prep.pooled = pooled_fnmr(prep.estimates);
  return prep;
}

inline std::vector<GroupEstimates> in_input_order(const PreparedStudy& prep) {
  std::vector<GroupEstimates> out(prep.order.size());
  for (std::size_t k = 0; k < prep.order.size(); ++k) out[prep.order[k]] = prep.estimates[k];
  return out;
}

// One bootstrap F value, or +infinity when undefined.
inline double replicate_f(const PreparedStudy& prep, std::uint64_t seed,
                          std::uint64_t replicate) {
  const std::size_t groups = prep.tables.size();
  std::vector<double> centered(groups), weights(groups), m0(groups), rho(groups);
  for (std::size_t k = 0; k < groups; ++k) {
    Stream rng = replicate_stream(seed, replicate, prep.estimates[k].group_id);
    const GroupStats stats = resample_stats(prep.tables[k], rng);
    const double raw = fnmr_from_stats(stats);
    centered[k] = centered_bootstrap_fnmr(raw, prep.estimates[k].pi_hat, prep.pooled);
    weights[k] = static_cast<double>(stats.decisions);
    m0[k] = m0_from_stats(stats);
    rho[k] = rho_from_stats(stats, raw).value;
  }
  const double pooled_b = weighted_rate(centered, weights);
  const auto parts = f_parts(centered, weights, m0, rho, pooled_b, true);
  if (parts.numerator == 0.0) return 0.0;
  if (!(parts.denominator > 0.0) || !std::isfinite(parts.denominator)) {
    return std::numeric_limits<double>::infinity();
  }
  return parts.numerator / parts.denominator;
}

}  // namespace detail

inline FTestResult bootstrap_f_test(const StudyDataset& study, const BootstrapConfig& cfg) {
  cfg.validate();
  const auto prep = detail::prepare(study);

  FTestResult result;
  result.alpha = cfg.alpha;
  result.replicates = cfg.replicates;
  result.seed = cfg.seed;
  result.pooled_pi_hat = prep.pooled;
  result.groups = detail::in_input_order(prep);
  result.f_observed = f_statistic(prep.estimates, prep.pooled);

  result.f_reference.resize(cfg.replicates);
  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
    result.f_reference[r] = detail::replicate_f(prep, cfg.seed, r);
  });
  result.degenerate_replicates = static_cast<std::size_t>(
      std::count_if(result.f_reference.begin(), result.f_reference.end(),
                    [](double f) { return std::isinf(f); }));
  result.p_value = bootstrap_p_value(result.f_observed, result.f_reference);
  result.reject_at_alpha = result.p_value < cfg.alpha;
  return result;
}

}  // namespace fnmr
