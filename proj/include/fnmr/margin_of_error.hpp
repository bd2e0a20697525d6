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

// Margin-of-error method: a single half-width M around the pooled FNMR such
// that, when all groups share one FNMR, the largest bootstrap deviation of a
// group rate from the pooled rate stays within M with probability 1 - alpha/2.
// Groups whose observed FNMR falls outside (pooled - M, pooled + M) are
// flagged as detectably different.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fnmr/bootstrap_ftest.hpp"

namespace fnmr {

/// max_g |centered_g - pooled|.
inline double max_abs_deviation(std::span<const double> centered, double pooled) {
  if (centered.size() < 2) throw DataError("at least two group rates are required");
  double phi = 0.0;
  for (double c : centered) phi = std::max(phi, std::abs(c - pooled));
  return phi;
}

/// 0-based index of the nearest-rank order statistic: ceil(level * count) - 1,
/// clamped to [0, count). A 1e-9 slack absorbs representation error in
/// products such as 0.975 * 1000.
inline std::size_t nearest_rank_index(double level, std::size_t count) {
  if (count == 0) throw std::invalid_argument("quantile of an empty sample");
  if (!(level > 0.0 && level <= 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1]");
  const double rank = std::ceil(level * static_cast<double>(count) - 1e-9);
  const auto clamped = std::clamp(rank, 1.0, static_cast<double>(count));
  return static_cast<std::size_t>(clamped) - 1;
}

inline double nearest_rank_quantile(std::vector<double> sample, double level) {
  const std::size_t idx = nearest_rank_index(level, sample.size());
  std::nth_element(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(idx),
                   sample.end());
  return sample[idx];
}

struct MoeGroup {
  std::string group_id;
  double pi_hat = 0.0;
  bool flagged = false;
};

struct MoeInterval {
  double lower = 0.0;
  double upper = 0.0;

  /// Strictly outside the interval.
  bool flags(double pi_hat) const noexcept { return pi_hat < lower || pi_hat > upper; }
};

inline MoeInterval moe_interval(double pooled, double margin) {
  if (!(margin >= 0.0)) throw std::invalid_argument("margin must be non-negative");
  return {pooled - margin, pooled + margin};
}

struct MoeResult {
  double pooled_pi_hat = 0.0;
  double margin = 0.0;
  MoeInterval interval;
  std::vector<MoeGroup> groups;  // input order
  std::vector<double> phi_distribution;  // replicate order
  double alpha = 0.05;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
};

/// Interval and flags for given group rates; the decision rule alone.
inline std::vector<MoeGroup> flag_groups(const MoeInterval& interval,
                                         std::span<const GroupEstimates> groups) {
  std::vector<MoeGroup> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back({g.group_id, g.pi_hat, interval.flags(g.pi_hat)});
  return out;
}

namespace detail {

inline double replicate_phi(const PreparedStudy& prep, std::uint64_t seed,
                            std::uint64_t replicate) {
  const std::size_t groups = prep.tables.size();
  // (centered - pooled) is exactly (resampled rate - group rate); using that
  // form keeps phi free of rounding through the pooled rate, so a group's
  // contribution does not depend on which other groups are in the study.
  std::vector<double> shift(groups);
  for (std::size_t k = 0; k < groups; ++k) {
    Stream rng = replicate_stream(seed, replicate, prep.estimates[k].group_id);
    const GroupStats stats = resample_stats(prep.tables[k], rng);
    shift[k] = centered_bootstrap_fnmr(fnmr_from_stats(stats), prep.estimates[k].pi_hat, 0.0);
  }
  return max_abs_deviation(shift, 0.0);
}

}  // namespace detail

/// M is the nearest-rank (1 - alpha/2) quantile of the K stored maxima.
inline MoeResult margin_of_error(const StudyDataset& study, const BootstrapConfig& cfg) {
  cfg.validate();
  const auto prep = detail::prepare(study);

  MoeResult result;
  result.alpha = cfg.alpha;
  result.replicates = cfg.replicates;
  result.seed = cfg.seed;
  result.pooled_pi_hat = prep.pooled;
  result.phi_distribution.resize(cfg.replicates);
  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
    result.phi_distribution[r] = detail::replicate_phi(prep, cfg.seed, r);
  });
  result.margin = nearest_rank_quantile(result.phi_distribution, 1.0 - cfg.alpha / 2.0);
  result.interval = moe_interval(result.pooled_pi_hat, result.margin);
  result.groups = flag_groups(result.interval, detail::in_input_order(prep));
  return result;
}

}  // namespace fnmr
