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

// Serialisation of test results: JSON reports, human-readable summaries and
// CSV tables for display.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "fnmr/bootstrap_ftest.hpp"
#include "fnmr/margin_of_error.hpp"
#include "json.hpp"

namespace fnmr {

inline nlohmann::json to_json(const GroupEstimates& g) {
  return {{"group_id", g.group_id}, {"pi_hat", g.pi_hat},         {"rho_hat", g.rho_hat},
          {"m0", g.m0},             {"n_pi", g.n_pi},             {"n_subjects", g.n_subjects},
          {"var_pi_hat", g.var_pi_hat}, {"rho_status", to_string(g.rho_status)}};
}

inline nlohmann::json to_json(const FTestResult& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) groups.push_back(to_json(g));
  return {{"f_observed", r.f_observed},
          {"p_value", r.p_value},
          {"alpha", r.alpha},
          {"K", r.replicates},
          {"seed", r.seed},
          {"pooled_pi_hat", r.pooled_pi_hat},
          {"reject_at_alpha", r.reject_at_alpha},
          {"groups", std::move(groups)},
          {"degenerate_replicates", r.degenerate_replicates}};
}

inline nlohmann::json to_json(const MoeResult& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) {
    groups.push_back({{"group_id", g.group_id}, {"pi_hat", g.pi_hat}, {"flagged", g.flagged}});
  }
  return {{"pooled_pi_hat", r.pooled_pi_hat},
          {"margin", r.margin},
          {"interval", {r.interval.lower, r.interval.upper}},
          {"alpha", r.alpha},
          {"K", r.replicates},
          {"seed", r.seed},
          {"groups", std::move(groups)},
          {"phi_distribution", r.phi_distribution}};
}

namespace detail {
inline std::string fixed(double value, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

inline std::string general(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}
}  // namespace detail

inline void write_summary(const FTestResult& r, std::ostream& out) {
  out << "Bootstrap F-test for equal FNMR across " << r.groups.size() << " groups\n";
  out << "K = " << r.replicates << ", alpha = " << detail::general(r.alpha)
      << ", seed = " << r.seed << "\n\n";
  out << "group\tsubjects\tdecisions\tpi_hat\trho_hat\tm0\n";
  for (const auto& g : r.groups) {
    out << g.group_id << '\t' << g.n_subjects << '\t' << g.n_pi << '\t'
        << detail::fixed(g.pi_hat) << '\t' << detail::fixed(g.rho_hat)
        << (g.degenerate() ? "*" : "") << '\t' << detail::fixed(g.m0, 3) << '\n';
  }
  out << "\npooled FNMR = " << detail::fixed(r.pooled_pi_hat) << '\n';
  out << "F = " << detail::general(r.f_observed) << ", p = " << detail::general(r.p_value)
      << '\n';
  if (r.degenerate_replicates > 0) {
    out << r.degenerate_replicates << " replicate(s) had an undefined statistic and were"
        << " counted as extreme\n";
  }
  if (r.reject_at_alpha) {
    out << "Result: detectable difference in FNMR among groups (p < "
        << detail::general(r.alpha) << ").\n";
  } else {
    out << "Result: no detectable difference in FNMR among groups at alpha = "
        << detail::general(r.alpha) << ".\n";
  }
  bool any_degenerate = false;
  for (const auto& g : r.groups) any_degenerate = any_degenerate || g.degenerate();
  if (any_degenerate) out << "* rho_hat not estimable for this group; reported as 0\n";
}

inline void write_summary(const MoeResult& r, std::ostream& out) {
  std::size_t flagged = 0;
  for (const auto& g : r.groups) flagged += g.flagged ? 1 : 0;
  out << "Margin of error across " << r.groups.size() << " groups\n";
  out << "K = " << r.replicates << ", alpha = " << detail::general(r.alpha)
      << ", seed = " << r.seed << "\n\n";
  out << "pooled FNMR = " << detail::general(r.pooled_pi_hat)
      << ", M = " << detail::general(r.margin) << '\n';
  out << "interval = (" << detail::general(r.interval.lower) << ", "
      << detail::general(r.interval.upper) << ")\n\n";
  out << "group\tpi_hat\tflagged\n";
  for (const auto& g : r.groups) {
    out << g.group_id << '\t' << detail::fixed(g.pi_hat) << '\t' << (g.flagged ? "yes" : "no")
        << '\n';
  }
  out << '\n' << flagged << " group(s) outside the interval.\n";
}

/// group_id,flagged
inline void write_flag_table(const MoeResult& r, std::ostream& out) {
  out << "group_id,flagged\n";
  for (const auto& g : r.groups) {
    out << detail::quote_csv(g.group_id) << ',' << (g.flagged ? 1 : 0) << '\n';
  }
}

/// Per-group FNMR with the pooled line and interval bounds, for plotting.
inline void write_interval_figure(const MoeResult& r, std::ostream& out) {
  out << "group_id,pi_hat,pooled_pi_hat,lower,upper,flagged\n";
  for (const auto& g : r.groups) {
    out << detail::quote_csv(g.group_id) << ',' << nlohmann::json(g.pi_hat).dump() << ','
        << nlohmann::json(r.pooled_pi_hat).dump() << ','
        << nlohmann::json(r.interval.lower).dump() << ','
        << nlohmann::json(r.interval.upper).dump() << ',' << (g.flagged ? 1 : 0) << '\n';
  }
}

}  // namespace fnmr
