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

// Frozen parameters for the acceptance runs. Thresholds are fixed here and
// never tuned after seeing results; seeds were chosen once, up front.

#include <cstdint>

namespace fnmr::acceptance {

inline constexpr std::uint64_t kOracleSeed = 0xACCE0001;
inline constexpr std::uint64_t kTypeISeed = 0xACCE0003;
inline constexpr std::uint64_t kPowerSeed = 0xACCE0004;
inline constexpr std::uint64_t kMoeSeed = 0xACCE0005;
inline constexpr std::uint64_t kTrendSeed = 0xACCE0007;
inline constexpr std::uint64_t kSensitivitySeed = 0xACCE0008;
inline constexpr std::uint64_t kDeterminismSeed = 0xACCE0009;

// 1. Estimator oracle equivalence.
inline constexpr int kOracleDatasets = 100;
inline constexpr double kOracleTolerance = 1e-12;
inline constexpr double kFastRuntimeSeconds = 5.0;

// 2. Variance identity.
inline constexpr int kVarianceConfigurations = 1000;
inline constexpr double kVarianceRelTolerance = 1e-12;

// 3. Type-I calibration of the bootstrap F-test.
inline constexpr std::size_t kTypeIStudies = 200;
inline constexpr double kTypeILow = 0.02;
inline constexpr double kTypeIHigh = 0.09;
inline constexpr double kTypeIRuntimeSeconds = 600.0;

// 4. Power smoke test (one group at pi = 0.2).
inline constexpr std::size_t kPowerStudies = 100;
inline constexpr double kPowerThreshold = 0.8;

// 5. Margin-of-error family-wise flag rate under H0.
inline constexpr std::size_t kMoeStudies = 200;
inline constexpr double kMoeLow = 0.01;
inline constexpr double kMoeHigh = 0.12;

// 7. Trend reproduction at desk scale.
inline constexpr std::size_t kDeskRuns = 200;
inline constexpr std::size_t kDeskReplicates = 499;
inline constexpr int kAllowedInversions = 1;
inline constexpr double kTrendRuntimeSeconds = 1800.0;

}  // namespace fnmr::acceptance
