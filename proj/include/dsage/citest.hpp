/*
 * Copyright 2026 The dsage Authors.
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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsage/dataset.hpp"

namespace dsage {

struct CiTestResult {
  double partial_correlation = 0.0;
  double z_statistic = 0.0;
  double p_value = 1.0;
  bool independent = true;
};

/// Partial correlation of columns i and j given S: the correlation of their
/// least-squares residuals on S (with intercept).
double partial_corr(const Dataset& data, std::size_t i, std::size_t j, std::span<const std::size_t> cond);

/// Same quantity from a covariance matrix via the inverse of the {i, j} U S
/// block: -P_ij / sqrt(P_ii P_jj).
double partial_corr_from_cov(const Eigen::MatrixXd& cov, std::size_t i, std::size_t j,
                             std::span<const std::size_t> cond);

/// Fisher z test: z = sqrt(n - |S| - 3) atanh(r), two-sided normal p-value,
/// independent iff p > alpha.
CiTestResult fisher_z_test(double r, std::size_t n, std::size_t cond_size, double alpha = 0.05);

/// Test of column i against column j given S on the data.
CiTestResult ci_test(const Dataset& data, std::size_t i, std::size_t j, std::span<const std::size_t> cond,
                     double alpha = 0.05);

/// Query rows are "i,j,s1,s2,..." with column labels; a header line starting
/// with '#' or "i," is skipped. Output has one "i,j,S,r,z,p,independent" row
/// per query, S joined with ';'.
std::string run_ci_batch(const Dataset& data, const std::string& queries_csv, double alpha = 0.05);

}  // namespace dsage
