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

#include "dsage/citest.hpp"

#include <cmath>
#include <numbers>

#include "dsage/error.hpp"
#include "dsage/io.hpp"

namespace dsage {
namespace {

void check_query(std::size_t d, std::size_t i, std::size_t j, std::span<const std::size_t> cond) {
  if (i >= d || j >= d) throw Error(ErrorKind::kIndexOutOfRange, "test variable out of range");
  if (i == j) throw Error(ErrorKind::kInvalidArgument, "test needs two distinct variables");
  for (std::size_t s : cond) {
    if (s >= d) throw Error(ErrorKind::kIndexOutOfRange, "conditioning variable out of range");
    if (s == i || s == j) throw Error(ErrorKind::kInvalidArgument, "conditioning set contains a tested variable");
  }
}

}  // namespace

double partial_corr(const Dataset& data, std::size_t i, std::size_t j, std::span<const std::size_t> cond) {
  check_query(data.column_count(), i, j, cond);
  const auto n = static_cast<Eigen::Index>(data.row_count());
  const auto k = static_cast<Eigen::Index>(cond.size());
  if (n <= k + 3) throw Error(ErrorKind::kInsufficientRows, "too few rows for the conditioning set");

  Eigen::MatrixXd design(n, k + 1);
  design.col(0).setOnes();
  for (Eigen::Index c = 0; c < k; ++c) design.col(c + 1) = data.rows.col(static_cast<Eigen::Index>(cond[static_cast<std::size_t>(c)]));
  Eigen::MatrixXd targets(n, 2);
  targets.col(0) = data.rows.col(static_cast<Eigen::Index>(i));
  targets.col(1) = data.rows.col(static_cast<Eigen::Index>(j));

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < k + 1) throw Error(ErrorKind::kSingularDesign, "conditioning design is rank deficient");
  const Eigen::MatrixXd residual = targets - design * qr.solve(targets);
  const double sxx = residual.col(0).squaredNorm();
  const double syy = residual.col(1).squaredNorm();
  if (sxx <= 0.0 || syy <= 0.0) throw Error(ErrorKind::kSingularDesign, "residual has zero variance");
  return residual.col(0).dot(residual.col(1)) / std::sqrt(sxx * syy);
}

double partial_corr_from_cov(const Eigen::MatrixXd& cov, std::size_t i, std::size_t j,
                             std::span<const std::size_t> cond) {
  check_query(static_cast<std::size_t>(cov.rows()), i, j, cond);
  std::vector<std::size_t> index{i, j};
  index.insert(index.end(), cond.begin(), cond.end());
  const auto k = static_cast<Eigen::Index>(index.size());
  Eigen::MatrixXd block(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      block(a, b) = cov(static_cast<Eigen::Index>(index[static_cast<std::size_t>(a)]),
                        static_cast<Eigen::Index>(index[static_cast<std::size_t>(b)]));
    }
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(block);
  if (!lu.isInvertible()) throw Error(ErrorKind::kSingularDesign, "covariance block is singular");
  const Eigen::MatrixXd precision = lu.inverse();
  return -precision(0, 1) / std::sqrt(precision(0, 0) * precision(1, 1));
}

CiTestResult fisher_z_test(double r, std::size_t n, std::size_t cond_size, double alpha) {
  if (!(std::abs(r) < 1.0 - 1e-12)) {
    throw Error(ErrorKind::kDegenerateCorrelation, "|r| is numerically one");
  }
  if (n <= cond_size + 3) throw Error(ErrorKind::kInsufficientRows, "need n - |S| - 3 > 0");
  CiTestResult out;
  out.partial_correlation = r;
  out.z_statistic = std::sqrt(static_cast<double>(n - cond_size - 3)) * std::atanh(r);
  out.p_value = std::erfc(std::abs(out.z_statistic) / std::numbers::sqrt2);
  out.independent = out.p_value > alpha;
  return out;
}

CiTestResult ci_test(const Dataset& data, std::size_t i, std::size_t j, std::span<const std::size_t> cond,
                     double alpha) {
  return fisher_z_test(partial_corr(data, i, j, cond), data.row_count(), cond.size(), alpha);
}

std::string run_ci_batch(const Dataset& data, const std::string& queries_csv, double alpha) {
  std::string out = "i,j,S,partial_correlation,z,p_value,independent\n";
  std::size_t line_no = 0;
  for (const auto& raw : split(queries_csv, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#' || line.substr(0, 2) == "i,") continue;
    const auto cells = split(line, ',');
    if (cells.size() < 2) {
      throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": expected i,j[,S...]");
    }
    const std::size_t i = data.column_index(std::string(trim(cells[0])));
    const std::size_t j = data.column_index(std::string(trim(cells[1])));
    std::vector<std::size_t> cond;
    std::string cond_text;
    for (std::size_t c = 2; c < cells.size(); ++c) {
      const auto label = trim(cells[c]);
      if (label.empty()) continue;
      cond.push_back(data.column_index(std::string(label)));
      if (!cond_text.empty()) cond_text += ';';
      cond_text += label;
    }
    const auto result = ci_test(data, i, j, cond, alpha);
    out += std::string(trim(cells[0])) + ',' + std::string(trim(cells[1])) + ',' + cond_text + ',' +
           format_double(result.partial_correlation) + ',' + format_double(result.z_statistic) + ',' +
           format_double(result.p_value) + ',' + (result.independent ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace dsage
