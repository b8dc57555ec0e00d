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

#include <algorithm>
#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsage/dataset.hpp"
#include "dsage/error.hpp"
#include "dsage/random.hpp"

namespace dsage {

template <typename Scalar>
using DynMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DynVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Joint Gaussian over labelled variables.
template <typename Scalar>
struct GaussianModel {
  std::vector<std::string> labels;
  DynVector<Scalar> mean;
  DynMatrix<Scalar> cov;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

/// Lower Cholesky factor together with the diagonal jitter that was needed.
template <typename Scalar>
struct JitteredCholesky {
  Eigen::LLT<DynMatrix<Scalar>> llt;
  Scalar jitter = 0;
};

/// Diagonal jitter ladder: none, then 1e-8 escalating by 10x up to 1e-4.
inline constexpr std::array<double, 6> kJitterLadder{0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};

template <typename Scalar, typename Derived>
JitteredCholesky<Scalar> cholesky_with_jitter(const Eigen::MatrixBase<Derived>& a) {
  JitteredCholesky<Scalar> out;
  const auto n = a.rows();
  for (double jitter : kJitterLadder) {
    DynMatrix<Scalar> shifted = a;
    shifted.diagonal().array() += static_cast<Scalar>(jitter);
    out.llt.compute(shifted);
    if (out.llt.info() == Eigen::Success && (out.llt.matrixLLT().diagonal().array() > Scalar(0)).all()) {
      out.jitter = static_cast<Scalar>(jitter);
      return out;
    }
  }
  throw Error(ErrorKind::kNumericallySingular,
              "Cholesky failed on a " + std::to_string(n) + "x" + std::to_string(n) +
                  " block after jitter 1e-4");
}

/// Sample mean and maximum-likelihood covariance (divisor n) of the rows.
template <typename Derived>
GaussianModel<typename Derived::Scalar> fit_gaussian(const Eigen::MatrixBase<Derived>& rows,
                                                     std::vector<std::string> labels) {
  using Scalar = typename Derived::Scalar;
  const auto n = rows.rows();
  const auto d = rows.cols();
  if (n < d + 1) {
    throw Error(ErrorKind::kInsufficientRows,
                "need at least d + 1 = " + std::to_string(d + 1) + " rows, got " + std::to_string(n));
  }
  if (labels.size() != static_cast<std::size_t>(d)) {
    throw Error(ErrorKind::kLengthMismatch, "label count does not match column count");
  }
  GaussianModel<Scalar> gm;
  gm.labels = std::move(labels);
  gm.mean = rows.colwise().mean().transpose();
  const DynMatrix<Scalar> centered = rows.rowwise() - gm.mean.transpose();
  gm.cov = (centered.transpose() * centered) / static_cast<Scalar>(n);
  gm.cov = (gm.cov + gm.cov.transpose()).eval() / Scalar(2);
  return gm;
}

/// Fit over every column of the dataset.
inline GaussianModel<double> fit_gaussian(const Dataset& data) {
  return fit_gaussian(data.rows, data.column_labels);
}

/// Gaussian over `indices` of a larger model, in the given order.
template <typename Scalar>
GaussianModel<Scalar> marginal(const GaussianModel<Scalar>& gm, std::span<const std::size_t> indices) {
  GaussianModel<Scalar> out;
  const auto k = static_cast<Eigen::Index>(indices.size());
  out.mean.resize(k);
  out.cov.resize(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const auto ia = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(a)]);
    out.labels.push_back(gm.labels.at(static_cast<std::size_t>(ia)));
    out.mean(a) = gm.mean(ia);
    for (Eigen::Index b = 0; b < k; ++b) {
      out.cov(a, b) = gm.cov(ia, static_cast<Eigen::Index>(indices[static_cast<std::size_t>(b)]));
    }
  }
  return out;
}

/// Distribution of the free variables given the `given` ones:
/// mean = offset + gain * x_given, covariance = cond_cov (Schur complement).
template <typename Scalar>
struct ConditionalGaussian {
  std::vector<std::size_t> free_indices;
  std::vector<std::size_t> given_indices;
  DynMatrix<Scalar> gain;
  DynVector<Scalar> offset;
  DynMatrix<Scalar> cond_cov;
  /// Lower factor with factor * factor^T = cond_cov (plus jitter); zero when
  /// cond_cov is numerically zero.
  DynMatrix<Scalar> factor;
  /// Largest jitter used for either the conditioning solve or the factor.
  Scalar jitter = 0;

  std::size_t free_count() const noexcept { return free_indices.size(); }

  template <typename Derived>
  DynVector<Scalar> mean(const Eigen::MatrixBase<Derived>& x_given) const {
    if (x_given.size() != static_cast<Eigen::Index>(given_indices.size())) {
      throw Error(ErrorKind::kLengthMismatch, "conditioning values do not match the conditioning set");
    }
    return offset + gain * x_given;
  }
};

/// Conditions on the variables in `given`; the remaining variables, ascending,
/// become the free block. `given` must be a proper subset of the indices.
template <typename Scalar>
ConditionalGaussian<Scalar> condition(const GaussianModel<Scalar>& gm, std::span<const std::size_t> given) {
  const std::size_t d = gm.dim();
  std::vector<char> is_given(d, 0);
  for (std::size_t g : given) {
    if (g >= d) throw Error(ErrorKind::kIndexOutOfRange, "conditioning index out of range");
    if (is_given[g]) throw Error(ErrorKind::kInvalidArgument, "duplicate conditioning index");
    is_given[g] = 1;
  }
  ConditionalGaussian<Scalar> cg;
  cg.given_indices.assign(given.begin(), given.end());
  for (std::size_t i = 0; i < d; ++i) {
    if (!is_given[i]) cg.free_indices.push_back(i);
  }
  if (cg.free_indices.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "conditioning set must be a proper subset");
  }
  const auto f = static_cast<Eigen::Index>(cg.free_indices.size());
  const auto g = static_cast<Eigen::Index>(cg.given_indices.size());
  auto idx = [](const std::vector<std::size_t>& v, Eigen::Index k) {
    return static_cast<Eigen::Index>(v[static_cast<std::size_t>(k)]);
  };

  DynMatrix<Scalar> cov_ff(f, f), cov_fg(f, g), cov_gg(g, g);
  DynVector<Scalar> mean_f(f), mean_g(g);
  for (Eigen::Index a = 0; a < f; ++a) {
    mean_f(a) = gm.mean(idx(cg.free_indices, a));
    for (Eigen::Index b = 0; b < f; ++b) cov_ff(a, b) = gm.cov(idx(cg.free_indices, a), idx(cg.free_indices, b));
    for (Eigen::Index b = 0; b < g; ++b) cov_fg(a, b) = gm.cov(idx(cg.free_indices, a), idx(cg.given_indices, b));
  }
  for (Eigen::Index a = 0; a < g; ++a) {
    mean_g(a) = gm.mean(idx(cg.given_indices, a));
    for (Eigen::Index b = 0; b < g; ++b) cov_gg(a, b) = gm.cov(idx(cg.given_indices, a), idx(cg.given_indices, b));
  }

  if (g == 0) {
    cg.gain = DynMatrix<Scalar>::Zero(f, 0);
    cg.offset = mean_f;
    cg.cond_cov = cov_ff;
  } else {
    const auto chol = cholesky_with_jitter<Scalar>(cov_gg);
    cg.jitter = chol.jitter;
    cg.gain = chol.llt.solve(cov_fg.transpose()).transpose();
    cg.offset = mean_f - cg.gain * mean_g;
    cg.cond_cov = cov_ff - cg.gain * cov_fg.transpose();
  }
  cg.cond_cov = (cg.cond_cov + cg.cond_cov.transpose()).eval() / Scalar(2);

  const Scalar scale = std::max<Scalar>(Scalar(1), cov_ff.cwiseAbs().maxCoeff());
  if (cg.cond_cov.cwiseAbs().maxCoeff() <= Scalar(1e-14) * scale) {
    cg.factor = DynMatrix<Scalar>::Zero(f, f);
  } else {
    const auto chol = cholesky_with_jitter<Scalar>(cg.cond_cov);
    cg.jitter = std::max(cg.jitter, chol.jitter);
    cg.factor = chol.llt.matrixL();
  }
  return cg;
}

/// m draws (rows) of the free block at the given conditioning values.
template <typename Scalar, typename Derived>
DynMatrix<Scalar> sample_conditional(const ConditionalGaussian<Scalar>& cg,
                                     const Eigen::MatrixBase<Derived>& x_given, std::size_t m, Rng& rng) {
  if (m == 0) throw Error(ErrorKind::kInvalidArgument, "need at least one draw");
  const DynVector<Scalar> mu = cg.mean(x_given);
  const auto f = static_cast<Eigen::Index>(cg.free_count());
  NormalDistribution<Scalar> normal;
  DynMatrix<Scalar> z(static_cast<Eigen::Index>(m), f);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index c = 0; c < f; ++c) z(r, c) = normal(rng);
  }
  DynMatrix<Scalar> draws = z * cg.factor.transpose();
  draws.rowwise() += mu.transpose();
  return draws;
}

std::string to_json_string(const GaussianModel<double>& gm);
GaussianModel<double> parse_gaussian_json(const std::string& text);

}  // namespace dsage
