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
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dsage/dataset.hpp"
#include "dsage/gaussian.hpp"
#include "dsage/random.hpp"

namespace dsage {

/// A fitted model mapping a feature vector to a real prediction. Implementations
/// are immutable after construction and safe to share between threads.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual const std::vector<std::string>& feature_labels() const = 0;
  virtual double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;

  /// One prediction per row. The default loops over predict().
  virtual Eigen::VectorXd predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& rows) const;

  std::size_t feature_count() const { return feature_labels().size(); }
};

class LinearModel final : public Predictor {
 public:
  LinearModel() = default;
  LinearModel(std::vector<std::string> labels, double intercept, Eigen::VectorXd coefficients);

  const std::vector<std::string>& feature_labels() const override { return labels_; }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  Eigen::VectorXd predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& rows) const override;

  double intercept() const noexcept { return intercept_; }
  const Eigen::VectorXd& coefficients() const noexcept { return coefficients_; }

 private:
  std::vector<std::string> labels_;
  double intercept_ = 0.0;
  Eigen::VectorXd coefficients_;
};

/// Least squares with intercept on the dataset's feature columns against its
/// target column. Throws kInsufficientRows unless n > d + 1 and kRankDeficient
/// for a rank-deficient design.
LinearModel fit_ols(const Dataset& train);

std::string to_json_string(const LinearModel& model);
LinearModel parse_linear_model_json(const std::string& text);

/// Predictions looked up by the exact bit pattern of the input vector. Meant
/// for evaluating externally trained models in tests.
class LookupTablePredictor final : public Predictor {
 public:
  LookupTablePredictor(std::vector<std::string> labels,
                       const std::vector<std::pair<Eigen::VectorXd, double>>& entries);

  const std::vector<std::string>& feature_labels() const override { return labels_; }
  /// Throws kInvalidArgument for an input that is not in the table.
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override;

  static std::uint64_t hash_input(const Eigen::Ref<const Eigen::VectorXd>& x);

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::uint64_t, double> table_;
};

/// JSON form: {"labels": [...], "entries": [{"x": [...], "y": v}, ...]}.
LookupTablePredictor parse_lookup_table_json(const std::string& text);

double mse(std::span<const double> predictions, std::span<const double> targets);
inline double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
  return mse(std::span<const double>(predictions.data(), static_cast<std::size_t>(predictions.size())),
             std::span<const double>(targets.data(), static_cast<std::size_t>(targets.size())));
}

/// Marginalized prediction for every row of `x` (full feature rows; only the
/// columns in cg.given_indices are read). Each row averages the model output
/// over m completions whose free block is drawn from cg. Normals are consumed
/// row by row, draw by draw.
Eigen::VectorXd marginalized_predict_rows(const Predictor& model, const ConditionalGaussian<double>& cg,
                                          const Eigen::Ref<const Eigen::MatrixXd>& x, std::size_t m,
                                          Rng& rng);

/// Expected model output with X_S fixed to x_S and the rest drawn from the
/// conditional of gm. With S covering every feature it returns predict(x_S)
/// without sampling. `given` lists feature indices in the order of x_S.
double marginalized_predict(const Predictor& model, const GaussianModel<double>& gm,
                            std::span<const std::size_t> given, const Eigen::VectorXd& x_given,
                            std::size_t m, Rng& rng);

}  // namespace dsage
