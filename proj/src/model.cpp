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

#include "dsage/model.hpp"

#include <algorithm>
#include <cstring>

#include <json.hpp>

#include "dsage/error.hpp"

namespace dsage {

Eigen::VectorXd Predictor::predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& rows) const {
  Eigen::VectorXd out(rows.rows());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) out(r) = predict(rows.row(r).transpose());
  return out;
}

LinearModel::LinearModel(std::vector<std::string> labels, double intercept, Eigen::VectorXd coefficients)
    : labels_(std::move(labels)), intercept_(intercept), coefficients_(std::move(coefficients)) {
  if (labels_.size() != static_cast<std::size_t>(coefficients_.size())) {
    throw Error(ErrorKind::kLengthMismatch, "coefficient count must equal feature count");
  }
}

double LinearModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != coefficients_.size()) throw Error(ErrorKind::kLengthMismatch, "input has wrong length");
  return intercept_ + coefficients_.dot(x);
}

Eigen::VectorXd LinearModel::predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& rows) const {
  if (rows.cols() != coefficients_.size()) throw Error(ErrorKind::kLengthMismatch, "input has wrong width");
  return (rows * coefficients_).array() + intercept_;
}

LinearModel fit_ols(const Dataset& train) {
  const Eigen::MatrixXd x = train.features();
  const Eigen::VectorXd y = train.target();
  const auto n = x.rows();
  const auto d = x.cols();
  if (n <= d + 1) throw Error(ErrorKind::kInsufficientRows, "OLS needs more rows than parameters");
  Eigen::MatrixXd design(n, d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = x;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < d + 1) throw Error(ErrorKind::kRankDeficient, "design matrix is rank deficient");
  const Eigen::VectorXd beta = qr.solve(y);
  return LinearModel(train.feature_labels(), beta(0), beta.tail(d));
}

std::string to_json_string(const LinearModel& model) {
  nlohmann::json j;
  j["labels"] = model.feature_labels();
  j["intercept"] = model.intercept();
  const auto& c = model.coefficients();
  j["coefficients"] = std::vector<double>(c.data(), c.data() + c.size());
  return j.dump(2) + "\n";
}

LinearModel parse_linear_model_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const auto coef = j.at("coefficients").get<std::vector<double>>();
    return LinearModel(j.at("labels").get<std::vector<std::string>>(), j.at("intercept").get<double>(),
                       Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size())));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, e.what());
  }
}

LookupTablePredictor::LookupTablePredictor(std::vector<std::string> labels,
                                           const std::vector<std::pair<Eigen::VectorXd, double>>& entries)
    : labels_(std::move(labels)) {
  for (const auto& [x, y] : entries) {
    if (x.size() != static_cast<Eigen::Index>(labels_.size())) {
      throw Error(ErrorKind::kLengthMismatch, "lookup entry has wrong length");
    }
    table_[hash_input(x)] = y;
  }
}

std::uint64_t LookupTablePredictor::hash_input(const Eigen::Ref<const Eigen::VectorXd>& x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    std::uint64_t bits = 0;
    const double v = x(i) == 0.0 ? 0.0 : x(i);  // fold -0.0 into 0.0
    std::memcpy(&bits, &v, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

double LookupTablePredictor::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != static_cast<Eigen::Index>(labels_.size())) {
    throw Error(ErrorKind::kLengthMismatch, "input has wrong length");
  }
  const auto it = table_.find(hash_input(x));
  if (it == table_.end()) throw Error(ErrorKind::kInvalidArgument, "input not present in lookup table");
  return it->second;
}

LookupTablePredictor parse_lookup_table_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    std::vector<std::pair<Eigen::VectorXd, double>> entries;
    for (const auto& e : j.at("entries")) {
      const auto x = e.at("x").get<std::vector<double>>();
      entries.emplace_back(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())),
                           e.at("y").get<double>());
    }
    return LookupTablePredictor(j.at("labels").get<std::vector<std::string>>(), entries);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, e.what());
  }
}

double mse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) {
    throw Error(ErrorKind::kLengthMismatch, "predictions and targets differ in length");
  }
  if (predictions.empty()) throw Error(ErrorKind::kInvalidArgument, "mse of empty vectors");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    sum += r * r;
  }
  return sum / static_cast<double>(predictions.size());
}

Eigen::VectorXd marginalized_predict_rows(const Predictor& model, const ConditionalGaussian<double>& cg,
                                          const Eigen::Ref<const Eigen::MatrixXd>& x, std::size_t m,
                                          Rng& rng) {
  if (m == 0) throw Error(ErrorKind::kInvalidArgument, "need at least one draw");
  const auto d = static_cast<Eigen::Index>(model.feature_count());
  if (x.cols() != d || static_cast<Eigen::Index>(cg.free_count() + cg.given_indices.size()) != d) {
    throw Error(ErrorKind::kLengthMismatch, "rows, model and conditional disagree on the feature count");
  }
  const auto n = x.rows();
  const auto draws = static_cast<Eigen::Index>(m);
  const auto f = static_cast<Eigen::Index>(cg.free_count());
  const auto g = static_cast<Eigen::Index>(cg.given_indices.size());

  Eigen::MatrixXd given(n, g);
  for (Eigen::Index k = 0; k < g; ++k) given.col(k) = x.col(static_cast<Eigen::Index>(cg.given_indices[static_cast<std::size_t>(k)]));
  const Eigen::MatrixXd means = (given * cg.gain.transpose()).rowwise() + cg.offset.transpose();

  // Rows are processed in blocks so the completion matrix stays small.
  const Eigen::Index block_rows = std::max<Eigen::Index>(1, 4096 / draws);
  NormalDistribution<> normal;
  Eigen::VectorXd out(n);
  Eigen::MatrixXd z;
  Eigen::MatrixXd completions;
  for (Eigen::Index start = 0; start < n; start += block_rows) {
    const Eigen::Index rows = std::min(block_rows, n - start);
    z.resize(rows * draws, f);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      for (Eigen::Index c = 0; c < f; ++c) z(r, c) = normal(rng);
    }
    const Eigen::MatrixXd noise = z * cg.factor.transpose();
    completions.resize(rows * draws, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto block = completions.middleRows(r * draws, draws);
      for (Eigen::Index k = 0; k < g; ++k) {
        block.col(static_cast<Eigen::Index>(cg.given_indices[static_cast<std::size_t>(k)]))
            .setConstant(given(start + r, k));
      }
      for (Eigen::Index k = 0; k < f; ++k) {
        block.col(static_cast<Eigen::Index>(cg.free_indices[static_cast<std::size_t>(k)])) =
            noise.middleRows(r * draws, draws).col(k).array() + means(start + r, k);
      }
    }
    const Eigen::VectorXd predictions = model.predict_batch(completions);
    for (Eigen::Index r = 0; r < rows; ++r) out(start + r) = predictions.segment(r * draws, draws).mean();
  }
  return out;
}

double marginalized_predict(const Predictor& model, const GaussianModel<double>& gm,
                            std::span<const std::size_t> given, const Eigen::VectorXd& x_given,
                            std::size_t m, Rng& rng) {
  const std::size_t d = model.feature_count();
  if (gm.dim() != d) throw Error(ErrorKind::kLengthMismatch, "Gaussian and model disagree on the feature count");
  if (x_given.size() != static_cast<Eigen::Index>(given.size())) {
    throw Error(ErrorKind::kLengthMismatch, "conditioning values do not match the conditioning set");
  }
  Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < given.size(); ++k) {
    if (given[k] >= d) throw Error(ErrorKind::kIndexOutOfRange, "feature index out of range");
    full(static_cast<Eigen::Index>(given[k])) = x_given(static_cast<Eigen::Index>(k));
  }
  if (given.size() == d) return model.predict(full);
  const auto cg = condition(gm, given);
  return marginalized_predict_rows(model, cg, full.transpose(), m, rng)(0);
}

}  // namespace dsage
