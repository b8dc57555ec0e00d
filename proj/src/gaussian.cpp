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

#include "dsage/gaussian.hpp"

#include <json.hpp>

namespace dsage {

std::string to_json_string(const GaussianModel<double>& gm) {
  nlohmann::json j;
  j["labels"] = gm.labels;
  j["mean"] = std::vector<double>(gm.mean.data(), gm.mean.data() + gm.mean.size());
  std::vector<double> row_major;
  row_major.reserve(static_cast<std::size_t>(gm.cov.size()));
  for (Eigen::Index r = 0; r < gm.cov.rows(); ++r) {
    for (Eigen::Index c = 0; c < gm.cov.cols(); ++c) row_major.push_back(gm.cov(r, c));
  }
  j["cov"] = row_major;
  return j.dump(2) + "\n";
}

GaussianModel<double> parse_gaussian_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    GaussianModel<double> gm;
    gm.labels = j.at("labels").get<std::vector<std::string>>();
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto cov = j.at("cov").get<std::vector<double>>();
    const auto d = static_cast<Eigen::Index>(mean.size());
    if (gm.labels.size() != mean.size() || cov.size() != mean.size() * mean.size()) {
      throw Error(ErrorKind::kLengthMismatch, "Gaussian JSON arrays have inconsistent sizes");
    }
    gm.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
    gm.cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        cov.data(), d, d);
    return gm;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, e.what());
  }
}

}  // namespace dsage
