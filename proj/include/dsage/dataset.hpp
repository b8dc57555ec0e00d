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
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dsage {

/// Column-labelled numeric table. `target_label` may be empty when no column
/// has been designated as the prediction target.
struct Dataset {
  std::vector<std::string> column_labels;
  Eigen::MatrixXd rows;
  std::string target_label;

  std::size_t row_count() const noexcept { return static_cast<std::size_t>(rows.rows()); }
  std::size_t column_count() const noexcept { return static_cast<std::size_t>(rows.cols()); }

  /// Throws kLabelMismatch for an unknown label.
  std::size_t column_index(const std::string& label) const;
  std::size_t target_index() const;
  /// Indices of every column except the target, ascending.
  std::vector<std::size_t> feature_indices() const;
  std::vector<std::string> feature_labels() const;

  Eigen::MatrixXd features() const;
  Eigen::VectorXd target() const;

  /// Rows [first, first + count).
  Dataset slice_rows(std::size_t first, std::size_t count) const;
  Dataset select_columns(const std::vector<std::size_t>& columns) const;

  /// Checks label count, uniqueness and finiteness; throws on violation.
  void validate() const;
};

/// Leading `train_rows` rows for training, the remainder for testing.
struct TrainTestSplit {
  Dataset train;
  Dataset test;
};
TrainTestSplit split_train_test(const Dataset& data, std::size_t train_rows);

std::string to_csv(const Dataset& data);
Dataset parse_csv(const std::string& text, const std::string& target_label = {});
Dataset load_csv(const std::string& path, const std::string& target_label = {});
void save_csv(const Dataset& data, const std::string& path);

/// FNV-1a over labels and the bit patterns of all values.
std::uint64_t dataset_hash(const Dataset& data);

}  // namespace dsage
