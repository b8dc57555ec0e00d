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

#include "dsage/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <set>

#include "dsage/error.hpp"
#include "dsage/io.hpp"

namespace dsage {

std::size_t Dataset::column_index(const std::string& label) const {
  const auto it = std::find(column_labels.begin(), column_labels.end(), label);
  if (it == column_labels.end()) {
    throw Error(ErrorKind::kLabelMismatch, "dataset has no column '" + label + "'");
  }
  return static_cast<std::size_t>(it - column_labels.begin());
}

std::size_t Dataset::target_index() const {
  if (target_label.empty()) throw Error(ErrorKind::kInvalidArgument, "no target column designated");
  return column_index(target_label);
}

std::vector<std::size_t> Dataset::feature_indices() const {
  const std::size_t target = target_label.empty() ? column_count() : target_index();
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < column_count(); ++c) {
    if (c != target) out.push_back(c);
  }
  return out;
}

std::vector<std::string> Dataset::feature_labels() const {
  std::vector<std::string> out;
  for (std::size_t c : feature_indices()) out.push_back(column_labels[c]);
  return out;
}

Eigen::MatrixXd Dataset::features() const {
  const auto cols = feature_indices();
  Eigen::MatrixXd out(rows.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = rows.col(static_cast<Eigen::Index>(cols[k]));
  }
  return out;
}

Eigen::VectorXd Dataset::target() const {
  return rows.col(static_cast<Eigen::Index>(target_index()));
}

Dataset Dataset::slice_rows(std::size_t first, std::size_t count) const {
  if (first + count > row_count()) throw Error(ErrorKind::kIndexOutOfRange, "row slice out of range");
  return Dataset{column_labels,
                 rows.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)),
                 target_label};
}

Dataset Dataset::select_columns(const std::vector<std::size_t>& columns) const {
  Dataset out;
  out.rows.resize(rows.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] >= column_count()) throw Error(ErrorKind::kIndexOutOfRange, "column out of range");
    out.column_labels.push_back(column_labels[columns[k]]);
    out.rows.col(static_cast<Eigen::Index>(k)) = rows.col(static_cast<Eigen::Index>(columns[k]));
  }
  if (std::find(out.column_labels.begin(), out.column_labels.end(), target_label) !=
      out.column_labels.end()) {
    out.target_label = target_label;
  }
  return out;
}

void Dataset::validate() const {
  if (column_labels.size() != column_count()) {
    throw Error(ErrorKind::kLengthMismatch, "label count does not match column count");
  }
  std::set<std::string> seen;
  for (const auto& label : column_labels) {
    if (label.empty() || !seen.insert(label).second) {
      throw Error(ErrorKind::kInvalidArgument, "column labels must be unique and non-empty");
    }
  }
  if (!rows.allFinite()) throw Error(ErrorKind::kInvalidArgument, "dataset has missing or non-finite values");
  if (!target_label.empty()) column_index(target_label);
}

TrainTestSplit split_train_test(const Dataset& data, std::size_t train_rows) {
  if (train_rows == 0 || train_rows >= data.row_count()) {
    throw Error(ErrorKind::kInvalidArgument, "train split must leave rows on both sides");
  }
  return {data.slice_rows(0, train_rows), data.slice_rows(train_rows, data.row_count() - train_rows)};
}

std::string to_csv(const Dataset& data) {
  std::string out;
  for (std::size_t c = 0; c < data.column_labels.size(); ++c) {
    if (c) out += ',';
    out += data.column_labels[c];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < data.rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.rows.cols(); ++c) {
      if (c) out += ',';
      out += format_double(data.rows(r, c));
    }
    out += '\n';
  }
  return out;
}

Dataset parse_csv(const std::string& text, const std::string& target_label) {
  Dataset data;
  std::vector<double> values;
  std::size_t line_no = 0;
  bool header = true;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (header) {
      for (const auto& cell : cells) data.column_labels.emplace_back(trim(cell));
      header = false;
      continue;
    }
    if (cells.size() != data.column_labels.size()) {
      throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(data.column_labels.size()) + " cells");
    }
    for (const auto& cell : cells) {
      const auto token = trim(cell);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": bad number '" +
                                           std::string(token) + "'");
      }
      values.push_back(v);
    }
  }
  if (header) throw Error(ErrorKind::kParse, "empty CSV");
  const auto cols = static_cast<Eigen::Index>(data.column_labels.size());
  const auto nrows = cols == 0 ? 0 : static_cast<Eigen::Index>(values.size()) / cols;
  data.rows = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), nrows, cols);
  data.target_label = target_label;
  data.validate();
  return data;
}

Dataset load_csv(const std::string& path, const std::string& target_label) {
  return parse_csv(read_file(path), target_label);
}

void save_csv(const Dataset& data, const std::string& path) {
  write_file_atomic(path, to_csv(data));
}

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* bytes, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < size; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& label : data.column_labels) {
    feed(label.data(), label.size());
    feed(",", 1);
  }
  for (Eigen::Index r = 0; r < data.rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.rows.cols(); ++c) {
      const double v = data.rows(r, c);
      feed(&v, sizeof v);
    }
  }
  return h;
}

}  // namespace dsage
