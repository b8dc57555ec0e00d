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

#include "dsage/io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsage/error.hpp"

namespace dsage {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kCycleDetected: return "CycleDetected";
    case ErrorKind::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::kInvalidGraph: return "InvalidGraph";
    case ErrorKind::kTooLargeForExact: return "TooLargeForExact";
    case ErrorKind::kInvalidDegree: return "InvalidDegree";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kSingularDesign: return "SingularDesign";
    case ErrorKind::kInsufficientRows: return "InsufficientRows";
    case ErrorKind::kNumericallySingular: return "NumericallySingular";
    case ErrorKind::kRankDeficient: return "RankDeficient";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kGraphMismatch: return "GraphMismatch";
    case ErrorKind::kLabelMismatch: return "LabelMismatch";
    case ErrorKind::kTooLarge: return "TooLarge";
    case ErrorKind::kDegenerateCorrelation: return "DegenerateCorrelation";
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kIo: return "IoError";
  }
  return "Error";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot rename " + tmp + ": " + ec.message());
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      return parts;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::string format_double(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

}  // namespace dsage
