// Copyright 2026 The ogpmoe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ogpmoe/harness/csv_io.hpp"

#include "ogpmoe/errors.hpp"
#include "ogpmoe/harness/outputs.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace ogpmoe::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::optional<double> parse_number(const std::string& field) {
  if (field.empty()) return std::nullopt;
  const char* first = field.data();
  const char* last = first + field.size();
  if (*first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

CsvDataset parse_csv(const std::string& text, bool normalize, const std::string& source) {
  CsvDataset out;
  std::vector<std::vector<double>> rows;
  std::vector<int> bad_lines;
  std::size_t columns = 0;
  bool first_content = true;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    std::vector<double> values;
    values.reserve(fields.size());
    bool numeric = true;
    for (const auto& f : fields) {
      const auto v = parse_number(f);
      if (!v) {
        numeric = false;
        break;
      }
      values.push_back(*v);
    }
    if (first_content) {
      first_content = false;
      columns = fields.size();
      if (!numeric) {
        out.header = fields;
        continue;
      }
    }
    if (!numeric || values.size() != columns) {
      bad_lines.push_back(line_no);
      continue;
    }
    rows.push_back(std::move(values));
  }

  if (first_content) throw InputError(source + ": empty file");
  if (columns < 2) throw InputError(source + ": need at least 2 columns (inputs..., output)");
  if (!bad_lines.empty()) {
    std::ostringstream msg;
    msg << source << ": rejected non-numeric or malformed rows at line(s)";
    for (std::size_t i = 0; i < bad_lines.size() && i < 20; ++i) msg << ' ' << bad_lines[i];
    if (bad_lines.size() > 20) msg << " ... (" << bad_lines.size() << " total)";
    throw InputError(msg.str());
  }
  if (rows.empty()) throw InputError(source + ": no data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(columns - 1);
  out.data.inputs.resize(n, d);
  out.data.outputs.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) out.data.inputs(i, c) = rows[i][c];
    out.data.outputs[i] = rows[i][d];
  }

  if (normalize) {
    const double mean = out.data.outputs.mean();
    const double var = (out.data.outputs.array() - mean).square().mean();
    if (!(var > 0.0)) throw InputError(source + ": output column has zero variance");
    out.normalization = {mean, std::sqrt(var), true};
    out.data.outputs = (out.data.outputs.array() - mean) / out.normalization.sd;
  }
  return out;
}

CsvDataset ingest_csv(const std::string& path, bool normalize) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), normalize, path);
}

void write_csv_dataset(const std::string& path, const Dataset& data,
                       const std::vector<std::string>& header) {
  std::ostringstream out;
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  } else {
    for (int c = 0; c < data.dim(); ++c) out << 'x' << c << ',';
    out << 'y';
  }
  out << '\n';
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(data.size()); ++i) {
    for (int c = 0; c < data.dim(); ++c) out << format_double(data.inputs(i, c)) << ',';
    out << format_double(data.outputs[i]) << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace ogpmoe::harness
