/*
 Copyright 2026 The gpsp Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

// Structured text reports: one "key = value" per line, '#' comments,
// floating point at 17 significant digits, vectors space-separated.

#pragma once

#include <gpsp/core.hpp>

#include <cstdlib>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

namespace gpsp {

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class ReportWriter {
 public:
  explicit ReportWriter(std::ostream& os) : os_(os) {}

  ReportWriter& comment(const std::string& text) {
    os_ << "# " << text << "\n";
    return *this;
  }
  ReportWriter& put(const std::string& key, double v) { return raw(key, format_double(v)); }
  ReportWriter& put(const std::string& key, int v) { return raw(key, std::to_string(v)); }
  ReportWriter& put(const std::string& key, long v) { return raw(key, std::to_string(v)); }
  ReportWriter& put(const std::string& key, long long v) { return raw(key, std::to_string(v)); }
  ReportWriter& put(const std::string& key, std::size_t v) { return raw(key, std::to_string(v)); }
  ReportWriter& put(const std::string& key, bool v) { return raw(key, v ? "true" : "false"); }
  ReportWriter& put(const std::string& key, const std::string& v) { return raw(key, v); }
  ReportWriter& put(const std::string& key, const char* v) { return raw(key, v); }
  ReportWriter& put(const std::string& key, const Eigen::Ref<const VectorXd>& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v(i));
    return raw(key, s);
  }
  ReportWriter& put(const std::string& key, const Eigen::Ref<const MatrixXd>& m, bool /*row_major*/) {
    std::string s;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) s += (s.empty() ? "" : " ") + format_double(m(i, j));
    return raw(key, s);
  }

 private:
  ReportWriter& raw(const std::string& key, const std::string& value) {
    os_ << key << " = " << value << "\n";
    return *this;
  }
  std::ostream& os_;
};

/// Parsed report. Unknown keys are kept; lookups of missing keys throw.
class Report {
 public:
  static Report parse(std::istream& is) {
    Report r;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) throw std::runtime_error("report line " + std::to_string(lineno) + ": missing ' = '");
      r.values_[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return r;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error("report: missing key '" + key + "'");
    return it->second;
  }
  double number(const std::string& key) const {
    const VectorXd v = vector(key);
    if (v.size() != 1) throw std::runtime_error("report: key '" + key + "' is not a number");
    return v(0);
  }
  /// Whitespace-separated numbers; strtod also reads the inf/nan that operator<< writes.
  VectorXd vector(const std::string& key) const {
    std::istringstream is(text(key));
    std::vector<double> vals;
    for (std::string tok; is >> tok;) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) throw std::runtime_error("report: key '" + key + "' has non-numeric '" + tok + "'");
      vals.push_back(v);
    }
    return Eigen::Map<VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  }
  bool flag(const std::string& key) const { return text(key) == "true"; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gpsp
