#include "reflprior/curve_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "reflprior/error.hpp"

namespace reflprior {

namespace {

bool parse_double(std::string_view token, double& value) {
  // from_chars rejects a leading '+'.
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  const auto* end = token.data() + token.size();
  const auto res = std::from_chars(token.data(), end, value);
  return res.ec == std::errc() && res.ptr == end;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ReflectivityCurve read_curve(std::istream& in, const std::string& source) {
  std::vector<std::pair<double, double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::string cleaned = t;
    std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
    std::istringstream fields(cleaned);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    double q = 0.0, r = 0.0;
    if (tokens.size() != 2 || !parse_double(tokens[0], q) || !parse_double(tokens[1], r))
      throw InvalidInput(source + ":" + std::to_string(line_no) +
                         ": expected two numeric columns (q, R)");
    if (!std::isfinite(q) || !std::isfinite(r) || q <= 0.0 || r < 0.0)
      throw InvalidInput(source + ":" + std::to_string(line_no) +
                         ": q must be > 0 and R >= 0, both finite");
    rows.emplace_back(q, r);
  }
  if (rows.empty()) throw InvalidInput(source + ": no data rows");
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  ReflectivityCurve curve;
  curve.q.resize(static_cast<Eigen::Index>(rows.size()));
  curve.intensity.resize(curve.q.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    curve.q(static_cast<Eigen::Index>(i)) = rows[i].first;
    curve.intensity(static_cast<Eigen::Index>(i)) = rows[i].second;
  }
  for (Eigen::Index i = 1; i < curve.q.size(); ++i)
    if (curve.q(i) == curve.q(i - 1))
      throw InvalidInput(source + ": duplicate q value " + std::to_string(curve.q(i)));
  return curve;
}

ReflectivityCurve read_curve_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open curve file " + path);
  return read_curve(in, path);
}

void write_curve(std::ostream& out, const ReflectivityCurve& curve, const std::string& header) {
  out << "# " << header << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < curve.q.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", curve.q(i), curve.intensity(i));
    out << buf;
  }
}

void write_curve_file(const std::string& path, const ReflectivityCurve& curve,
                      const std::string& header) {
  std::ostringstream out;
  write_curve(out, curve, header);
  write_file_atomic(path, out.str());
}

void write_columns_file(const std::string& path, const Eigen::ArrayXd& x, const Eigen::ArrayXd& y,
                        const std::string& header) {
  ReflectivityCurve c{x, y};
  std::ostringstream out;
  write_curve(out, c, header);
  write_file_atomic(path, out.str());
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw InvalidInput("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace reflprior
