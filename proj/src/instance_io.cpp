#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bpnp/synth.hpp"

namespace bpnp {
namespace {

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void writeRow(std::ostream& out, const Vec3& v) {
  out << fmt17(v.x()) << ' ' << fmt17(v.y()) << ' ' << fmt17(v.z()) << '\n';
}

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != '\r') ++pos;
    if (pos > start) tokens.push_back(line.substr(start, pos - start));
  }
  return tokens;
}

/// Line reader that skips blanks and '#' comments and tracks positions for
/// diagnostics.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& section, const std::string& what) const {
    throw ParseError(source_ + ":" + std::to_string(line_no_) + ": [" + section + "] " + what);
  }

  std::string nextOrFail(const std::string& section, const std::string& expecting) {
    std::string line;
    if (!next(line)) fail(section, "unexpected end of file, expected " + expecting);
    return line;
  }

  void expectHeader(const std::string& section) {
    const std::string line = nextOrFail(section, "section header [" + section + "]");
    const auto tokens = tokenize(line);
    if (tokens.size() != 1 || tokens[0] != "[" + section + "]") {
      fail(section, "missing section header [" + section + "]");
    }
  }

  double parseDouble(std::string_view token, const std::string& section) const {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      fail(section, "invalid number '" + std::string(token) + "'");
    }
    return value;
  }

  std::size_t parseIndex(std::string_view token, const std::string& section) const {
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      fail(section, "invalid integer '" + std::string(token) + "'");
    }
    return value;
  }

  std::vector<double> numberRow(const std::string& section, std::size_t count) {
    const std::string line = nextOrFail(section, std::to_string(count) + " numbers");
    const auto tokens = tokenize(line);
    if (tokens.size() != count) {
      fail(section, "expected " + std::to_string(count) + " values, got " +
                        std::to_string(tokens.size()));
    }
    std::vector<double> row;
    for (auto t : tokens) row.push_back(parseDouble(t, section));
    return row;
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

/// Reads "key value..." lines up to the next section header.
std::map<std::string, std::string> readMetadata(LineReader& reader, std::string& next_header) {
  std::map<std::string, std::string> meta;
  std::string line;
  while (true) {
    line = reader.nextOrFail("metadata", "metadata entries");
    if (line.find('[') != std::string::npos) {
      next_header = line;
      return meta;
    }
    const auto tokens = tokenize(line);
    std::string value;
    for (std::size_t k = 1; k < tokens.size(); ++k) {
      if (k > 1) value += ' ';
      value += tokens[k];
    }
    meta[std::string(tokens[0])] = value;
  }
}

std::size_t requireCount(const std::map<std::string, std::string>& meta, const std::string& key,
                         LineReader& reader) {
  const auto it = meta.find(key);
  if (it == meta.end()) reader.fail("metadata", "missing '" + key + "' entry");
  return reader.parseIndex(it->second, "metadata");
}

}  // namespace

void writeInstance(std::ostream& out, const PointSets& instance) {
  out << "# bpnp instance\n[metadata]\n";
  out << "format bpnp-instance\nversion 1\n";
  out << "bearings " << instance.numBearings() << '\n';
  out << "points " << instance.numPoints() << '\n';
  out << "gt_pose " << (instance.gt_pose ? "yes" : "no") << '\n';
  out << "gt_pairs " << (instance.gt_pairs ? std::to_string(instance.gt_pairs->size()) : "none")
      << '\n';
  for (const auto& [key, value] : instance.metadata) {
    out << "x-" << key << ' ' << value << '\n';
  }
  out << "[intrinsics]\n";
  for (int r = 0; r < 3; ++r) writeRow(out, instance.intrinsics.row(r).transpose());
  out << "[bearings]\n";
  for (const auto& b : instance.bearings) writeRow(out, b);
  out << "[points]\n";
  for (const auto& p : instance.points) writeRow(out, p);
  out << "[gt_pose]\n";
  if (instance.gt_pose) {
    writeRow(out, instance.gt_pose->rotation);
    writeRow(out, instance.gt_pose->translation);
  }
  out << "[gt_pairs]\n";
  if (instance.gt_pairs) {
    for (const auto& c : *instance.gt_pairs) out << c.bearing << ' ' << c.point << '\n';
  }
  out << "[end]\n";
}

PointSets readInstance(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  reader.expectHeader("metadata");
  std::string header;
  const auto meta = readMetadata(reader, header);
  const auto fmt = meta.find("format");
  if (fmt == meta.end() || fmt->second != "bpnp-instance") {
    reader.fail("metadata", "not a bpnp-instance file");
  }
  if (meta.count("version") == 0 || meta.at("version") != "1") {
    reader.fail("metadata", "unsupported version");
  }
  const std::size_t m = requireCount(meta, "bearings", reader);
  const std::size_t n = requireCount(meta, "points", reader);
  const bool has_pose = meta.count("gt_pose") != 0 && meta.at("gt_pose") == "yes";
  std::optional<std::size_t> pair_count;
  if (meta.count("gt_pairs") != 0 && meta.at("gt_pairs") != "none") {
    pair_count = requireCount(meta, "gt_pairs", reader);
  }

  PointSets out;
  for (const auto& [key, value] : meta) {
    if (key.rfind("x-", 0) == 0) out.metadata[key.substr(2)] = value;
  }

  if (tokenize(header).size() != 1 || tokenize(header)[0] != "[intrinsics]") {
    reader.fail("intrinsics", "missing section header [intrinsics]");
  }
  for (int r = 0; r < 3; ++r) {
    const auto row = reader.numberRow("intrinsics", 3);
    out.intrinsics.row(r) << row[0], row[1], row[2];
  }
  reader.expectHeader("bearings");
  out.bearings.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = reader.numberRow("bearings", 3);
    out.bearings.emplace_back(row[0], row[1], row[2]);
  }
  reader.expectHeader("points");
  out.points.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto row = reader.numberRow("points", 3);
    out.points.emplace_back(row[0], row[1], row[2]);
  }
  reader.expectHeader("gt_pose");
  if (has_pose) {
    const auto r = reader.numberRow("gt_pose", 3);
    const auto t = reader.numberRow("gt_pose", 3);
    out.gt_pose = Pose{Vec3(r[0], r[1], r[2]), Vec3(t[0], t[1], t[2])};
  }
  reader.expectHeader("gt_pairs");
  if (pair_count) {
    CorrespondenceList pairs;
    for (std::size_t k = 0; k < *pair_count; ++k) {
      const std::string line = reader.nextOrFail("gt_pairs", "index pair");
      const auto tokens = tokenize(line);
      if (tokens.size() != 2) reader.fail("gt_pairs", "expected two indices");
      pairs.push_back({reader.parseIndex(tokens[0], "gt_pairs"),
                       reader.parseIndex(tokens[1], "gt_pairs")});
    }
    try {
      validateOneToOne(pairs, m, n);
    } catch (const ValidationError& e) {
      reader.fail("gt_pairs", e.what());
    }
    out.gt_pairs = std::move(pairs);
  }
  reader.expectHeader("end");
  return out;
}

void saveInstance(const PointSets& instance, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  writeInstance(out, instance);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

PointSets loadInstance(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return readInstance(in, path.string());
}

void writeCost(std::ostream& out, const MatX& cost) {
  out << "# bpnp cost matrix\n[metadata]\nformat bpnp-cost\nversion 1\n";
  out << "rows " << cost.rows() << "\ncols " << cost.cols() << "\n[cost]\n";
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      if (j > 0) out << ' ';
      out << fmt17(cost(i, j));
    }
    out << '\n';
  }
  out << "[end]\n";
}

MatX readCost(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  reader.expectHeader("metadata");
  std::string header;
  const auto meta = readMetadata(reader, header);
  if (meta.count("format") == 0 || meta.at("format") != "bpnp-cost") {
    reader.fail("metadata", "not a bpnp-cost file");
  }
  const std::size_t rows = requireCount(meta, "rows", reader);
  const std::size_t cols = requireCount(meta, "cols", reader);
  if (tokenize(header).size() != 1 || tokenize(header)[0] != "[cost]") {
    reader.fail("cost", "missing section header [cost]");
  }
  MatX cost(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    const auto row = reader.numberRow("cost", cols);
    for (std::size_t j = 0; j < cols; ++j) {
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  reader.expectHeader("end");
  return cost;
}

void saveCost(const MatX& cost, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  writeCost(out, cost);
}

MatX loadCost(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return readCost(in, path.string());
}

}  // namespace bpnp
