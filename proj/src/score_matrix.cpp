#include "bsrkit/score_matrix.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "bsrkit/error.hpp"

namespace bsrkit {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

}  // namespace

void ScoreMatrix::validate(double tolerance) const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kCorruptFile, "ScoreMatrix: " + msg); };
  if (static_cast<std::size_t>(probs.rows()) != utt_ids.size() ||
      static_cast<std::size_t>(probs.cols()) != labels.size()) {
    fail("shape does not match ids/labels");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : utt_ids) {
    if (!seen.insert(id).second) fail("duplicate utterance id '" + id + "'");
  }
  std::unordered_set<std::string> seen_labels;
  for (const auto& l : labels) {
    if (!seen_labels.insert(l).second) fail("duplicate class label '" + l + "'");
  }
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = probs(r, c);
      if (!std::isfinite(p) || p < 0.0) fail("row '" + utt_ids[static_cast<std::size_t>(r)] + "' has an invalid probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      fail("row '" + utt_ids[static_cast<std::size_t>(r)] + "' sums to " + std::to_string(sum));
    }
  }
}

void write_scores(std::ostream& out, const ScoreMatrix& m) {
  out << "utt_id";
  for (const auto& l : m.labels) out << '\t' << l;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.utt_ids.size(); ++r) {
    out << m.utt_ids[r];
    for (Eigen::Index c = 0; c < m.probs.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", m.probs(static_cast<Eigen::Index>(r), c));
      out << '\t' << buf;
    }
    out << '\n';
  }
}

void write_scores(const std::filesystem::path& path, const ScoreMatrix& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  write_scores(out, m);
}

ScoreMatrix read_scores(std::istream& in, const std::string& context) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kCorruptFile, context + ": empty score file");
  auto header = split_tabs(line);
  if (header.size() < 2 || header[0] != "utt_id") {
    throw Error(ErrorCode::kCorruptFile, context + ": header must start with utt_id");
  }
  ScoreMatrix m;
  m.labels.assign(header.begin() + 1, header.end());
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != header.size()) {
      throw Error(ErrorCode::kCorruptFile, context + ": row '" + cols[0] + "' has wrong column count");
    }
    m.utt_ids.push_back(cols[0]);
    for (std::size_t c = 1; c < cols.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(cols[c].c_str(), &end);
      if (end == cols[c].c_str() || *end != '\0') {
        throw Error(ErrorCode::kCorruptFile, context + ": bad number '" + cols[c] + "'");
      }
      values.push_back(v);
    }
  }
  m.probs = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(m.utt_ids.size()),
                               static_cast<Eigen::Index>(m.labels.size()));
  try {
    m.validate(1e-4);
  } catch (const Error& e) {
    throw Error(e.code(), context + ": " + e.what());
  }
  return m;
}

ScoreMatrix read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return read_scores(in, path.string());
}

}  // namespace bsrkit
