#include "bsrkit/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <unordered_map>

#include "bsrkit/error.hpp"

namespace bsrkit::fusion {

namespace {

constexpr double kWeightTolerance = 1e-9;

std::vector<double> resolve_weights(const FusionSpec& spec) {
  const std::size_t n = spec.sources.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "fuse: no score sources");
  if (spec.weights.empty()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  if (spec.weights.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "fuse: weight count does not match source count");
  }
  double sum = 0.0;
  for (double w : spec.weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::kInvalidArgument, "fuse: weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > kWeightTolerance) {
    throw Error(ErrorCode::kInvalidArgument, "fuse: weights sum to " + std::to_string(sum) + ", not 1");
  }
  return spec.weights;
}

// Row/column index maps that place `src` onto the layout of `ref`.
struct Alignment {
  std::vector<Eigen::Index> rows;
  std::vector<Eigen::Index> cols;
};

Alignment align(const ScoreMatrix& ref, const ScoreMatrix& src, std::size_t which) {
  const std::string tag = "fuse: source " + std::to_string(which);
  if (src.classes() != ref.classes()) throw Error(ErrorCode::kAlignment, tag + " has a different class set");
  if (src.utterances() != ref.utterances()) {
    throw Error(ErrorCode::kAlignment, tag + " has " + std::to_string(src.utterances()) + " utterances, expected " +
                                           std::to_string(ref.utterances()));
  }
  Alignment a;
  std::unordered_map<std::string, Eigen::Index> col_of;
  for (std::size_t c = 0; c < src.labels.size(); ++c) col_of[src.labels[c]] = static_cast<Eigen::Index>(c);
  for (const auto& label : ref.labels) {
    auto it = col_of.find(label);
    if (it == col_of.end()) throw Error(ErrorCode::kAlignment, tag + " lacks class '" + label + "'");
    a.cols.push_back(it->second);
  }
  std::unordered_map<std::string, Eigen::Index> row_of;
  for (std::size_t r = 0; r < src.utt_ids.size(); ++r) row_of[src.utt_ids[r]] = static_cast<Eigen::Index>(r);
  for (const auto& id : ref.utt_ids) {
    auto it = row_of.find(id);
    if (it == row_of.end()) throw Error(ErrorCode::kAlignment, tag + " lacks utterance '" + id + "'");
    a.rows.push_back(it->second);
  }
  return a;
}

std::string join(const std::vector<std::string>& names, const std::vector<std::size_t>& members) {
  std::string out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i) out += '&';
    out += names[members[i]];
  }
  return out;
}

}  // namespace

ScoreMatrix fuse(const FusionSpec& spec) {
  const auto weights = resolve_weights(spec);
  const ScoreMatrix& ref = spec.sources.front().get();
  const std::size_t n = spec.sources.size();

  std::vector<Alignment> maps;
  maps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) maps.push_back(align(ref, spec.sources[i].get(), i));

  ScoreMatrix out;
  out.utt_ids = ref.utt_ids;
  out.labels = ref.labels;
  out.probs.resize(ref.probs.rows(), ref.probs.cols());

  // Written as base + sum_i w_i (p_i - base) with base = min_i p_i and the
  // terms summed in sorted order. Equal to sum_i w_i p_i when the weights sum
  // to one, but exact for identical inputs and independent of source order.
  std::vector<double> values(n);
  std::vector<double> terms(n);
  for (Eigen::Index r = 0; r < out.probs.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.probs.cols(); ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& m = maps[i];
        values[i] = spec.sources[i].get().probs(m.rows[static_cast<std::size_t>(r)], m.cols[static_cast<std::size_t>(c)]);
      }
      const double base = *std::min_element(values.begin(), values.end());
      for (std::size_t i = 0; i < n; ++i) terms[i] = weights[i] * (values[i] - base);
      std::sort(terms.begin(), terms.end());
      double acc = 0.0;
      for (double t : terms) acc += t;
      out.probs(r, c) = base + acc;
    }
  }
  return out;
}

ScoreMatrix fuse(std::span<const ScoreMatrix> sources) {
  FusionSpec spec;
  for (const auto& s : sources) spec.sources.emplace_back(s);
  return fuse(spec);
}

std::vector<std::size_t> predict(const ScoreMatrix& m) {
  std::vector<std::size_t> out(m.utterances(), 0);
  for (Eigen::Index r = 0; r < m.probs.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.probs.cols(); ++c) {
      if (m.probs(r, c) > m.probs(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<std::size_t>(best);
  }
  return out;
}

namespace {

std::vector<std::size_t> truth_indices(const ScoreMatrix& m, const Truth& truth) {
  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t c = 0; c < m.labels.size(); ++c) index_of[m.labels[c]] = c;
  std::vector<std::size_t> out;
  out.reserve(m.utterances());
  for (const auto& id : m.utt_ids) {
    auto it = truth.find(id);
    if (it == truth.end()) throw Error(ErrorCode::kAlignment, "no truth label for utterance '" + id + "'");
    auto c = index_of.find(it->second);
    if (c == index_of.end()) {
      throw Error(ErrorCode::kAlignment, "truth label '" + it->second + "' of '" + id + "' is not a score class");
    }
    out.push_back(c->second);
  }
  return out;
}

}  // namespace

double accuracy(const ScoreMatrix& m, const Truth& truth) {
  if (m.utterances() == 0) throw Error(ErrorCode::kEmptyInput, "accuracy: no utterances");
  const auto actual = truth_indices(m, truth);
  const auto pred = predict(m);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == actual[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (const auto& row : counts) {
    for (auto v : row) t += v;
  }
  return t;
}

std::int64_t ConfusionMatrix::column_sum(std::size_t actual) const {
  std::int64_t t = 0;
  for (const auto& row : counts) t += row[actual];
  return t;
}

double ConfusionMatrix::class_accuracy(std::size_t cls) const {
  const auto col = column_sum(cls);
  if (col == 0) return std::nan("");
  return static_cast<double>(counts[cls][cls]) / static_cast<double>(col);
}

ConfusionMatrix confusion(const ScoreMatrix& m, const Truth& truth) {
  const auto actual = truth_indices(m, truth);
  const auto pred = predict(m);
  ConfusionMatrix cm;
  cm.labels = m.labels;
  cm.counts.assign(m.classes(), std::vector<std::int64_t>(m.classes(), 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++cm.counts[pred[i]][actual[i]];
  return cm;
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
  out << "predicted\\actual";
  for (const auto& l : cm.labels) out << ',' << l;
  out << '\n';
  for (std::size_t p = 0; p < cm.labels.size(); ++p) {
    out << cm.labels[p];
    for (auto v : cm.counts[p]) out << ',' << v;
    out << '\n';
  }
}

void write_confusion_svg(std::ostream& out, const ConfusionMatrix& cm, const std::string& title) {
  const std::size_t n = cm.labels.size();
  const int cell = 28;
  const int margin = 90;
  const int size = margin + static_cast<int>(n) * cell + 10;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + 20
      << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  out << "<text x=\"" << margin << "\" y=\"14\" font-size=\"12\">" << title << "</text>\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int pos = margin + static_cast<int>(i) * cell + cell / 2;
    out << "<text x=\"" << pos << "\" y=\"" << margin - 6 << "\" text-anchor=\"end\" transform=\"rotate(-60 " << pos
        << ' ' << margin - 6 << ")\">" << cm.labels[i] << "</text>\n";
    out << "<text x=\"" << margin - 4 << "\" y=\"" << pos + 4 << "\" text-anchor=\"end\">" << cm.labels[i]
        << "</text>\n";
  }
  char shade[16];
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t a = 0; a < n; ++a) {
      const auto col = cm.column_sum(a);
      const double frac = col > 0 ? static_cast<double>(cm.counts[p][a]) / static_cast<double>(col) : 0.0;
      const int level = 255 - static_cast<int>(std::lround(frac * 200.0));
      std::snprintf(shade, sizeof(shade), "#%02x%02xff", level, level);
      const int x = margin + static_cast<int>(a) * cell;
      const int y = margin + static_cast<int>(p) * cell;
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"" << shade << "\" stroke=\"#999\"/>";
      if (cm.counts[p][a] > 0) {
        out << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
            << cm.counts[p][a] << "</text>";
      }
      out << '\n';
    }
  }
  out << "</svg>\n";
}

const char* marker_name(Marker m) noexcept {
  switch (m) {
    case Marker::kTie: return "tie";
    case Marker::kABetter: return "a-better";
    case Marker::kBBetter: return "b-better";
    case Marker::kAUniqueError: return "a-unique-error";
    case Marker::kBUniqueError: return "b-unique-error";
    case Marker::kSharedError: return "shared-error";
  }
  return "tie";
}

DiffReport confusion_diff(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  if (a.labels != b.labels || a.counts.size() != b.counts.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "confusion_diff: class sets differ");
  }
  if (a.total() != b.total()) throw Error(ErrorCode::kDimensionMismatch, "confusion_diff: totals differ");
  DiffReport report;
  report.labels = a.labels;
  const std::size_t n = a.labels.size();
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t t = 0; t < n; ++t) {
      const auto ca = a.counts[p][t];
      const auto cb = b.counts[p][t];
      if (p == t) {
        // Compare diag_a / col_a with diag_b / col_b without division.
        const auto lhs = ca * b.column_sum(t);
        const auto rhs = cb * a.column_sum(t);
        const Marker m = lhs > rhs ? Marker::kABetter : (lhs < rhs ? Marker::kBBetter : Marker::kTie);
        report.cells.push_back({p, t, m});
      } else if (ca > 0 || cb > 0) {
        const Marker m = cb == 0 ? Marker::kAUniqueError : (ca == 0 ? Marker::kBUniqueError : Marker::kSharedError);
        report.cells.push_back({p, t, m});
      }
    }
  }
  return report;
}

void write_diff_tsv(std::ostream& out, const DiffReport& report) {
  out << "predicted\tactual\tmarker\n";
  for (const auto& c : report.cells) {
    out << report.labels[c.predicted] << '\t' << report.labels[c.actual] << '\t' << marker_name(c.marker) << '\n';
  }
}

std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t max_size) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> current;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t k) {
    if (current.size() == k) {
      out.push_back(current);
      return;
    }
    for (std::size_t i = start; i < n; ++i) {
      current.push_back(i);
      rec(i + 1, k);
      current.pop_back();
    }
  };
  for (std::size_t k = 1; k <= std::min(n, max_size); ++k) rec(0, k);
  return out;
}

std::vector<SweepRow> sweep_combinations(std::span<const NamedScores> sources, const Truth& truth,
                                         std::size_t max_size) {
  if (sources.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep_combinations: no sources");
  std::vector<std::string> names;
  for (const auto& s : sources) names.push_back(s.name);
  std::vector<SweepRow> rows;
  for (auto& members : subsets(sources.size(), max_size)) {
    FusionSpec spec;
    for (auto i : members) spec.sources.push_back(sources[i].scores);
    SweepRow row;
    row.name = join(names, members);
    row.accuracy = accuracy(fuse(spec), truth);
    row.members = std::move(members);
    rows.push_back(std::move(row));
  }
  return rows;
}

AccuracyTable sweep_table(const std::vector<std::string>& conditions,
                          const std::vector<std::vector<NamedScores>>& sources_by_condition, const Truth& truth,
                          std::size_t max_size) {
  if (conditions.size() != sources_by_condition.size() || conditions.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "sweep_table: need one source list per condition");
  }
  AccuracyTable table;
  table.conditions = conditions;
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    const auto& srcs = sources_by_condition[c];
    if (c > 0) {
      bool same = srcs.size() == sources_by_condition[0].size();
      for (std::size_t i = 0; same && i < srcs.size(); ++i) same = srcs[i].name == sources_by_condition[0][i].name;
      if (!same) throw Error(ErrorCode::kAlignment, "sweep_table: condition '" + conditions[c] + "' lists different sources");
    }
    const auto rows = sweep_combinations(srcs, truth, max_size);
    if (c == 0) {
      for (const auto& r : rows) table.row_names.push_back(r.name);
      table.accuracy.assign(rows.size(), std::vector<double>(conditions.size(), 0.0));
    }
    for (std::size_t r = 0; r < rows.size(); ++r) table.accuracy[r][c] = rows[r].accuracy;
  }
  return table;
}

void write_accuracy_tsv(std::ostream& out, const AccuracyTable& table) {
  out << "features";
  for (const auto& c : table.conditions) out << '\t' << c;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < table.row_names.size(); ++r) {
    out << table.row_names[r];
    for (double v : table.accuracy[r]) {
      std::snprintf(buf, sizeof(buf), "%.2f", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

}  // namespace bsrkit::fusion
