#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bsrkit/score_matrix.hpp"

namespace bsrkit::fusion {

/// Ordered score sources and their weights. Empty weights mean 1/n each.
struct FusionSpec {
  std::vector<std::reference_wrapper<const ScoreMatrix>> sources;
  std::vector<double> weights;
};

/// Weighted sum of source posteriors. Sources are aligned to the first one
/// by utterance id and class label; any mismatch in either set throws
/// Error(kAlignment). Weights must be nonnegative and sum to 1 within 1e-9.
/// The result is independent of source order, and fusing identical sources
/// reproduces them exactly.
ScoreMatrix fuse(const FusionSpec& spec);
ScoreMatrix fuse(std::span<const ScoreMatrix> sources);

/// Row-wise argmax; ties go to the lowest class index.
std::vector<std::size_t> predict(const ScoreMatrix& m);

using Truth = std::map<std::string, std::string>;

/// 100 * correct / total. Every utterance must have a truth label.
double accuracy(const ScoreMatrix& m, const Truth& truth);

/// counts[predicted][actual]; columns are true labels, rows predictions.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::int64_t>> counts;

  std::int64_t total() const;
  std::int64_t column_sum(std::size_t actual) const;
  /// diagonal / column sum; NaN for a class with no utterances.
  double class_accuracy(std::size_t cls) const;
};

ConfusionMatrix confusion(const ScoreMatrix& m, const Truth& truth);

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm);
void write_confusion_svg(std::ostream& out, const ConfusionMatrix& cm, const std::string& title);

enum class Marker : std::uint8_t { kTie, kABetter, kBBetter, kAUniqueError, kBUniqueError, kSharedError };

const char* marker_name(Marker m) noexcept;

struct DiffCell {
  std::size_t predicted = 0;
  std::size_t actual = 0;
  Marker marker = Marker::kTie;

  bool operator==(const DiffCell&) const = default;
};

/// Every diagonal cell is marked A-better / B-better / tie by per-class
/// accuracy. Off-diagonal cells where either matrix has errors are marked
/// A-unique, B-unique, or shared.
struct DiffReport {
  std::vector<std::string> labels;
  std::vector<DiffCell> cells;
};

DiffReport confusion_diff(const ConfusionMatrix& a, const ConfusionMatrix& b);
void write_diff_tsv(std::ostream& out, const DiffReport& report);

struct NamedScores {
  std::string name;
  std::reference_wrapper<const ScoreMatrix> scores;
};

struct SweepRow {
  std::string name;  // members joined by '&', e.g. "bsr-float16&fbank"
  std::vector<std::size_t> members;
  double accuracy = 0.0;
};

/// Equal-weight fusion of every subset of size 1..max_size, singles first,
/// then pairs, then triples, each in lexicographic index order.
std::vector<SweepRow> sweep_combinations(std::span<const NamedScores> sources, const Truth& truth,
                                         std::size_t max_size = 3);

/// Index subsets in sweep order.
std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t max_size);

/// Rows are subsets, columns conditions.
struct AccuracyTable {
  std::vector<std::string> conditions;
  std::vector<std::string> row_names;
  std::vector<std::vector<double>> accuracy;  // [row][condition]
};

/// sources_by_condition[c][i] is source i evaluated under condition c; every
/// condition must list the same source names in the same order.
AccuracyTable sweep_table(const std::vector<std::string>& conditions,
                          const std::vector<std::vector<NamedScores>>& sources_by_condition,
                          const Truth& truth, std::size_t max_size = 3);

/// TSV with header "features<TAB>cond1...", accuracies to two decimals.
void write_accuracy_tsv(std::ostream& out, const AccuracyTable& table);

}  // namespace bsrkit::fusion
