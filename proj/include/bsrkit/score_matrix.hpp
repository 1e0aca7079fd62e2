#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bsrkit/matrix.hpp"

namespace bsrkit {

/// Per-utterance class posteriors. Rows are probability distributions.
struct ScoreMatrix {
  std::vector<std::string> utt_ids;
  std::vector<std::string> labels;
  Matrix probs;  // utterances x classes

  std::size_t utterances() const { return utt_ids.size(); }
  std::size_t classes() const { return labels.size(); }

  /// Shape, unique ids, finite nonnegative rows summing to 1 within
  /// tolerance. Throws Error(kCorruptFile) on violation.
  void validate(double tolerance = 1e-4) const;
};

/// TSV: header "utt_id<TAB>label1...", one row per utterance, 9 significant
/// digits.
void write_scores(std::ostream& out, const ScoreMatrix& m);
void write_scores(const std::filesystem::path& path, const ScoreMatrix& m);
ScoreMatrix read_scores(std::istream& in, const std::string& context = "scores");
ScoreMatrix read_scores(const std::filesystem::path& path);

}  // namespace bsrkit
