#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <optional>
#include <sstream>

#include "bsrkit/error.hpp"
#include "bsrkit/fusion.hpp"
#include "fusion_fixtures.hpp"

namespace bsrkit {
namespace {

ScoreMatrix rows(std::vector<std::string> ids, std::vector<std::string> labels, std::vector<std::vector<double>> p) {
  ScoreMatrix m;
  m.utt_ids = std::move(ids);
  m.labels = std::move(labels);
  m.probs.resize(Eigen::Index(p.size()), Eigen::Index(p.front().size()));
  for (std::size_t r = 0; r < p.size(); ++r) {
    for (std::size_t c = 0; c < p[r].size(); ++c) m.probs(Eigen::Index(r), Eigen::Index(c)) = p[r][c];
  }
  return m;
}

TEST(Fuse, WorkedExample) {
  const auto a = rows({"u"}, {"x", "y"}, {{0.6, 0.4}});
  const auto b = rows({"u"}, {"x", "y"}, {{0.3, 0.7}});
  const auto f = fusion::fuse(fusion::FusionSpec{{a, b}, {0.5, 0.5}});
  EXPECT_NEAR(f.probs(0, 0), 0.45, 1e-15);
  EXPECT_NEAR(f.probs(0, 1), 0.55, 1e-15);
  EXPECT_EQ(fusion::predict(f), std::vector<std::size_t>{1});
}

TEST(Fuse, ThreeSourceArithmetic) {
  const auto u = rows({"u"}, {"x", "y", "z"}, {{1.0 / 3, 1.0 / 3, 1.0 / 3}});
  const auto h = rows({"u"}, {"x", "y", "z"}, {{0.0, 1.0, 0.0}});
  const std::vector<ScoreMatrix> src{u, u, h};
  const auto f = fusion::fuse(src);
  EXPECT_NEAR(f.probs(0, 0), 2.0 / 9, 1e-15);
  EXPECT_NEAR(f.probs(0, 1), 1.0 / 3 + 2.0 / 9, 1e-15);
}

TEST(Fuse, RandomFixtureProperties) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 4, utts = 1 + rng() % 6, classes = 2 + rng() % 5;
    std::vector<ScoreMatrix> src;
    for (std::size_t i = 0; i < n; ++i) src.push_back(testing::random_scores(utts, classes, rng));
    std::vector<double> w(n);
    for (auto& v : w) v = u(rng) + 0.01;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= total;
    w.back() = 1.0 - std::accumulate(w.begin(), w.end() - 1, 0.0);

    fusion::FusionSpec spec;
    for (const auto& s : src) spec.sources.push_back(s);
    spec.weights = w;
    const auto f = fusion::fuse(spec);
    for (Eigen::Index r = 0; r < f.probs.rows(); ++r) {
      ASSERT_GE(f.probs.row(r).minCoeff(), 0.0);
      ASSERT_NEAR(f.probs.row(r).sum(), 1.0, 1e-12);
    }

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    fusion::FusionSpec shuffled;
    for (auto i : perm) {
      shuffled.sources.push_back(src[i]);
      shuffled.weights.push_back(w[i]);
    }
    ASSERT_EQ(fusion::fuse(shuffled).probs, f.probs);

    fusion::FusionSpec same;
    for (std::size_t i = 0; i < n; ++i) same.sources.push_back(src[0]);
    same.weights = w;
    ASSERT_EQ(fusion::fuse(same).probs, src[0].probs);
  }
}

TEST(Fuse, AlignsByIdAndRejectsMismatch) {
  const auto a = rows({"u1", "u2"}, {"x", "y"}, {{0.6, 0.4}, {0.2, 0.8}});
  const auto b = rows({"u2", "u1"}, {"y", "x"}, {{0.9, 0.1}, {0.5, 0.5}});
  const std::vector<ScoreMatrix> src{a, b};
  const auto f = fusion::fuse(src);
  EXPECT_EQ(f.utt_ids, a.utt_ids);
  EXPECT_NEAR(f.probs(0, 0), 0.55, 1e-15);
  EXPECT_NEAR(f.probs(1, 1), 0.85, 1e-15);

  const auto missing = rows({"u1", "u3"}, {"x", "y"}, {{0.5, 0.5}, {0.5, 0.5}});
  EXPECT_THROW(fusion::fuse(std::vector<ScoreMatrix>{a, missing}), Error);
  const auto other_labels = rows({"u1", "u2"}, {"x", "z"}, {{0.5, 0.5}, {0.5, 0.5}});
  EXPECT_THROW(fusion::fuse(std::vector<ScoreMatrix>{a, other_labels}), Error);
  EXPECT_THROW(fusion::fuse(fusion::FusionSpec{{a, a}, {0.7, 0.7}}), Error);
  EXPECT_THROW(fusion::fuse(fusion::FusionSpec{{a, a}, {1.5, -0.5}}), Error);
  EXPECT_THROW(fusion::fuse(fusion::FusionSpec{{a, a}, {1.0}}), Error);
  EXPECT_THROW(fusion::fuse(std::vector<ScoreMatrix>{}), Error);
}

TEST(Predict, TiesAndScaleFree) {
  const auto m = rows({"a", "b", "c"}, {"x", "y"}, {{0.45, 0.55}, {0.5, 0.5}, {1.0, 0.0}});
  EXPECT_EQ(fusion::predict(m), (std::vector<std::size_t>{1, 0, 0}));
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    auto s = testing::random_scores(5, 4, rng);
    const auto before = fusion::predict(s);
    s.probs *= 7.25;
    EXPECT_EQ(fusion::predict(s), before);
  }
}

TEST(Accuracy, Examples) {
  const auto m = rows({"a", "b", "c", "d"}, {"x", "y"}, {{0.9, 0.1}, {0.9, 0.1}, {0.9, 0.1}, {0.9, 0.1}});
  EXPECT_EQ(fusion::accuracy(m, {{"a", "x"}, {"b", "x"}, {"c", "x"}, {"d", "x"}}), 100.0);
  EXPECT_EQ(fusion::accuracy(m, {{"a", "x"}, {"b", "y"}, {"c", "y"}, {"d", "y"}}), 25.0);
  EXPECT_THROW(fusion::accuracy(m, {{"a", "x"}}), Error);
}

TEST(Accuracy, ComplementaryErrorsFuseBetter) {
  const auto f = testing::complementary_fixture();
  std::vector<fusion::NamedScores> named;
  for (std::size_t i = 0; i < 3; ++i) named.push_back({"s" + std::to_string(i), f.sources[i]});
  const auto sweep = fusion::sweep_combinations(named, f.truth);
  ASSERT_EQ(sweep.size(), 7u);
  for (const auto& row : sweep) {
    std::vector<const ScoreMatrix*> members;
    for (auto i : row.members) members.push_back(&f.sources[i]);
    EXPECT_DOUBLE_EQ(row.accuracy, testing::brute_force_accuracy(members, f.truth)) << row.name;
    if (row.members.size() > 1) {
      for (auto i : row.members) EXPECT_GT(row.accuracy, sweep[i].accuracy) << row.name;
    }
  }
  EXPECT_EQ(sweep[3].name, "s0&s1");
  EXPECT_EQ(sweep[6].name, "s0&s1&s2");
}

TEST(Accuracy, WeightSweepMatchesEnumeration) {
  const auto f = testing::complementary_fixture();
  for (int k = 0; k <= 20; ++k) {
    const double w = k / 20.0;
    const auto fused = fusion::fuse(fusion::FusionSpec{{f.sources[0], f.sources[1]}, {w, 1.0 - w}});
    std::size_t correct = 0;
    for (std::size_t u = 0; u < 30; ++u) {
      std::size_t best = 0;
      double bv = -1;
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = w * f.sources[0].probs(Eigen::Index(u), Eigen::Index(c)) +
                         (1 - w) * f.sources[1].probs(Eigen::Index(u), Eigen::Index(c));
        if (v > bv + 1e-12) {
          bv = v;
          best = c;
        }
      }
      correct += f.sources[0].labels[best] == f.truth.at(f.sources[0].utt_ids[u]);
    }
    EXPECT_DOUBLE_EQ(fusion::accuracy(fused, f.truth), 100.0 * correct / 30.0) << w;
  }
}

TEST(Sweep, RowCountsAndDuplicates) {
  EXPECT_EQ(fusion::subsets(4, 3).size(), 14u);
  EXPECT_EQ(fusion::subsets(1, 3).size(), 1u);
  std::mt19937_64 rng(5);
  const auto a = testing::random_scores(8, 3, rng);
  fusion::Truth truth;
  for (const auto& id : a.utt_ids) truth[id] = "class1";
  const std::vector<fusion::NamedScores> named{{"a", a}, {"a2", a}};
  const auto sweep = fusion::sweep_combinations(named, truth);
  ASSERT_EQ(sweep.size(), 3u);
  EXPECT_EQ(sweep[2].accuracy, sweep[0].accuracy);
}

TEST(Sweep, TableTsv) {
  const auto f = testing::complementary_fixture();
  std::vector<std::vector<fusion::NamedScores>> by_cond(2);
  for (auto& cond : by_cond) {
    for (std::size_t i = 0; i < 3; ++i) cond.push_back({"s" + std::to_string(i), f.sources[i]});
  }
  const auto table = fusion::sweep_table({"clear", "white_10dB"}, by_cond, f.truth);
  std::ostringstream out;
  fusion::write_accuracy_tsv(out, table);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "features\tclear\twhite_10dB");
  std::getline(in, line);
  EXPECT_EQ(line, "s0\t90.00\t90.00");
  int rows_seen = 1;
  while (std::getline(in, line)) ++rows_seen;
  EXPECT_EQ(rows_seen, 7);
}

fusion::ConfusionMatrix cm_of(std::vector<std::vector<std::int64_t>> counts) {
  fusion::ConfusionMatrix cm;
  for (std::size_t i = 0; i < counts.size(); ++i) cm.labels.push_back(std::string(1, char('a' + i)));
  cm.counts = std::move(counts);
  return cm;
}

TEST(Confusion, CountsPredictedByActual) {
  const auto m = rows({"1", "2", "3"}, {"x", "y"}, {{0.9, 0.1}, {0.2, 0.8}, {0.7, 0.3}});
  const auto cm = fusion::confusion(m, {{"1", "x"}, {"2", "y"}, {"3", "y"}});
  EXPECT_EQ(cm.counts, (std::vector<std::vector<std::int64_t>>{{1, 1}, {0, 1}}));
  EXPECT_EQ(cm.total(), 3);
  EXPECT_EQ(cm.column_sum(1), 2);
  EXPECT_DOUBLE_EQ(cm.class_accuracy(1), 0.5);
  std::ostringstream csv;
  fusion::write_confusion_csv(csv, cm);
  EXPECT_EQ(csv.str(), "predicted\\actual,x,y\nx,1,1\ny,0,1\n");
  std::ostringstream svg;
  fusion::write_confusion_svg(svg, cm, "t");
  EXPECT_EQ(svg.str().rfind("<svg", 0), 0u);
  EXPECT_NE(svg.str().find("</svg>"), std::string::npos);
}

TEST(Confusion, PerfectAndSingleWrong) {
  const auto m = rows({"1", "2"}, {"x", "y"}, {{0.9, 0.1}, {0.2, 0.8}});
  EXPECT_EQ(fusion::confusion(m, {{"1", "x"}, {"2", "y"}}).counts, (std::vector<std::vector<std::int64_t>>{{1, 0}, {0, 1}}));
  const auto one = rows({"1"}, {"x", "y"}, {{0.9, 0.1}});
  EXPECT_EQ(fusion::confusion(one, {{"1", "y"}}).counts, (std::vector<std::vector<std::int64_t>>{{0, 1}, {0, 0}}));
}

TEST(ConfusionDiff, Examples) {
  const auto a = cm_of({{3, 0}, {0, 3}});
  const auto same = fusion::confusion_diff(a, a);
  for (const auto& c : same.cells) EXPECT_EQ(c.marker, fusion::Marker::kTie);
  EXPECT_EQ(same.cells.size(), 2u);

  const auto b = cm_of({{3, 1}, {0, 2}});
  const auto d = fusion::confusion_diff(a, b);
  ASSERT_EQ(d.cells.size(), 3u);
  EXPECT_EQ(d.cells[0], (fusion::DiffCell{0, 0, fusion::Marker::kTie}));
  EXPECT_EQ(d.cells[1], (fusion::DiffCell{0, 1, fusion::Marker::kBUniqueError}));
  EXPECT_EQ(d.cells[2], (fusion::DiffCell{1, 1, fusion::Marker::kABetter}));

  EXPECT_THROW(fusion::confusion_diff(a, cm_of({{3, 0}, {0, 2}})), Error);
  EXPECT_THROW(fusion::confusion_diff(a, cm_of({{6}})), Error);
}

TEST(ConfusionDiff, MatchesBruteForce) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng() % 4;
    std::vector<std::vector<std::int64_t>> ca(n, std::vector<std::int64_t>(n)), cb = ca;
    // Same column sums for both so totals agree.
    for (std::size_t col = 0; col < n; ++col) {
      const int total = 1 + int(rng() % 6);
      for (int k = 0; k < total; ++k) {
        ca[rng() % 3 == 0 ? rng() % n : col][col]++;
        cb[rng() % 3 == 0 ? rng() % n : col][col]++;
      }
    }
    const auto a = cm_of(ca), b = cm_of(cb);
    const auto d = fusion::confusion_diff(a, b);
    std::size_t idx = 0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = 0; q < n; ++q) {
        std::optional<fusion::Marker> want;
        if (p == q) {
          const double ra = double(ca[p][p]) / double(a.column_sum(p));
          const double rb = double(cb[p][p]) / double(b.column_sum(p));
          want = ra > rb ? fusion::Marker::kABetter : ra < rb ? fusion::Marker::kBBetter : fusion::Marker::kTie;
        } else if (ca[p][q] && cb[p][q]) {
          want = fusion::Marker::kSharedError;
        } else if (ca[p][q]) {
          want = fusion::Marker::kAUniqueError;
        } else if (cb[p][q]) {
          want = fusion::Marker::kBUniqueError;
        }
        if (!want) continue;
        ASSERT_LT(idx, d.cells.size());
        EXPECT_EQ(d.cells[idx], (fusion::DiffCell{p, q, *want}));
        ++idx;
      }
    }
    EXPECT_EQ(idx, d.cells.size());
  }
  std::ostringstream out;
  fusion::write_diff_tsv(out, fusion::confusion_diff(cm_of({{3, 0}, {0, 3}}), cm_of({{3, 1}, {0, 2}})));
  EXPECT_EQ(out.str(), "predicted\tactual\tmarker\na\ta\ttie\na\tb\tb-unique-error\nb\tb\ta-better\n");
}

}  // namespace
}  // namespace bsrkit
