#include <gtest/gtest.h>

#include <algorithm>

#include "cadvlm/error.hpp"
#include "cadvlm/metrics.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace cadvlm;
using gen::brute_force_correct;
using gen::brute_force_f1;
using gen::perturbed;

namespace {

Entity line(int a, int b, int c, int d) { return {EntityKind::Line, {{a, b}, {c, d}}}; }

MatchReport rep(int n_c, int n_p, int m) { return {n_c, n_p, m}; }

template <typename F>
Errc error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an exception";
  return Errc::Io;
}

}  // namespace

TEST(EntityMatch, Examples) {
  const std::vector<Entity> truth{line(1, 1, 5, 5), line(5, 5, 9, 1), line(9, 1, 1, 1)};
  EXPECT_EQ(entity_match(truth, truth), rep(3, 3, 3));
  EXPECT_EQ(entity_match(std::vector<Entity>{}, truth), rep(0, 0, 3));
  const std::vector<Entity> dup{line(1, 1, 5, 5), line(5, 5, 1, 1)};
  EXPECT_EQ(entity_match(dup, std::vector<Entity>{line(1, 1, 5, 5)}), rep(1, 2, 1));
}

TEST(EntityMatch, MatchesBruteForce) {
  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const Sketch truth = gen::valid_sketch(rng, 8, 0);
    const auto pred = perturbed(truth.entities, rng);
    const MatchReport r = entity_match(pred, truth.entities);
    ASSERT_EQ(r.n_c, brute_force_correct(pred, truth.entities));
    ASSERT_EQ(r.n_p, static_cast<int>(pred.size()));
    ASSERT_EQ(r.m, static_cast<int>(truth.entities.size()));
    ASSERT_LE(r.n_c, std::min(r.n_p, r.m));
  }
}

TEST(EntityMatch, PermutationInvariant) {
  Rng rng(32);
  for (int i = 0; i < 500; ++i) {
    const Sketch truth = gen::valid_sketch(rng, 8, 0);
    auto pred = perturbed(truth.entities, rng);
    const MatchReport before = entity_match(pred, truth.entities);
    auto t = truth.entities;
    rng.shuffle(pred.begin(), pred.end());
    rng.shuffle(t.begin(), t.end());
    ASSERT_EQ(entity_match(pred, t), before);
  }
}

TEST(ConstraintMatch, TypeAndRefs) {
  const std::vector<Constraint> truth{{ConstraintType::Coincident, {0, 1}}, {ConstraintType::Horizontal, {0}}};
  const std::vector<Constraint> pred{{ConstraintType::Coincident, {1, 0}}, {ConstraintType::Vertical, {0}}};
  EXPECT_EQ(constraint_match(pred, truth), rep(1, 2, 2));
  EXPECT_EQ(constraint_match(std::vector<Constraint>{}, std::vector<Constraint>{}), rep(0, 0, 0));
}

TEST(F1, Conventions) {
  EXPECT_DOUBLE_EQ(rep(0, 0, 0).f1(), 1.0);
  EXPECT_DOUBLE_EQ(rep(0, 0, 3).f1(), 0.0);
  EXPECT_DOUBLE_EQ(rep(0, 3, 0).f1(), 0.0);
  EXPECT_DOUBLE_EQ(rep(0, 2, 2).f1(), 0.0);
  EXPECT_DOUBLE_EQ(rep(1, 2, 2).f1(), 0.5);
  EXPECT_DOUBLE_EQ(rep(3, 3, 3).f1(), 1.0);
}

TEST(CorpusMetrics, Examples) {
  const std::vector<MatchReport> perfect(4, rep(2, 2, 2));
  EXPECT_DOUBLE_EQ(sketch_accuracy(perfect), 1.0);
  EXPECT_DOUBLE_EQ(cad_f1(perfect), 1.0);
  const std::vector<MatchReport> none(4, rep(0, 2, 2));
  EXPECT_DOUBLE_EQ(sketch_accuracy(none), 0.0);
  const std::vector<MatchReport> one_of_four{rep(2, 2, 2), rep(1, 2, 2), rep(0, 1, 2), rep(2, 3, 2)};
  EXPECT_DOUBLE_EQ(sketch_accuracy(one_of_four), 0.25);

  std::vector<MatchReport> mixed(10, rep(0, 2, 3));
  for (int i = 0; i < 7; ++i) mixed[static_cast<std::size_t>(i)] = rep(1, 2, 3);
  EXPECT_DOUBLE_EQ(entity_accuracy(mixed), 0.7);
  const std::vector<MatchReport> all_empty(5, rep(0, 0, 2));
  EXPECT_DOUBLE_EQ(entity_accuracy(all_empty), 0.0);
  const std::vector<MatchReport> all_share(3, rep(1, 4, 4));
  EXPECT_DOUBLE_EQ(entity_accuracy(all_share), 1.0);
}

TEST(CorpusMetrics, EmptyCorpus) {
  const std::vector<MatchReport> empty;
  EXPECT_EQ(error_code([&] { sketch_accuracy(empty); }), Errc::EmptyCorpus);
  EXPECT_EQ(error_code([&] { entity_accuracy(empty); }), Errc::EmptyCorpus);
  EXPECT_EQ(error_code([&] { cad_f1(empty); }), Errc::EmptyCorpus);
  EXPECT_EQ(error_code([] { score(CorpusTally{}); }), Errc::EmptyCorpus);
}

TEST(CorpusMetrics, BoundsAndOrdering) {
  Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MatchReport> reports;
    const int n = rng.uniform_int(1, 30);
    for (int i = 0; i < n; ++i) {
      const Sketch truth = gen::valid_sketch(rng, 6, 0);
      reports.push_back(entity_match(perturbed(truth.entities, rng), truth.entities));
    }
    const double s = sketch_accuracy(reports), e = entity_accuracy(reports), f = cad_f1(reports);
    ASSERT_LE(0.0, s);
    ASSERT_LE(s, e);
    ASSERT_LE(e, 1.0);
    ASSERT_GE(f, 0.0);
    ASSERT_LE(f, 1.0);
  }
}

TEST(CorpusTally, ReductionOrderDoesNotMatter) {
  Rng rng(34);
  std::vector<MatchReport> reports;
  for (int i = 0; i < 100; ++i) {
    const int m = rng.uniform_int(0, 5), n_p = rng.uniform_int(0, 5);
    reports.push_back(rep(rng.uniform_int(0, std::min(m, n_p)), n_p, m));
  }
  CorpusTally left = tally(std::span(reports).subspan(0, 37));
  const CorpusTally right = tally(std::span(reports).subspan(37));
  left += right;
  const CorpusTally whole = tally(reports);
  EXPECT_EQ(left.n, whole.n);
  EXPECT_EQ(left.n_s, whole.n_s);
  EXPECT_EQ(left.n_e, whole.n_e);
  EXPECT_NEAR(left.f1_sum, whole.f1_sum, 1e-12);
}

TEST(CorpusMetrics, MatchesBruteForceScores) {
  Rng rng(35);
  std::vector<MatchReport> reports;
  double f1_sum = 0.0;
  int full = 0, any = 0;
  for (int i = 0; i < 1000; ++i) {
    const Sketch truth = gen::valid_sketch(rng, 8, 0);
    const auto pred = rng.bernoulli(0.05) ? std::vector<Entity>{} : perturbed(truth.entities, rng);
    const int n_c = brute_force_correct(pred, truth.entities);
    const int n_p = static_cast<int>(pred.size()), m = static_cast<int>(truth.entities.size());
    f1_sum += brute_force_f1(n_c, n_p, m);
    full += (n_c == m && n_c == n_p);
    any += (n_c >= 1);
    reports.push_back(entity_match(pred, truth.entities));
  }
  EXPECT_EQ(sketch_accuracy(reports), full / 1000.0);
  EXPECT_EQ(entity_accuracy(reports), any / 1000.0);
  EXPECT_NEAR(cad_f1(reports), f1_sum / 1000.0, 1e-12);
}
