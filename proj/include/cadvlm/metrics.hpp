#pragma once

#include <span>
#include <vector>

#include "cadvlm/sketch.hpp"

namespace cadvlm {

// Per-sketch match counts.
struct MatchReport {
  int n_c = 0;  // correct items
  int n_p = 0;  // predicted items
  int m = 0;    // ground-truth items

  bool full_match() const { return n_c == m && n_c == n_p; }
  bool any_match() const { return n_c >= 1; }
  double f1() const;

  bool operator==(const MatchReport&) const = default;
};

// Multiset intersection of canonicalized entities (exact token equality).
MatchReport entity_match(std::span<const Entity> pred, std::span<const Entity> truth);
MatchReport entity_match(const Sketch& pred, const Sketch& truth);

// Constraints compare by type and sorted entity references.
MatchReport constraint_match(std::span<const Constraint> pred, std::span<const Constraint> truth);

// Corpus counters. Addition is associative and commutative, so tallies over
// shards can be reduced in any order.
struct CorpusTally {
  long long n = 0;    // N
  long long n_s = 0;  // N_s: sketches reproduced exactly
  long long n_e = 0;  // N_e: sketches with at least one correct item
  double f1_sum = 0.0;

  void add(const MatchReport& r);
  CorpusTally& operator+=(const CorpusTally& other);
};

CorpusTally tally(std::span<const MatchReport> reports);

// All three throw Errc::EmptyCorpus when there are no reports.
double sketch_accuracy(std::span<const MatchReport> reports);
double entity_accuracy(std::span<const MatchReport> reports);
double cad_f1(std::span<const MatchReport> reports);

struct Scores {
  double ske_acc = 0.0;
  double ent_acc = 0.0;
  double cad_f1 = 0.0;
  long long n = 0;
};

Scores score(const CorpusTally& t);  // throws Errc::EmptyCorpus when t.n == 0

}  // namespace cadvlm
