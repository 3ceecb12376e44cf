#include "cadvlm/metrics.hpp"

#include <algorithm>

#include "cadvlm/error.hpp"

namespace cadvlm {

namespace {

// Size of the multiset intersection of two sorted ranges.
template <typename T>
int sorted_intersection(const std::vector<T>& a, const std::vector<T>& b) {
  int count = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++count;
      ++i;
      ++j;
    }
  }
  return count;
}

Constraint canonical_constraint(const Constraint& c) {
  Constraint out = c;
  std::sort(out.refs.begin(), out.refs.end());
  return out;
}

void require_nonempty(std::span<const MatchReport> reports) {
  if (reports.empty()) throw Error(Errc::EmptyCorpus, "no sketches to score");
}

}  // namespace

double MatchReport::f1() const {
  if (n_p == 0 && m == 0) return 1.0;
  if (n_p == 0 || m == 0 || n_c == 0) return 0.0;
  const double precision = static_cast<double>(n_c) / n_p;
  const double recall = static_cast<double>(n_c) / m;
  return 2.0 * precision * recall / (precision + recall);
}

MatchReport entity_match(std::span<const Entity> pred, std::span<const Entity> truth) {
  std::vector<Entity> p;
  std::vector<Entity> t;
  p.reserve(pred.size());
  t.reserve(truth.size());
  for (const auto& e : pred) p.push_back(canonicalize(e));
  for (const auto& e : truth) t.push_back(canonicalize(e));
  std::sort(p.begin(), p.end());
  std::sort(t.begin(), t.end());
  return {sorted_intersection(p, t), static_cast<int>(pred.size()), static_cast<int>(truth.size())};
}

MatchReport entity_match(const Sketch& pred, const Sketch& truth) {
  return entity_match(pred.entities, truth.entities);
}

MatchReport constraint_match(std::span<const Constraint> pred, std::span<const Constraint> truth) {
  std::vector<Constraint> p;
  std::vector<Constraint> t;
  for (const auto& c : pred) p.push_back(canonical_constraint(c));
  for (const auto& c : truth) t.push_back(canonical_constraint(c));
  std::sort(p.begin(), p.end());
  std::sort(t.begin(), t.end());
  return {sorted_intersection(p, t), static_cast<int>(pred.size()), static_cast<int>(truth.size())};
}

void CorpusTally::add(const MatchReport& r) {
  ++n;
  if (r.full_match()) ++n_s;
  if (r.any_match()) ++n_e;
  f1_sum += r.f1();
}

CorpusTally& CorpusTally::operator+=(const CorpusTally& other) {
  n += other.n;
  n_s += other.n_s;
  n_e += other.n_e;
  f1_sum += other.f1_sum;
  return *this;
}

CorpusTally tally(std::span<const MatchReport> reports) {
  CorpusTally t;
  for (const auto& r : reports) t.add(r);
  return t;
}

double sketch_accuracy(std::span<const MatchReport> reports) {
  require_nonempty(reports);
  const auto t = tally(reports);
  return static_cast<double>(t.n_s) / static_cast<double>(t.n);
}

double entity_accuracy(std::span<const MatchReport> reports) {
  require_nonempty(reports);
  const auto t = tally(reports);
  return static_cast<double>(t.n_e) / static_cast<double>(t.n);
}

double cad_f1(std::span<const MatchReport> reports) {
  require_nonempty(reports);
  const auto t = tally(reports);
  return t.f1_sum / static_cast<double>(t.n);
}

Scores score(const CorpusTally& t) {
  if (t.n == 0) throw Error(Errc::EmptyCorpus, "no sketches to score");
  const double n = static_cast<double>(t.n);
  return {static_cast<double>(t.n_s) / n, static_cast<double>(t.n_e) / n, t.f1_sum / n, t.n};
}

}  // namespace cadvlm
