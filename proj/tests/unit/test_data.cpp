#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cadvlm/data.hpp"
#include "expect_error.hpp"
#include "generators.hpp"

using namespace cadvlm;
using gen::error_code;

namespace {

std::string jsonl(const std::vector<Sketch>& sketches) {
  std::ostringstream os;
  write_sketches(os, sketches);
  return os.str();
}

IngestResult ingest_text(const std::string& text) {
  std::istringstream in(text);
  return ingest(in, "mem");
}

std::multiset<std::vector<int>> entity_multiset(std::span<const Entity> entities) {
  std::multiset<std::vector<int>> out;
  for (const auto& e : entities) {
    std::vector<int> key{static_cast<int>(e.kind)};
    for (const auto& p : canonicalize(e).points) {
      key.push_back(p.qx);
      key.push_back(p.qy);
    }
    out.insert(key);
  }
  return out;
}

const char* const kGoldenSynth =
    R"({"constraints":[{"refs":[0,1],"type":"coincident"},{"refs":[1,2],"type":"coincident"},)"
    R"({"refs":[2,3],"type":"coincident"},{"refs":[3,0],"type":"coincident"},)"
    R"({"refs":[0],"type":"horizontal"},{"refs":[2],"type":"horizontal"},{"refs":[0,1],"type":"tangent"},)"
    R"({"refs":[2,3],"type":"tangent"},{"refs":[1,3],"type":"equal"},{"refs":[4,5],"type":"equal"},)"
    R"({"refs":[4,6],"type":"equal"},)"
    R"({"refs":[4,7],"type":"equal"}],"entities":[{"kind":"line","pts":[[52,21],[13,21]]},)"
    R"({"kind":"arc","pts":[[13,21],[1,33],[13,44]]},{"kind":"line","pts":[[13,44],[52,44]]},)"
    R"({"kind":"arc","pts":[[52,44],[64,33],[52,21]]},)"
    R"({"kind":"circle","pts":[[42,27],[46,31],[50,27],[46,23]]},)"
    R"({"kind":"circle","pts":[[15,27],[19,31],[23,27],[19,23]]},)"
    R"({"kind":"circle","pts":[[15,38],[19,42],[23,38],[19,34]]},)"
    R"({"kind":"circle","pts":[[42,38],[46,42],[50,38],[46,34]]}]})";

}  // namespace

TEST(Ingest, DuplicatesCollapse) {
  Rng rng(1);
  const Sketch s = gen::valid_sketch(rng);
  const IngestResult r = ingest_text(jsonl({s, s}));
  EXPECT_EQ(r.total(), 1u);
  EXPECT_EQ(r.duplicates, 1);
  EXPECT_TRUE(r.skipped.empty());
}

TEST(Ingest, ReversedLineIsADuplicate) {
  Sketch a{{{EntityKind::Line, {{3, 4}, {9, 9}}}}, {}};
  Sketch b{{{EntityKind::Line, {{9, 9}, {3, 4}}}}, {}};
  EXPECT_EQ(ingest_text(jsonl({a, b})).total(), 1u);
}

TEST(Ingest, InvalidLineIsReported) {
  Rng rng(2);
  std::vector<Sketch> good;
  while (good.size() < 4) good.push_back(gen::distinct_sketch(rng));
  std::istringstream lines(jsonl(good));
  std::vector<std::string> rows;
  for (std::string line; std::getline(lines, line);) rows.push_back(line);
  rows.insert(rows.begin() + 2, R"({"entities":[{"kind":"line","pts":[[4,4],[4,4]]}],"constraints":[]})");
  std::string text;
  for (const auto& r : rows) text += r + "\n";
  IngestResult r = ingest_text(text);
  EXPECT_EQ(r.total(), 4u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].line, 3);

  rows[2] = "{not json";
  text.clear();
  for (const auto& row : rows) text += row + "\n\n";
  r = ingest_text(text);
  EXPECT_EQ(r.total(), 4u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].line, 5);
}

TEST(Ingest, MissingFile) {
  EXPECT_EQ(error_code([] { ingest("/nonexistent/corpus.jsonl"); }), Errc::Io);
}

TEST(Ingest, SplitProportions) {
  const Corpus c = synth_corpus(10000, 3);
  const IngestResult r = ingest_text(jsonl(c.sketches));
  ASSERT_EQ(r.total(), 10000u);
  const double total = 626236.0 + 22031.0 + 21979.0;
  EXPECT_NEAR(r.train.size() / 1e4, 626236.0 / total, 0.01);
  EXPECT_NEAR(r.val.size() / 1e4, 22031.0 / total, 0.01);
  EXPECT_NEAR(r.test.size() / 1e4, 21979.0 / total, 0.01);
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    for (const Sketch& k : r.get(s).sketches) ASSERT_EQ(split_for(k), s);
    EXPECT_EQ(r.get(s).split, s);
  }
}

TEST(Ingest, ExportIsIdempotent) {
  const Corpus c = synth_corpus(500, 4);
  const IngestResult first = ingest_text(jsonl(c.sketches));
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    const Corpus& part = first.get(s);
    const IngestResult again = ingest_text(jsonl(part.sketches));
    EXPECT_EQ(again.get(s).sketches, part.sketches);
    EXPECT_EQ(again.get(s).content_hash, part.content_hash);
    EXPECT_EQ(again.total(), part.size());
  }
}

TEST(Ingest, NoDuplicatesWithinSplit) {
  Rng rng(5);
  std::vector<Sketch> many;
  for (int i = 0; i < 300; ++i) {
    const Sketch s = gen::valid_sketch(rng, 3, 1);
    many.push_back(s);
    if (rng.bernoulli(0.3)) many.push_back(s);
  }
  const IngestResult r = ingest_text(jsonl(many));
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    std::set<std::vector<int>> seen;
    for (const Sketch& k : r.get(s).sketches) {
      std::vector<int> key;
      for (const auto& e : k.entities) {
        const auto ent = encode_entities(std::vector<Entity>{canonicalize(e)}).tokens;
        key.insert(key.end(), ent.begin(), ent.end());
      }
      for (const auto& con : k.constraints) {
        key.push_back(static_cast<int>(con.type));
        key.insert(key.end(), con.refs.begin(), con.refs.end());
      }
      EXPECT_TRUE(seen.insert(key).second);
    }
  }
}

TEST(ReadSketches, StrictWithLineNumbers) {
  std::istringstream in("{\"entities\":[],\"constraints\":[]}\n\n[1,2]\n");
  try {
    read_sketches(in, "f.jsonl");
    FAIL() << "expected ParseError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
    EXPECT_NE(std::string(e.what()).find("f.jsonl:3"), std::string::npos) << e.what();
  }
}

TEST(Synth, Golden) {
  const Corpus c = synth_corpus(1, 0);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(to_json(c.sketches[0]).dump(), kGoldenSynth);
  EXPECT_EQ(c.source, "synth:0");
}

TEST(Synth, ValidAndWellFormed) {
  const Corpus c = synth_corpus(10000, 6);
  ASSERT_EQ(c.size(), 10000u);
  std::set<std::uint64_t> hashes;
  std::map<EntityKind, int> kinds;
  int with_constraints = 0;
  for (const Sketch& s : c.sketches) {
    ASSERT_TRUE(validate(s).empty());
    ASSERT_GE(s.entities.size(), 2u);
    ASSERT_LE(s.entities.size(), 10u);
    ASSERT_EQ(entity_multiset(s.entities).size(), s.entities.size());
    for (const auto& e : s.entities) ++kinds[e.kind];
    with_constraints += !s.constraints.empty();
    hashes.insert(content_hash(s));
  }
  EXPECT_EQ(hashes.size(), c.size());
  EXPECT_GT(kinds[EntityKind::Line], 0);
  EXPECT_GT(kinds[EntityKind::Arc], 0);
  EXPECT_GT(kinds[EntityKind::Circle], 0);
  EXPECT_GT(with_constraints, 9000);
}

TEST(Synth, Deterministic) {
  const Corpus a = synth_corpus(200, 7), b = synth_corpus(200, 7), c = synth_corpus(200, 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.content_hash, c.content_hash);
  EXPECT_EQ(a.content_hash, corpus_hash(a.sketches));
}

TEST(MakeExample, TwoEntitiesGiveOnePrefix) {
  Rng rng(9);
  const Corpus c = synth_corpus(200, 10);
  for (const Sketch& s : c.sketches) {
    if (s.entities.size() != 2) continue;
    for (int t = 0; t < 20; ++t) EXPECT_EQ(make_example(s, rng, std::nullopt, {}, false).prefix_indices.size(), 1u);
  }
  const Sketch two{{{EntityKind::Line, {{1, 1}, {5, 5}}}, {EntityKind::Line, {{5, 5}, {9, 1}}}}, {}};
  for (double r : {0.0, 0.2, 0.5, 0.8, 1.0})
    EXPECT_EQ(make_example(two, rng, r, {}, false).prefix_indices.size(), 1u);
}

TEST(MakeExample, OverrideRatio) {
  Rng rng(11);
  Sketch ten;
  for (int i = 0; i < 10; ++i) ten.entities.push_back({EntityKind::Line, {{1 + i, 1}, {1 + i, 30}}});
  const Example e = make_example(ten, rng, 0.8);
  EXPECT_EQ(e.prefix_indices.size(), 8u);
  EXPECT_EQ(e.suffix_entities.size(), 2u);
  EXPECT_EQ(e.ratio, 0.8);
  EXPECT_EQ(make_example(ten, rng, 0.2, {}, false).prefix_indices.size(), 2u);
  EXPECT_EQ(make_example(ten, rng, 0.25, {}, false).prefix_indices.size(), 3u);
}

TEST(MakeExample, PartitionProperty) {
  Rng rng(12);
  const Corpus c = synth_corpus(500, 13);
  for (int t = 0; t < 10000; ++t) {
    const Sketch& s = c.sketches[static_cast<std::size_t>(t) % c.size()];
    const Example e = make_example(s, rng, std::nullopt, {}, false);
    const int m = static_cast<int>(s.entities.size());
    const int k = static_cast<int>(e.prefix_indices.size());
    ASSERT_GE(k, 1);
    ASSERT_LE(k, m - 1);
    ASSERT_GE(e.ratio, kMinPrefixRatio);
    ASSERT_LE(e.ratio, kMaxPrefixRatio);
    ASSERT_TRUE(std::is_sorted(e.prefix_indices.begin(), e.prefix_indices.end()));
    ASSERT_EQ(k, std::clamp(static_cast<int>(std::floor(e.ratio * m + 0.5)), 1, m - 1));

    std::vector<Entity> all = e.prefix_sketch.entities;
    all.insert(all.end(), e.suffix_entities.begin(), e.suffix_entities.end());
    ASSERT_EQ(entity_multiset(all), entity_multiset(s.entities));

    // Prefix and suffix each keep the original order.
    std::vector<bool> in_prefix(static_cast<std::size_t>(m), false);
    for (std::size_t i = 0; i < e.prefix_indices.size(); ++i) {
      in_prefix[static_cast<std::size_t>(e.prefix_indices[i])] = true;
      ASSERT_EQ(e.prefix_sketch.entities[i], s.entities[static_cast<std::size_t>(e.prefix_indices[i])]);
    }
    std::size_t j = 0;
    for (int i = 0; i < m; ++i)
      if (!in_prefix[static_cast<std::size_t>(i)]) ASSERT_EQ(e.suffix_entities[j++], s.entities[static_cast<std::size_t>(i)]);
    ASSERT_EQ(e.prefix, encode_entities(e.prefix_sketch.entities));
    ASSERT_EQ(e.suffix, encode_entities(e.suffix_entities));
    ASSERT_TRUE(e.prefix_sketch.constraints.empty());
  }
}

TEST(MakeExample, Images) {
  Rng rng(14);
  const Sketch s = synth_corpus(1, 15).sketches[0];
  const Example e = make_example(s, rng, 0.5);
  EXPECT_EQ(e.input_image, rasterize(e.prefix_sketch));
  EXPECT_EQ(e.target_image, rasterize(Sketch{s.entities, {}}));
  EXPECT_NE(e.input_image, e.target_image);
}

TEST(MakeExample, PrefixDrawIsUniform) {
  Rng rng(16);
  Sketch five;
  for (int i = 0; i < 5; ++i) five.entities.push_back({EntityKind::Line, {{1 + i, 1}, {1 + i, 30}}});
  std::vector<int> counts(5, 0);
  const int trials = 20000;
  for (int t = 0; t < trials; ++t)
    for (int i : make_example(five, rng, 0.4, {}, false).prefix_indices) ++counts[static_cast<std::size_t>(i)];
  // Each index appears with probability 2/5; 5 sigma band.
  const double expect = trials * 0.4, sigma = std::sqrt(trials * 0.4 * 0.6);
  for (int c : counts) EXPECT_NEAR(c, expect, 5 * sigma);
}

TEST(MakeExample, TooFewEntities) {
  Rng rng(17);
  const Sketch one{{{EntityKind::Line, {{1, 1}, {5, 5}}}}, {}};
  EXPECT_EQ(error_code([&] { make_example(one, rng); }), Errc::TooFewEntities);
  EXPECT_EQ(error_code([&] { make_example(Sketch{}, rng); }), Errc::TooFewEntities);
}
