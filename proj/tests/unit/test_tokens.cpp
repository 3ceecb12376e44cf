#include <gtest/gtest.h>

#include <algorithm>

#include "cadvlm/error.hpp"
#include "cadvlm/tokens.hpp"
#include "generators.hpp"

using namespace cadvlm;

namespace {

Entity line(int a, int b, int c, int d) { return {EntityKind::Line, {{a, b}, {c, d}}}; }
Entity circle() { return {EntityKind::Circle, {{40, 32}, {32, 40}, {24, 32}, {32, 24}}}; }
Entity arc() { return {EntityKind::Arc, {{10, 10}, {20, 30}, {30, 10}}}; }

std::vector<int> block(const Entity& e) {
  std::vector<int> out;
  append_entity_block(e, out);
  return out;
}

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

TEST(Vocab, ConstraintTableIsVerbatim) {
  const std::pair<ConstraintType, int> table[] = {
      {ConstraintType::Coincident, 65}, {ConstraintType::Concentric, 66}, {ConstraintType::Equal, 67},
      {ConstraintType::Fix, 68},        {ConstraintType::Horizontal, 69}, {ConstraintType::Midpoint, 70},
      {ConstraintType::Normal, 71},     {ConstraintType::Offset, 72},     {ConstraintType::Parallel, 73},
      {ConstraintType::Perpendicular, 74}, {ConstraintType::Quadrant, 75}, {ConstraintType::Tangent, 76},
      {ConstraintType::Vertical, 77}};
  for (auto [type, token] : table) {
    EXPECT_EQ(constraint_token(type), token);
    EXPECT_EQ(constraint_from_token(token), type);
  }
  EXPECT_EQ(constraint_from_token(64), std::nullopt);
  EXPECT_EQ(constraint_from_token(78), std::nullopt);
}

TEST(Vocab, RangesAreDisjoint) {
  std::vector<int> seen(vocab::kSize, 0);
  for (int t = vocab::kCoordMin; t <= vocab::kCoordMax; ++t) ++seen[static_cast<std::size_t>(t)];
  for (int t = vocab::kConstraintMin; t <= vocab::kConstraintMax; ++t) ++seen[static_cast<std::size_t>(t)];
  for (int t : {vocab::kPad, vocab::kBos, vocab::kEos, vocab::kEntSep, vocab::kConSep, vocab::kKindLine,
                vocab::kKindArc, vocab::kKindCircle}) {
    ++seen[static_cast<std::size_t>(t)];
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  EXPECT_EQ(vocab::kSize, 85);
}

TEST(EncodePrimitives, Layout) {
  const Sketch s{{line(1, 1, 64, 64)}, {}};
  EXPECT_EQ(encode_primitives(s).tokens, (std::vector<int>{78, 82, 1, 1, 64, 64, 80, 79}));
  EXPECT_EQ(encode_primitives(Sketch{{circle()}, {}}).tokens.size(), 12u);
}

TEST(EncodePrimitives, LengthFormula) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Sketch s = gen::valid_sketch(rng);
    std::size_t expected = 2;
    for (const auto& e : s.entities) expected += 2 + 2 * e.points.size();
    ASSERT_EQ(encode_primitives(s).tokens.size(), expected);
  }
}

TEST(EncodePrimitives, RejectsInvalid) {
  EXPECT_EQ(error_code([] { encode_primitives(Sketch{{line(2, 2, 2, 2)}, {}}); }), Errc::InvalidSketch);
}

TEST(DecodePrimitives, Examples) {
  const auto ok = decode_primitives(TokenSeq{{78, 82, 1, 1, 64, 64, 80, 79}});
  EXPECT_EQ(ok.sketch.entities, (std::vector<Entity>{line(1, 1, 64, 64)}));
  EXPECT_TRUE(ok.flags.empty());

  const auto truncated = decode_primitives(TokenSeq{{78, 82, 1, 1, 79}});
  EXPECT_TRUE(truncated.sketch.entities.empty());
  EXPECT_EQ(truncated.flags, (std::vector<DecodeFlag>{DecodeFlag::MalformedTail}));
}

TEST(DecodePrimitives, KeepsCompleteEntitiesBeforeBadTail) {
  std::vector<int> t = {78};
  for (int v : block(arc())) t.push_back(v);
  t.push_back(80);
  for (int v : {84, 1, 2, 70}) t.push_back(v);
  const auto d = decode_primitives(TokenSeq{t});
  EXPECT_EQ(d.sketch.entities, (std::vector<Entity>{arc()}));
  EXPECT_EQ(d.flags, (std::vector<DecodeFlag>{DecodeFlag::MalformedTail}));
}

TEST(DecodePrimitives, SkipsDegenerateEntity) {
  const auto d = decode_primitives(TokenSeq{{78, 82, 5, 5, 5, 5, 80, 82, 1, 1, 2, 2, 80, 79}});
  EXPECT_EQ(d.sketch.entities, (std::vector<Entity>{line(1, 1, 2, 2)}));
  EXPECT_EQ(d.flags, (std::vector<DecodeFlag>{DecodeFlag::DegenerateEntity}));
}

TEST(DecodePrimitives, MissingEosIsMalformed) {
  const auto d = decode_primitives(TokenSeq{{78, 82, 1, 1, 2, 2, 80}});
  EXPECT_EQ(d.sketch.entities.size(), 1u);
  EXPECT_EQ(d.flags, (std::vector<DecodeFlag>{DecodeFlag::MalformedTail}));
}

TEST(Primitives, RoundTripProperty) {
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const Sketch s = gen::valid_sketch(rng);
    const auto d = decode_primitives(encode_primitives(s));
    ASSERT_TRUE(d.flags.empty());
    ASSERT_EQ(d.sketch.entities, s.entities);
  }
}

TEST(DecodePrimitives, FuzzIsTotalAndReencodable) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    std::vector<int> t = gen::random_tokens(rng);
    if (rng.bernoulli(0.5)) {
      // Bias towards structured prefixes so the parser gets past the first token.
      const Sketch s = gen::valid_sketch(rng, 3, 0);
      auto good = encode_primitives(s).tokens;
      good.resize(static_cast<std::size_t>(rng.uniform_int(1, static_cast<int>(good.size()))));
      good.insert(good.end(), t.begin(), t.end());
      t = good;
    }
    const auto d = decode_primitives(TokenSeq{t});
    ASSERT_NO_THROW(encode_entities(d.sketch.entities));
  }
}

TEST(EncodeConstraints, Layout) {
  const Entity l0 = line(1, 1, 10, 1), l1 = line(10, 1, 10, 10);
  const Sketch s{{l0, l1}, {{ConstraintType::Coincident, {0, 1}}}};
  std::vector<int> expected{78};
  for (int v : block(l0)) expected.push_back(v);
  for (int v : block(l1)) expected.push_back(v);
  expected.insert(expected.end(), {65, 81, 79});
  EXPECT_EQ(encode_constraints(s).tokens, expected);
  EXPECT_EQ(encode_constraints(s).stream, Stream::Constraint);

  const Sketch v{{line(5, 1, 5, 60)}, {{ConstraintType::Vertical, {0}}}};
  const auto t = encode_constraints(v).tokens;
  EXPECT_EQ(std::count(t.begin(), t.end(), 77), 1);
}

TEST(EncodeConstraints, DanglingRef) {
  const Sketch s{{line(1, 1, 2, 2)}, {{ConstraintType::Parallel, {0, 3}}}};
  EXPECT_EQ(error_code([&] { encode_constraints(s); }), Errc::DanglingRef);
}

TEST(Constraints, AllThirteenTypesRoundTrip) {
  Sketch s{{line(1, 1, 64, 1), line(64, 1, 64, 64), arc(), circle()}, {}};
  for (int t = 0; t < kConstraintTypeCount; ++t) {
    const auto type = static_cast<ConstraintType>(t);
    Constraint c{type, {t % 4}};
    if (constraint_arity(type) == 2) c.refs.push_back((t + 1) % 4);
    s.constraints.push_back(c);
  }
  const auto d = decode_constraints(encode_constraints(s), s);
  EXPECT_TRUE(d.flags.empty());
  EXPECT_EQ(d.constraints, s.constraints);
}

TEST(Constraints, RoundTripProperty) {
  Rng rng(4);
  for (int i = 0; i < 10000; ++i) {
    const Sketch s = gen::distinct_sketch(rng);
    const auto d = decode_constraints(encode_constraints(s), s);
    ASSERT_TRUE(d.flags.empty());
    ASSERT_EQ(d.constraints, s.constraints);
  }
}

TEST(Constraints, ReversedLineStillResolves) {
  const Sketch s{{line(1, 1, 9, 9), line(9, 9, 20, 3)}, {}};
  std::vector<int> t{78};
  for (int v : block(line(9, 9, 1, 1))) t.push_back(v);
  t.insert(t.end(), {69, 81, 79});
  const auto d = decode_constraints(TokenSeq{t, Stream::Constraint}, s);
  ASSERT_EQ(d.constraints.size(), 1u);
  EXPECT_EQ(d.constraints[0].refs, (std::vector<int>{0}));
}

TEST(Constraints, DuplicateEntitiesResolveToLowestIndex) {
  const Sketch s{{line(3, 3, 8, 8), line(1, 1, 2, 2), line(3, 3, 8, 8)}, {{ConstraintType::Fix, {2}}}};
  const auto d = decode_constraints(encode_constraints(s), s);
  ASSERT_EQ(d.constraints.size(), 1u);
  EXPECT_EQ(d.constraints[0].refs, (std::vector<int>{0}));
}

TEST(Constraints, Flags) {
  const Sketch s{{line(1, 1, 64, 1), line(64, 1, 64, 64), arc()}, {}};
  auto with = [&](std::vector<Entity> blocks, int type) {
    std::vector<int> t{78};
    for (const auto& e : blocks) {
      for (int v : block(e)) t.push_back(v);
    }
    t.insert(t.end(), {type, 81, 79});
    return decode_constraints(TokenSeq{t, Stream::Constraint}, s);
  };
  const auto unresolved = with({line(2, 2, 3, 3)}, 69);
  EXPECT_TRUE(unresolved.constraints.empty());
  EXPECT_EQ(unresolved.flags, (std::vector<DecodeFlag>{DecodeFlag::UnresolvedRef}));

  const auto unknown = with({line(1, 1, 64, 1)}, 99);
  EXPECT_TRUE(unknown.constraints.empty());
  EXPECT_EQ(unknown.flags, (std::vector<DecodeFlag>{DecodeFlag::UnknownType}));

  const auto arity = with({line(1, 1, 64, 1), arc()}, 77);
  EXPECT_TRUE(arity.constraints.empty());
  EXPECT_EQ(arity.flags, (std::vector<DecodeFlag>{DecodeFlag::WrongArity}));
}

TEST(Constraints, FuzzIsTotal) {
  Rng rng(6);
  for (int i = 0; i < 10000; ++i) {
    const Sketch s = gen::valid_sketch(rng, 4, 4);
    std::vector<int> t = encode_constraints(s).tokens;
    t.resize(static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(t.size()))));
    for (int v : gen::random_tokens(rng, 16)) t.push_back(v);
    const auto d = decode_constraints(TokenSeq{t, Stream::Constraint}, s);
    for (const auto& c : d.constraints) {
      const int tok = constraint_token(c.type);
      ASSERT_TRUE(tok >= 65 && tok <= 77);
      ASSERT_EQ(static_cast<int>(c.refs.size()), constraint_arity(c.type));
      for (int r : c.refs) ASSERT_TRUE(r >= 0 && r < static_cast<int>(s.entities.size()));
    }
  }
}

TEST(TextFormat, RoundTripAndErrors) {
  const std::vector<int> t{78, 82, 1, 1, 64, 64, 80, 79};
  EXPECT_EQ(format_tokens(t), "78 82 1 1 64 64 80 79");
  EXPECT_EQ(parse_tokens("78 82 1 1 64 64 80 79"), t);
  EXPECT_EQ(parse_tokens("  78\t79 "), (std::vector<int>{78, 79}));
  EXPECT_EQ(error_code([] { parse_tokens("78 x 79"); }), Errc::ParseError);
}
