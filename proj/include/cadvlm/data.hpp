#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cadvlm/raster.hpp"
#include "cadvlm/rng.hpp"
#include "cadvlm/sketch.hpp"
#include "cadvlm/tokens.hpp"

namespace cadvlm {

enum class Split { Train, Val, Test };

std::string_view split_name(Split split);

// Hash-bucket assignment in the proportions 626236 : 22031 : 21979.
Split split_for(const Sketch& s);

struct Corpus {
  std::vector<Sketch> sketches;
  Split split = Split::Train;
  std::string source;
  std::uint64_t content_hash = 0;  // order-sensitive hash of all sketches

  std::size_t size() const { return sketches.size(); }
  bool operator==(const Corpus&) const = default;
};

std::uint64_t corpus_hash(const std::vector<Sketch>& sketches);

struct SkippedRecord {
  int line = 0;  // 1-based
  std::string reason;
};

struct IngestResult {
  Corpus train;
  Corpus val;
  Corpus test;
  std::vector<SkippedRecord> skipped;
  int duplicates = 0;

  std::size_t total() const { return train.size() + val.size() + test.size(); }
  const Corpus& get(Split s) const;
};

// Reads JSONL sketches, skipping (and reporting) records that fail to parse
// or validate, dropping exact duplicates, and splitting by content hash.
// Throws Errc::Io if the file cannot be opened.
IngestResult ingest(const std::string& path);
IngestResult ingest(std::istream& in, const std::string& source);

// Strict reader for tool inputs: structurally malformed lines throw
// Errc::ParseError naming the line; sketches are not validated.
std::vector<Sketch> read_sketches(const std::string& path);
std::vector<Sketch> read_sketches(std::istream& in, const std::string& source);

void write_sketches(std::ostream& out, const std::vector<Sketch>& sketches);
void write_sketches(const std::string& path, const std::vector<Sketch>& sketches);

// One random plate-style sketch: an outer loop (rectangle, L-profile,
// polygon, slot, bulged or filleted rectangle, loose circles) plus optional
// circular holes in common patterns, under a random rotation/reflection, with
// coincidence and orientation constraints derived from the construction.
// Always 2-10 entities, pairwise distinct and valid.
Sketch synth_sketch(Rng& rng);

// n distinct synthetic sketches, deterministic per seed.
Corpus synth_corpus(int n, std::uint64_t seed);

// Partial-sketch training/evaluation sample.
struct Example {
  std::vector<int> prefix_indices;  // ascending entity indices given as input
  Sketch prefix_sketch;             // prefix entities (constraints dropped)
  std::vector<Entity> suffix_entities;
  TokenSeq prefix;
  TokenSeq suffix;
  RasterImage input_image;   // prefix rendering
  RasterImage target_image;  // full-sketch rendering
  double ratio = 0.0;
};

inline constexpr double kMinPrefixRatio = 0.2;
inline constexpr double kMaxPrefixRatio = 0.8;

// Prefix size k = clamp(round(r*m), 1, m-1) with r ~ U(0.2, 0.8) unless
// overridden; prefix entities are drawn uniformly without replacement and
// keep their original order. Throws Errc::TooFewEntities when m < 2.
Example make_example(const Sketch& s, Rng& rng, std::optional<double> ratio_override = std::nullopt,
                     const AugmentSpec& render = {}, bool render_images = true);

}  // namespace cadvlm
