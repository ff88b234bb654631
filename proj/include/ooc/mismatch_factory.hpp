#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ooc/embedding_store.hpp"
#include "ooc/types.hpp"

namespace ooc {

/// A caption paired with the image owned by sample `image_id`.
struct LabeledPair {
  std::string caption_id;
  std::string image_id;
  PairLabel label = PairLabel::pristine;
  Method method = Method::none;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

struct DatasetManifest {
  std::vector<LabeledPair> pairs;
  double ratio_hard = 0.0;
  std::uint64_t seed = 0;
  TopicScope topic_scope = TopicScope::joint;
};

/// caption sample id -> sample id whose image is swapped in.
using Mapping = std::map<std::string, std::string>;

struct HardMiningOptions {
  unsigned threads = 1;
};

/// Exact top-1 neighbour search over the rows of `texts`.
///
/// For each query row q (all rows when `queries` is empty) returns the row
/// c != q maximising dot(q, c), breaking ties toward the smallest id.
/// Candidates sharing the query's `image_keys` entry are skipped, and so are
/// candidates whose `text_keys` entry is byte-identical to the query's. Either
/// key list may be empty to disable that exclusion. A query with no eligible
/// candidate yields nullopt. Output is independent of `threads`.
std::vector<std::optional<std::size_t>> nearest_text_neighbors(
    const EmbeddingMatrix& texts, std::span<const std::size_t> queries,
    std::span<const std::string> image_keys, std::span<const std::string> text_keys,
    const HardMiningOptions& options = {});

/// Hard negatives over a single-topic matrix whose ids are the sample ids.
Mapping mine_hard(const EmbeddingMatrix& topic_texts, const HardMiningOptions& options = {});

/// Hard negatives for one topic partition; skips candidates with the same
/// image or identical caption text. Captions left without any eligible
/// candidate are absent from the result.
Mapping mine_hard(std::span<const SampleRecord> partition, const EmbeddingMatrix& texts,
                  const HardMiningOptions& options = {});

Mapping mine_random(std::span<const SampleRecord> captions, std::span<const SampleRecord> pool,
                    std::uint64_t seed);

using TopicPools = std::map<Topic, std::vector<SampleRecord>>;

Mapping mine_cross_topic(std::span<const SampleRecord> captions, const TopicPools& pools,
                         std::uint64_t seed);

// Draw variants aligned with `captions` (a caption may appear repeatedly).
std::vector<std::string> draw_random(std::span<const SampleRecord> captions,
                                     std::span<const SampleRecord> pool, std::uint64_t seed);
std::vector<std::string> draw_cross_topic(std::span<const SampleRecord> captions,
                                          const TopicPools& pools, std::uint64_t seed);

struct BuildOptions {
  double ratio_hard = 0.75;
  std::size_t cross_topic_count = 0;
  std::uint64_t seed = 0;
  TopicScope topic_scope = TopicScope::joint;
  unsigned threads = 1;
};

/// Builds a label-balanced pair set from pristine samples.
///
/// Every caption gets one pristine and one falsified pair. Hard versus random
/// is decided by a seeded shuffle per topic with quotas apportioned so the
/// overall hard count is round(ratio_hard * N). `cross_topic_count` extra
/// cross-topic pairs follow, and pristine pairs are then repeated in id order
/// until both labels have equal counts.
DatasetManifest build_dataset(std::span<const SampleRecord> pristine, const EmbeddingMatrix& texts,
                              const BuildOptions& options);

struct TopicCounts {
  std::size_t pristine = 0;
  std::size_t random = 0;
  std::size_t hard = 0;
  std::size_t cross_topic = 0;
};

/// Per-topic counts keyed by caption topic; cross-topic pairs and the
/// pristine repeats that balance them are tallied under `cross`.
struct DatasetCounts {
  std::map<Topic, TopicCounts> by_topic;
  TopicCounts cross;
};

DatasetCounts count_pairs(std::span<const LabeledPair> pairs,
                          std::span<const SampleRecord> samples);

std::vector<LabeledPair> load_pairs(const std::filesystem::path& path);
void save_pairs(std::span<const LabeledPair> pairs, const std::filesystem::path& path);

}  // namespace ooc
