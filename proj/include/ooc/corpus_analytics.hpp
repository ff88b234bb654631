#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ooc/embedding_store.hpp"
#include "ooc/mismatch_factory.hpp"

namespace ooc {

// ---- OCR coverage ----------------------------------------------------------

/// Exact area of the union of the boxes over the image area, in [0, 1].
double ocr_coverage(const OcrRecord& rec);

/// =0%, (0,10%], (10%,50%], (50%,100%]; upper edges are inclusive.
enum class CoverageBucket { zero, low, mid, high };

CoverageBucket bucket(double coverage);
std::string_view to_string(CoverageBucket b);  // "zero", "low", "mid", "high"
std::string_view bucket_label(CoverageBucket b);  // "=0%", "0-10%", ...

// ---- Text clustering -------------------------------------------------------

struct WordScore {
  std::string word;
  double score = 0.0;
};

struct ClusterModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> centroids;  // k unit vectors
  std::vector<std::string> ids;
  std::vector<std::size_t> assignments;  // aligned with ids
  std::vector<std::vector<WordScore>> top_words;  // filled by the caller
  std::vector<double> objective_trace;  // sum of (1 - cos) after each iteration
  std::size_t iterations = 0;

  std::vector<std::size_t> sizes() const;
};

struct ClusterOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // max centroid movement (L2) to stop
};

/// Spherical k-means with k-means++ seeding; deterministic given `seed`.
ClusterModel cluster_texts(const EmbeddingMatrix& text_embs, std::size_t k, std::uint64_t seed,
                           const ClusterOptions& options = {});

/// Lowercased tokens split on non-alphanumeric bytes, length >= 2, with the
/// built-in stopwords removed. Bytes >= 0x80 count as word characters.
std::vector<std::string> tokenize(std::string_view text);
bool is_stopword(std::string_view token);
std::size_t stopword_count();

/// TF-IDF with each cluster's concatenated text as one document:
/// score = count(t, c) / tokens(c) * log(k / df(t)). Ties break
/// lexicographically. A cluster with no tokens gets an empty list.
std::vector<std::vector<WordScore>> cluster_top_words(
    std::span<const std::vector<std::string>> texts_per_cluster, std::size_t n_words = 10);

/// "<index>_<w1>_<w2>_..." using the first `name_words` words.
std::string cluster_name(std::size_t index, std::span<const WordScore> words,
                         std::size_t name_words = 3);

// ---- Within / cross cluster tagging ----------------------------------------

enum class ClusterTag { within, cross, not_applicable };
std::string_view to_string(ClusterTag t);

/// Compares the caption's cluster with the cluster of the sample whose image
/// was swapped in. Pristine pairs are not_applicable.
std::vector<ClusterTag> tag_cross_cluster(std::span<const LabeledPair> pairs,
                                          const StringMap<std::size_t>& assignments);

struct CrossClusterRow {
  Topic topic = Topic::climate;
  std::string sample_type;  // pristine, hard, random, cross_topic
  std::size_t total = 0;
  double pct_of_topic = 0.0;
  std::size_t n_cross = 0;
  double pct_cross = 0.0;
};

/// Training-set statistics by caption topic and sample type.
std::vector<CrossClusterRow> cross_cluster_stats(std::span<const LabeledPair> pairs,
                                                 std::span<const ClusterTag> tags,
                                                 std::span<const SampleRecord> samples);

}  // namespace ooc
