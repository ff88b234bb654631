#include "ooc/mismatch_factory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "ooc/errors.hpp"
#include "ooc/random.hpp"

namespace ooc {

namespace {

// Maps each string to a dense integer so exclusions compare ints in the
// inner loop. Empty input yields an empty key vector.
std::vector<std::uint32_t> intern(std::span<const std::string> keys) {
  std::vector<std::uint32_t> out;
  out.reserve(keys.size());
  StringMap<std::uint32_t> table;
  for (const auto& k : keys) {
    auto [it, _] = table.emplace(k, static_cast<std::uint32_t>(table.size()));
    out.push_back(it->second);
  }
  return out;
}

struct Best {
  std::size_t row = std::numeric_limits<std::size_t>::max();
  double score = -std::numeric_limits<double>::infinity();
};

class NeighborSearch {
 public:
  NeighborSearch(const EmbeddingMatrix& texts, std::span<const std::string> image_keys,
                 std::span<const std::string> text_keys)
      : texts_(texts), image_keys_(intern(image_keys)), text_keys_(intern(text_keys)) {
    if (!image_keys_.empty() && image_keys_.size() != texts.rows())
      fail(ErrorKind::alignment, "image key count does not match text rows");
    if (!text_keys_.empty() && text_keys_.size() != texts.rows())
      fail(ErrorKind::alignment, "text key count does not match text rows");
  }

  std::optional<std::size_t> query(std::size_t q) const {
    const std::size_t n = texts_.rows();
    const std::size_t d = texts_.dim();
    const float* base = texts_.values().data();
    const float* qv = base + q * d;
    Best best;

    // Four candidates per pass; each dot product still accumulates over k in
    // order, so every score is bit-identical to a plain sequential loop.
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const float* c0 = base + j * d;
      const float* c1 = c0 + d;
      const float* c2 = c1 + d;
      const float* c3 = c2 + d;
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double x = qv[k];
        a0 += x * c0[k];
        a1 += x * c1[k];
        a2 += x * c2[k];
        a3 += x * c3[k];
      }
      consider(q, j, a0, best);
      consider(q, j + 1, a1, best);
      consider(q, j + 2, a2, best);
      consider(q, j + 3, a3, best);
    }
    for (; j < n; ++j) {
      const float* c = base + j * d;
      double a = 0.0;
      for (std::size_t k = 0; k < d; ++k) a += static_cast<double>(qv[k]) * c[k];
      consider(q, j, a, best);
    }
    if (best.row == std::numeric_limits<std::size_t>::max()) return std::nullopt;
    return best.row;
  }

 private:
  bool eligible(std::size_t q, std::size_t c) const {
    if (c == q) return false;
    if (!image_keys_.empty() && image_keys_[c] == image_keys_[q]) return false;
    if (!text_keys_.empty() && text_keys_[c] == text_keys_[q]) return false;
    return true;
  }

  void consider(std::size_t q, std::size_t c, double score, Best& best) const {
    if (!eligible(q, c)) return;
    if (score > best.score ||
        (score == best.score && texts_.ids()[c] < texts_.ids()[best.row])) {
      best.row = c;
      best.score = score;
    }
  }

  const EmbeddingMatrix& texts_;
  std::vector<std::uint32_t> image_keys_;
  std::vector<std::uint32_t> text_keys_;
};

}  // namespace

std::vector<std::optional<std::size_t>> nearest_text_neighbors(
    const EmbeddingMatrix& texts, std::span<const std::size_t> queries,
    std::span<const std::string> image_keys, std::span<const std::string> text_keys,
    const HardMiningOptions& options) {
  std::vector<std::size_t> all;
  if (queries.empty()) {
    all.resize(texts.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    queries = all;
  }
  for (std::size_t q : queries)
    if (q >= texts.rows()) fail(ErrorKind::argument, "query row out of range");

  const NeighborSearch search(texts, image_keys, text_keys);
  std::vector<std::optional<std::size_t>> out(queries.size());
  const std::size_t workers =
      std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(1, queries.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < queries.size(); ++i) out[i] = search.query(queries[i]);
    return out;
  }
  // Contiguous disjoint slices; each worker writes only its own range.
  std::vector<std::jthread> pool;
  const std::size_t chunk = (queries.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(queries.size(), lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) out[i] = search.query(queries[i]);
    });
  }
  pool.clear();
  return out;
}

Mapping mine_hard(const EmbeddingMatrix& topic_texts, const HardMiningOptions& options) {
  if (topic_texts.rows() < 2) {
    fail(ErrorKind::insufficient, "hard mining needs at least 2 samples in the partition, got " +
                                      std::to_string(topic_texts.rows()));
  }
  const auto nn = nearest_text_neighbors(topic_texts, {}, {}, {}, options);
  Mapping out;
  for (std::size_t i = 0; i < nn.size(); ++i) out[topic_texts.ids()[i]] = topic_texts.ids()[*nn[i]];
  return out;
}

namespace {

struct Partition {
  EmbeddingMatrix texts;
  std::vector<std::string> image_keys;
  std::vector<std::string> text_keys;
};

Partition gather(std::span<const SampleRecord> partition, const EmbeddingMatrix& texts) {
  Partition p;
  std::vector<std::string> ids;
  ids.reserve(partition.size());
  for (const auto& r : partition) {
    ids.push_back(r.id);
    p.image_keys.push_back(r.image_id);
    p.text_keys.push_back(r.text);
  }
  p.texts = texts.select(ids);
  return p;
}

}  // namespace

Mapping mine_hard(std::span<const SampleRecord> partition, const EmbeddingMatrix& texts,
                  const HardMiningOptions& options) {
  if (partition.size() < 2) {
    fail(ErrorKind::insufficient, "hard mining needs at least 2 samples in the partition, got " +
                                      std::to_string(partition.size()));
  }
  const auto p = gather(partition, texts);
  const auto nn = nearest_text_neighbors(p.texts, {}, p.image_keys, p.text_keys, options);
  Mapping out;
  for (std::size_t i = 0; i < nn.size(); ++i)
    if (nn[i]) out[partition[i].id] = partition[*nn[i]].id;
  return out;
}

std::vector<std::string> draw_random(std::span<const SampleRecord> captions,
                                     std::span<const SampleRecord> pool, std::uint64_t seed) {
  if (pool.size() < 2) {
    fail(ErrorKind::insufficient,
         "random mining needs a pool of at least 2 samples, got " + std::to_string(pool.size()));
  }
  StringMap<std::size_t> image_count;
  for (const auto& r : pool) ++image_count[r.image_id];

  Rng rng(seed);
  std::vector<std::string> out;
  out.reserve(captions.size());
  for (const auto& c : captions) {
    auto it = image_count.find(c.image_id);
    const std::size_t own = it == image_count.end() ? 0 : it->second;
    if (own == pool.size()) {
      fail(ErrorKind::insufficient, "no candidate image other than its own for '" + c.id + "'");
    }
    for (;;) {
      const auto& pick = pool[rng.below(pool.size())];
      if (pick.image_id != c.image_id) {
        out.push_back(pick.id);
        break;
      }
    }
  }
  return out;
}

Mapping mine_random(std::span<const SampleRecord> captions, std::span<const SampleRecord> pool,
                    std::uint64_t seed) {
  const auto drawn = draw_random(captions, pool, seed);
  Mapping out;
  for (std::size_t i = 0; i < captions.size(); ++i) out[captions[i].id] = drawn[i];
  return out;
}

std::vector<std::string> draw_cross_topic(std::span<const SampleRecord> captions,
                                          const TopicPools& pools, std::uint64_t seed) {
  std::size_t present = 0;
  for (const auto& [topic, pool] : pools) present += pool.empty() ? 0 : 1;
  if (present < 2) {
    fail(ErrorKind::insufficient, "cross-topic mining needs at least 2 topics with samples");
  }

  Rng rng(seed);
  std::vector<std::string> out;
  out.reserve(captions.size());
  for (const auto& c : captions) {
    std::vector<const std::vector<SampleRecord>*> others;
    std::size_t total = 0;
    for (const auto& [topic, pool] : pools) {
      if (topic == c.topic || pool.empty()) continue;
      others.push_back(&pool);
      total += pool.size();
    }
    if (total == 0) fail(ErrorKind::insufficient, "no other-topic pool for '" + c.id + "'");
    for (int attempt = 0;; ++attempt) {
      std::size_t idx = rng.below(total);
      const SampleRecord* pick = nullptr;
      for (const auto* pool : others) {
        if (idx < pool->size()) {
          pick = &(*pool)[idx];
          break;
        }
        idx -= pool->size();
      }
      if (pick->image_id != c.image_id) {
        out.push_back(pick->id);
        break;
      }
      if (attempt > 1000000) fail(ErrorKind::insufficient, "no eligible image for '" + c.id + "'");
    }
  }
  return out;
}

Mapping mine_cross_topic(std::span<const SampleRecord> captions, const TopicPools& pools,
                         std::uint64_t seed) {
  const auto drawn = draw_cross_topic(captions, pools, seed);
  Mapping out;
  for (std::size_t i = 0; i < captions.size(); ++i) out[captions[i].id] = drawn[i];
  return out;
}

namespace {

// Largest-remainder apportionment of round(ratio * N) hard slots across
// topics, so the global count is exact and each topic gets floor or ceil.
std::map<Topic, std::size_t> hard_quotas(const TopicPools& by_topic, double ratio,
                                         std::size_t total) {
  const auto target = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total) + 0.5));
  std::map<Topic, std::size_t> quota;
  std::vector<std::pair<double, Topic>> remainders;
  std::size_t assigned = 0;
  for (const auto& [topic, members] : by_topic) {
    const double ideal = ratio * static_cast<double>(members.size());
    const auto base = static_cast<std::size_t>(std::floor(ideal));
    quota[topic] = base;
    assigned += base;
    remainders.emplace_back(ideal - static_cast<double>(base), topic);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [frac, topic] : remainders) {
    if (assigned >= target) break;
    if (quota[topic] < by_topic.at(topic).size()) {
      ++quota[topic];
      ++assigned;
    }
  }
  return quota;
}

}  // namespace

DatasetManifest build_dataset(std::span<const SampleRecord> pristine, const EmbeddingMatrix& texts,
                              const BuildOptions& options) {
  if (!(options.ratio_hard >= 0.0 && options.ratio_hard <= 1.0)) {
    fail(ErrorKind::argument, "ratio_hard must be in [0, 1]");
  }
  if (pristine.empty()) fail(ErrorKind::argument, "no pristine samples to build from");
  validate_manifest(pristine);

  std::vector<SampleRecord> sorted(pristine.begin(), pristine.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.id < b.id; });
  TopicPools by_topic;
  for (const auto& r : sorted) by_topic[r.topic].push_back(r);

  struct Falsified {
    std::string image;
    Method method;
  };
  StringMap<Falsified> falsified;
  const auto quotas = hard_quotas(by_topic, options.ratio_hard, sorted.size());

  for (const auto& [topic, members] : by_topic) {
    const std::string tag(to_string(topic));
    std::vector<std::size_t> order(members.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(derive_seed(options.seed, "assign/" + tag)).shuffle(std::span(order));

    const std::size_t quota = quotas.at(topic);
    std::vector<bool> is_hard(members.size(), false);
    if (quota > 0) {
      if (members.size() < 2) {
        fail(ErrorKind::insufficient, "topic '" + tag + "' has a single sample; cannot mine hard");
      }
      std::vector<std::size_t> queries(order.begin(), order.begin() + quota);
      std::sort(queries.begin(), queries.end());
      const auto p = gather(members, texts);
      const auto nn = nearest_text_neighbors(p.texts, queries, p.image_keys, p.text_keys,
                                             {options.threads});
      for (std::size_t i = 0; i < queries.size(); ++i) {
        if (!nn[i]) continue;  // only identical-text candidates left
        is_hard[queries[i]] = true;
        falsified[members[queries[i]].id] = {members[*nn[i]].id, Method::hard};
      }
    }

    std::vector<SampleRecord> random_captions;
    for (std::size_t i = 0; i < members.size(); ++i)
      if (!is_hard[i]) random_captions.push_back(members[i]);
    if (!random_captions.empty()) {
      const auto drawn =
          draw_random(random_captions, members, derive_seed(options.seed, "random/" + tag));
      for (std::size_t i = 0; i < random_captions.size(); ++i)
        falsified[random_captions[i].id] = {drawn[i], Method::random};
    }
  }

  DatasetManifest m;
  m.ratio_hard = options.ratio_hard;
  m.seed = options.seed;
  m.topic_scope = options.topic_scope;
  const std::size_t n = sorted.size();
  m.pairs.reserve(2 * (n + options.cross_topic_count));
  for (const auto& r : sorted) {
    const auto& f = falsified.at(r.id);
    m.pairs.push_back({r.id, r.id, PairLabel::pristine, Method::none});
    m.pairs.push_back({r.id, f.image, PairLabel::falsified, f.method});
  }

  if (options.cross_topic_count > 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(derive_seed(options.seed, "cross/select")).shuffle(std::span(order));
    std::vector<SampleRecord> captions;
    captions.reserve(options.cross_topic_count);
    for (std::size_t k = 0; k < options.cross_topic_count; ++k) captions.push_back(sorted[order[k % n]]);
    const auto drawn = draw_cross_topic(captions, by_topic, derive_seed(options.seed, "cross/draw"));
    for (std::size_t k = 0; k < captions.size(); ++k)
      m.pairs.push_back({captions[k].id, drawn[k], PairLabel::falsified, Method::cross_topic});
    for (std::size_t k = 0; k < options.cross_topic_count; ++k) {
      const auto& r = sorted[k % n];
      m.pairs.push_back({r.id, r.id, PairLabel::pristine, Method::none});
    }
  }
  return m;
}

DatasetCounts count_pairs(std::span<const LabeledPair> pairs, std::span<const SampleRecord> samples) {
  StringMap<Topic> topic_of;
  for (const auto& s : samples) topic_of.emplace(s.id, s.topic);
  auto topic = [&](const std::string& id) {
    auto it = topic_of.find(id);
    if (it == topic_of.end()) fail(ErrorKind::missing_id, "pair caption '" + id + "' not in manifest");
    return it->second;
  };

  DatasetCounts c;
  StringMap<bool> seen_pristine;
  for (const auto& p : pairs) {
    const Topic t = topic(p.caption_id);
    auto& row = c.by_topic[t];
    switch (p.method) {
      case Method::none:
        if (seen_pristine.emplace(p.caption_id, true).second)
          ++row.pristine;
        else
          ++c.cross.pristine;
        break;
      case Method::random: ++row.random; break;
      case Method::hard: ++row.hard; break;
      case Method::cross_topic: ++c.cross.cross_topic; break;
    }
  }
  return c;
}

namespace {

void check_pair(const LabeledPair& p) {
  const bool pristine = p.label == PairLabel::pristine;
  if (pristine != (p.method == Method::none)) {
    fail(ErrorKind::validation, "label/method mismatch for caption '" + p.caption_id + "'");
  }
  if (pristine && p.image_id != p.caption_id) {
    fail(ErrorKind::validation, "pristine pair for '" + p.caption_id + "' uses another image");
  }
  if (!pristine && p.image_id == p.caption_id) {
    fail(ErrorKind::validation, "falsified self-pair for '" + p.caption_id + "'");
  }
}

}  // namespace

std::vector<LabeledPair> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::vector<LabeledPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabeledPair p{j.at("caption_id").get<std::string>(), j.at("image_id").get<std::string>(),
                    parse_label(j.at("label").get<std::string>()),
                    parse_method(j.at("method").get<std::string>())};
      check_pair(p);
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::format, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.kind(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

void save_pairs(std::span<const LabeledPair> pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  for (const auto& p : pairs) {
    nlohmann::json j = {{"caption_id", p.caption_id},
                        {"image_id", p.image_id},
                        {"label", to_string(p.label)},
                        {"method", to_string(p.method)}};
    out << j.dump() << '\n';
  }
}

}  // namespace ooc
