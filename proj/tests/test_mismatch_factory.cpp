#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "ooc/mismatch_factory.hpp"
#include "ooc/random.hpp"
#include "test_util.hpp"

using namespace ooc;

namespace {

EmbeddingMatrix unit_rows(std::vector<std::string> ids, std::size_t d, std::vector<float> v) {
  return normalize(EmbeddingMatrix(std::move(ids), d, std::move(v)));
}

struct Corpus {
  std::vector<SampleRecord> samples;
  EmbeddingMatrix texts;
};

Corpus make_corpus(std::size_t n, std::size_t d, std::uint64_t seed, std::size_t topics = 3) {
  Rng rng(seed);
  Corpus c;
  std::vector<std::string> ids;
  std::vector<float> v;
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord r;
    r.id = "c" + std::to_string(1000 + i);
    r.topic = kAllTopics[i % topics];
    r.text = "text " + std::to_string(i);
    r.image_id = "img" + std::to_string(i);
    ids.push_back(r.id);
    for (std::size_t k = 0; k < d; ++k) v.push_back(static_cast<float>(rng.normal()));
    c.samples.push_back(r);
  }
  c.texts = unit_rows(ids, d, v);
  return c;
}

void check_invariants(const DatasetManifest& m, std::span<const SampleRecord> samples, double ratio) {
  StringMap<const SampleRecord*> idx;
  for (const auto& s : samples) idx.emplace(s.id, &s);
  std::size_t pristine = 0, falsified = 0, hard = 0, random = 0;
  for (const auto& p : m.pairs) {
    const auto& cap = *idx.at(p.caption_id);
    if (p.label == PairLabel::pristine) {
      ++pristine;
      CHECK(p.method == Method::none);
      CHECK(p.image_id == p.caption_id);
    } else {
      ++falsified;
      CHECK(p.method != Method::none);
      CHECK(p.image_id != p.caption_id);
      CHECK(idx.at(p.image_id)->image_id != cap.image_id);
      if (p.method == Method::hard) ++hard;
      if (p.method == Method::random) ++random;
      if (p.method != Method::cross_topic) CHECK(idx.at(p.image_id)->topic == cap.topic);
      else CHECK(idx.at(p.image_id)->topic != cap.topic);
    }
  }
  CHECK(pristine == falsified);
  if (hard + random > 0) {
    CHECK(std::abs(double(hard) / double(hard + random) - ratio) <= 1.0 / double(falsified) + 1e-12);
  }
}

}  // namespace

TEST_SUITE("mismatch_factory") {
  TEST_CASE("hard negative is the most similar other text") {
    // dot(t1,t2)=0.9, dot(t1,t3)=0.1
    const auto f = [](double x) { return static_cast<float>(x); };
    const auto m = EmbeddingMatrix({"s1", "s2", "s3"}, 3,
                                   {1, 0, 0, 0.9f, f(std::sqrt(0.19)), 0, 0.1f, -0.3f, f(std::sqrt(0.9))});
    const auto h = mine_hard(m);
    CHECK(h.at("s1") == "s2");
  }

  TEST_CASE("identical texts under different ids map to each other") {
    const auto m = unit_rows({"x", "y", "z"}, 2, {1, 1, 1, 1, -1, 0.5f});
    const auto h = mine_hard(m);
    CHECK(h.at("x") == "y");
    CHECK(h.at("y") == "x");
  }

  TEST_CASE("ties go to the smallest id") {
    const auto m = unit_rows({"q", "b", "a", "c"}, 2, {1, 0, 0, 1, 0, 1, 0, 1});
    CHECK(mine_hard(m).at("q") == "a");
  }

  TEST_CASE("single-sample partitions are insufficient") {
    const auto m = unit_rows({"only"}, 2, {1, 0});
    CHECK_ERROR_KIND(mine_hard(m), ErrorKind::insufficient);
    std::vector<SampleRecord> one = {{"only", Topic::climate, "t", "i", Split::train}};
    CHECK_ERROR_KIND(mine_hard(one, m), ErrorKind::insufficient);
  }

  TEST_CASE("partition mining skips shared images and identical texts") {
    const auto m = unit_rows({"a", "b", "c", "d"}, 2, {1, 0, 1, 0.01f, 1, 0.02f, 0, 1});
    std::vector<SampleRecord> part = {
        {"a", Topic::climate, "same words", "img_a", Split::train},
        {"b", Topic::climate, "same words", "img_b", Split::train},  // identical text
        {"c", Topic::climate, "other", "img_a", Split::train},       // same image as a
        {"d", Topic::climate, "far away", "img_d", Split::train},
    };
    const auto h = mine_hard(part, m);
    CHECK(h.at("a") == "d");
    CHECK(h.at("b") == "c");
    CHECK(h.at("c") == "b");
  }

  TEST_CASE("matches brute force on random corpora, any thread count") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const std::size_t n = 300, d = 16;
      Rng rng(seed);
      std::vector<std::string> ids;
      std::vector<float> v;
      for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("r" + std::to_string((i * 7919) % n));
        // Coarse values give exact ties for the tie-break path.
        for (std::size_t k = 0; k < d; ++k)
          v.push_back(seed % 2 ? static_cast<float>(rng.below(3)) - 1.0f : static_cast<float>(rng.normal()));
      }
      std::vector<float> safe = v;
      for (std::size_t i = 0; i < n; ++i) safe[i * d] += 3.0f;  // no zero rows
      const auto m = EmbeddingMatrix(ids, d, safe);
      const auto brute = oracle::brute_top1(safe, n, d, ids);
      for (unsigned threads : {1u, 3u, 8u}) {
        const auto h = mine_hard(m, HardMiningOptions{threads});
        for (std::size_t q = 0; q < n; ++q) CHECK(h.at(ids[q]) == ids[brute[q]]);
      }
    }
  }

  TEST_CASE("random mining") {
    std::vector<SampleRecord> pool = {{"a", Topic::climate, "x", "A", Split::train},
                                      {"b", Topic::climate, "y", "B", Split::train}};
    const auto r = mine_random(std::span(pool).first(1), pool, 4);
    CHECK(r.at("a") == "b");
    CHECK(mine_random(pool, pool, 9) == mine_random(pool, pool, 9));
    CHECK_ERROR_KIND(mine_random(pool, std::span(pool).first(1), 1), ErrorKind::insufficient);
  }

  TEST_CASE("random draws are uniform over non-self images") {
    std::vector<SampleRecord> pool;
    for (int i = 0; i < 10; ++i)
      pool.push_back({"p" + std::to_string(i), Topic::covid, "t" + std::to_string(i), "I" + std::to_string(i), Split::train});
    std::vector<SampleRecord> captions(10000, pool[0]);
    const auto draws = draw_random(captions, pool, 77);
    std::map<std::string, int> freq;
    for (const auto& d : draws) ++freq[d];
    CHECK(freq.count("p0") == 0);
    CHECK(freq.size() == 9);
    const double p = 1.0 / 9.0, n = 10000.0, sigma = std::sqrt(n * p * (1 - p));
    for (const auto& [id, c] : freq) CHECK(std::abs(c - n * p) < 5 * sigma);
  }

  TEST_CASE("cross-topic mining draws only other topics") {
    TopicPools pools;
    pools[Topic::climate] = {{"c1", Topic::climate, "a", "C1", Split::train}, {"c2", Topic::climate, "b", "C2", Split::train}};
    pools[Topic::covid] = {{"v1", Topic::covid, "c", "V1", Split::train}};
    const auto r = mine_cross_topic(pools[Topic::climate], pools, 3);
    CHECK(r.at("c1") == "v1");
    CHECK(r.at("c2") == "v1");

    TopicPools single;
    single[Topic::climate] = pools[Topic::climate];
    CHECK_ERROR_KIND(mine_cross_topic(single[Topic::climate], single, 3), ErrorKind::insufficient);
  }

  TEST_CASE("cross-topic draws are uniform over the other-topic union") {
    TopicPools pools;
    for (int i = 0; i < 3; ++i) pools[Topic::climate].push_back({"c" + std::to_string(i), Topic::climate, "c", "C" + std::to_string(i), Split::train});
    for (int i = 0; i < 4; ++i) pools[Topic::covid].push_back({"v" + std::to_string(i), Topic::covid, "v", "V" + std::to_string(i), Split::train});
    for (int i = 0; i < 2; ++i) pools[Topic::military].push_back({"m" + std::to_string(i), Topic::military, "m", "M" + std::to_string(i), Split::train});
    std::vector<SampleRecord> captions(12000, pools[Topic::climate][0]);
    const auto draws = draw_cross_topic(captions, pools, 5);
    std::map<std::string, int> freq;
    for (const auto& d : draws) ++freq[d];
    CHECK(freq.size() == 6);
    const double p = 1.0 / 6.0, n = 12000.0, sigma = std::sqrt(n * p * (1 - p));
    for (const auto& [id, c] : freq) {
      CHECK(id[0] != 'c');
      CHECK(std::abs(c - n * p) < 5 * sigma);
    }
  }

  TEST_CASE("toy manifest of 6 with ratio 0.5") {
    const auto c = make_corpus(6, 4, 1, 1);
    BuildOptions o;
    o.ratio_hard = 0.5;
    const auto m = build_dataset(c.samples, c.texts, o);
    std::size_t hard = 0, random = 0, pristine = 0;
    for (const auto& p : m.pairs) {
      hard += p.method == Method::hard;
      random += p.method == Method::random;
      pristine += p.label == PairLabel::pristine;
    }
    CHECK(hard == 3);
    CHECK(random == 3);
    CHECK(pristine == 6);
  }

  TEST_CASE("exact hard ratio on 1000 captions") {
    const auto c = make_corpus(1000, 8, 2);
    for (double r : {0.0, 0.75, 1.0}) {
      BuildOptions o;
      o.ratio_hard = r;
      o.seed = 3;
      const auto m = build_dataset(c.samples, c.texts, o);
      std::size_t hard = 0, random = 0;
      for (const auto& p : m.pairs) hard += p.method == Method::hard, random += p.method == Method::random;
      CHECK(hard == static_cast<std::size_t>(std::llround(r * 1000)));
      CHECK(random == 1000 - hard);
      check_invariants(m, c.samples, r);
    }
  }

  TEST_CASE("cross-topic pairs are balanced by repeating pristine pairs") {
    const auto c = make_corpus(30, 4, 5);
    BuildOptions o;
    o.ratio_hard = 0.5;
    o.cross_topic_count = 7;
    o.seed = 8;
    const auto m = build_dataset(c.samples, c.texts, o);
    std::size_t cross = 0;
    for (const auto& p : m.pairs) cross += p.method == Method::cross_topic;
    CHECK(cross == 7);
    CHECK(m.pairs.size() == 2 * (30 + 7));
    check_invariants(m, c.samples, 0.5);
    // Repeats cycle in sorted id order.
    std::vector<std::string> repeats;
    for (std::size_t i = m.pairs.size() - 7; i < m.pairs.size(); ++i) {
      CHECK(m.pairs[i].label == PairLabel::pristine);
      repeats.push_back(m.pairs[i].caption_id);
    }
    CHECK(std::is_sorted(repeats.begin(), repeats.end()));
    CHECK(repeats.front() == "c1000");

    const auto counts = count_pairs(m.pairs, c.samples);
    CHECK(counts.cross.cross_topic == 7);
    CHECK(counts.cross.pristine == 7);
    for (const auto& [t, row] : counts.by_topic) CHECK(row.pristine == row.hard + row.random);
  }

  TEST_CASE("dataset is deterministic and independent of threads") {
    const auto c = make_corpus(200, 8, 4);
    BuildOptions o;
    o.ratio_hard = 0.6;
    o.seed = 11;
    o.cross_topic_count = 5;
    const auto a = build_dataset(c.samples, c.texts, o);
    o.threads = 4;
    const auto b = build_dataset(c.samples, c.texts, o);
    CHECK(a.pairs == b.pairs);
    o.seed = 12;
    const auto d = build_dataset(c.samples, c.texts, o);
    CHECK_FALSE(a.pairs == d.pairs);
  }

  TEST_CASE("per-topic and joint scopes keep the overall count") {
    const auto c = make_corpus(101, 4, 6);
    for (auto scope : {TopicScope::per_topic, TopicScope::joint}) {
      BuildOptions o;
      o.ratio_hard = 0.25;
      o.topic_scope = scope;
      const auto m = build_dataset(c.samples, c.texts, o);
      std::size_t hard = 0;
      for (const auto& p : m.pairs) hard += p.method == Method::hard;
      CHECK(hard == 25);
      check_invariants(m, c.samples, 0.25);
    }
  }

  TEST_CASE("argument errors") {
    const auto c = make_corpus(10, 4, 1);
    BuildOptions o;
    o.ratio_hard = 1.5;
    CHECK_ERROR_KIND(build_dataset(c.samples, c.texts, o), ErrorKind::argument);
    o.ratio_hard = 0.5;
    CHECK_ERROR_KIND(build_dataset(std::span<const SampleRecord>(), c.texts, o), ErrorKind::argument);
  }

  TEST_CASE("pairs file round trip and validation") {
    TempDir dir;
    const auto c = make_corpus(12, 4, 2);
    const auto m = build_dataset(c.samples, c.texts, BuildOptions{});
    save_pairs(m.pairs, dir / "p.jsonl");
    CHECK(load_pairs(dir / "p.jsonl") == m.pairs);

    spit(dir / "bad.jsonl", "{\"caption_id\":\"a\",\"image_id\":\"b\",\"label\":\"pristine\",\"method\":\"hard\"}\n");
    CHECK_ERROR_KIND(load_pairs(dir / "bad.jsonl"), ErrorKind::validation);
    spit(dir / "self.jsonl", "{\"caption_id\":\"a\",\"image_id\":\"a\",\"label\":\"falsified\",\"method\":\"random\"}\n");
    CHECK_ERROR_KIND(load_pairs(dir / "self.jsonl"), ErrorKind::validation);
    spit(dir / "other.jsonl", "{\"caption_id\":\"a\",\"image_id\":\"b\",\"label\":\"pristine\",\"method\":\"none\"}\n");
    CHECK_ERROR_KIND(load_pairs(dir / "other.jsonl"), ErrorKind::validation);
    spit(dir / "junk.jsonl", "{\"caption_id\":\"a\"}\n");
    CHECK_ERROR_KIND(load_pairs(dir / "junk.jsonl"), ErrorKind::format);
  }
}
