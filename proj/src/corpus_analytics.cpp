#include "ooc/corpus_analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "ooc/errors.hpp"
#include "ooc/random.hpp"

namespace ooc {

double ocr_coverage(const OcrRecord& rec) {
  validate(rec);
  if (rec.boxes.empty()) return 0.0;

  std::vector<std::int64_t> xs, ys;
  for (const auto& b : rec.boxes) {
    xs.insert(xs.end(), {b.x1, b.x2});
    ys.insert(ys.end(), {b.y1, b.y2});
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  const std::size_t nx = xs.size() - 1;
  const std::size_t ny = ys.size() - 1;
  std::vector<char> covered(nx * ny, 0);
  auto index = [](const std::vector<std::int64_t>& v, std::int64_t x) {
    return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
  };
  for (const auto& b : rec.boxes) {
    const std::size_t i0 = index(xs, b.x1), i1 = index(xs, b.x2);
    const std::size_t j0 = index(ys, b.y1), j1 = index(ys, b.y2);
    for (std::size_t i = i0; i < i1; ++i)
      for (std::size_t j = j0; j < j1; ++j) covered[i * ny + j] = 1;
  }
  std::int64_t area = 0;
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j)
      if (covered[i * ny + j]) area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
  return static_cast<double>(area) / static_cast<double>(rec.width * rec.height);
}

CoverageBucket bucket(double coverage) {
  if (!(coverage >= 0.0 && coverage <= 1.0)) fail(ErrorKind::argument, "coverage must be in [0, 1]");
  if (coverage == 0.0) return CoverageBucket::zero;
  if (coverage <= 0.10) return CoverageBucket::low;
  if (coverage <= 0.50) return CoverageBucket::mid;
  return CoverageBucket::high;
}

std::string_view to_string(CoverageBucket b) {
  switch (b) {
    case CoverageBucket::zero: return "zero";
    case CoverageBucket::low: return "low";
    case CoverageBucket::mid: return "mid";
    case CoverageBucket::high: return "high";
  }
  return "?";
}

std::string_view bucket_label(CoverageBucket b) {
  switch (b) {
    case CoverageBucket::zero: return "=0%";
    case CoverageBucket::low: return "0-10%";
    case CoverageBucket::mid: return "10-50%";
    case CoverageBucket::high: return ">50%";
  }
  return "?";
}

std::vector<std::size_t> ClusterModel::sizes() const {
  std::vector<std::size_t> s(k, 0);
  for (std::size_t a : assignments) ++s[a];
  return s;
}

namespace {

double dot_mixed(std::span<const float> x, const std::vector<double>& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(x[i]) * c[i];
  return s;
}

std::vector<double> as_double(std::span<const float> x) { return {x.begin(), x.end()}; }

// k-means++ with weight (1 - best cosine), i.e. proportional to the squared
// chord distance between unit vectors.
std::vector<std::vector<double>> seed_centroids(const EmbeddingMatrix& m, std::size_t k, Rng& rng) {
  const std::size_t n = m.rows();
  std::vector<std::vector<double>> centroids;
  std::vector<bool> chosen(n, false);
  std::vector<double> best(n, -std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t i) {
    chosen[i] = true;
    centroids.push_back(as_double(m.row(i)));
    for (std::size_t p = 0; p < n; ++p) best[p] = std::max(best[p], dot_mixed(m.row(p), centroids.back()));
  };

  take(static_cast<std::size_t>(rng.below(n)));
  while (centroids.size() < k) {
    std::vector<double> w(n, 0.0);
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (!chosen[p]) w[p] = std::max(0.0, 1.0 - best[p]);
      total += w[p];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        if (w[p] <= 0.0) continue;
        cum += w[p];
        pick = p;
        if (cum > r) break;
      }
    } else {
      // Every remaining point duplicates a centroid.
      for (std::size_t p = 0; p < n && pick == n; ++p)
        if (!chosen[p]) pick = p;
    }
    take(pick);
  }
  return centroids;
}

}  // namespace

ClusterModel cluster_texts(const EmbeddingMatrix& m, std::size_t k, std::uint64_t seed,
                           const ClusterOptions& options) {
  const std::size_t n = m.rows();
  const std::size_t d = m.dim();
  if (k < 2) fail(ErrorKind::argument, "cluster count must be >= 2");
  if (k > n) {
    fail(ErrorKind::argument, "cluster count " + std::to_string(k) + " exceeds sample count " +
                                  std::to_string(n));
  }
  if (!is_normalized(m, 1e-4)) fail(ErrorKind::argument, "text embeddings must be unit-normalized");

  ClusterModel model;
  model.k = k;
  model.dim = d;
  model.seed = seed;
  model.ids = m.ids();
  model.assignments.assign(n, 0);

  Rng rng(derive_seed(seed, "kmeans++"));
  auto centroids = seed_centroids(m, k, rng);
  std::vector<double> sim(n, 0.0);

  for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
    // Assignment: max-dot centroid, ties to the lower index.
    for (std::size_t p = 0; p < n; ++p) {
      std::size_t best_c = 0;
      double best_s = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double s = dot_mixed(m.row(p), centroids[c]);
        if (s > best_s) {
          best_s = s;
          best_c = c;
        }
      }
      model.assignments[p] = best_c;
      sim[p] = best_s;
    }

    // Empty clusters take the point farthest from its own centroid.
    auto counts = model.sizes();
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = n;
      for (std::size_t p = 0; p < n; ++p) {
        if (counts[model.assignments[p]] < 2) continue;
        if (far == n || sim[p] < sim[far]) far = p;
      }
      if (far == n) continue;
      --counts[model.assignments[far]];
      model.assignments[far] = c;
      ++counts[c];
      sim[far] = 1.0;
    }

    // Update: normalized mean, summed in point order.
    std::vector<std::vector<double>> next(k, std::vector<double>(d, 0.0));
    for (std::size_t p = 0; p < n; ++p) {
      auto& acc = next[model.assignments[p]];
      const auto x = m.row(p);
      for (std::size_t i = 0; i < d; ++i) acc[i] += x[i];
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      double nn = 0.0;
      for (double v : next[c]) nn += v * v;
      nn = std::sqrt(nn);
      if (nn == 0.0) {
        next[c] = centroids[c];  // antipodal members cancel; keep previous
      } else {
        for (double& v : next[c]) v /= nn;
      }
      double delta = 0.0;
      for (std::size_t i = 0; i < d; ++i) delta += (next[c][i] - centroids[c][i]) * (next[c][i] - centroids[c][i]);
      movement = std::max(movement, std::sqrt(delta));
    }
    centroids = std::move(next);

    double objective = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      objective += 1.0 - dot_mixed(m.row(p), centroids[model.assignments[p]]);
    model.objective_trace.push_back(objective);
    model.iterations = iter;
    if (movement < options.tolerance) break;
  }
  model.centroids = std::move(centroids);
  return model;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2 && !is_stopword(cur)) tokens.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80 || std::isalnum(c)) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::vector<std::vector<WordScore>> cluster_top_words(
    std::span<const std::vector<std::string>> texts_per_cluster, std::size_t n_words) {
  const std::size_t k = texts_per_cluster.size();
  std::vector<std::map<std::string, std::size_t>> counts(k);
  std::vector<std::size_t> totals(k, 0);
  std::map<std::string, std::size_t> df;
  for (std::size_t c = 0; c < k; ++c) {
    for (const auto& text : texts_per_cluster[c]) {
      for (auto& tok : tokenize(text)) {
        ++counts[c][tok];
        ++totals[c];
      }
    }
    for (const auto& [tok, _] : counts[c]) ++df[tok];
  }

  std::vector<std::vector<WordScore>> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (totals[c] == 0) continue;
    std::vector<WordScore> scored;
    for (const auto& [tok, count] : counts[c]) {
      const double tf = static_cast<double>(count) / static_cast<double>(totals[c]);
      const double idf = std::log(static_cast<double>(k) / static_cast<double>(df.at(tok)));
      scored.push_back({tok, tf * idf});
    }
    std::sort(scored.begin(), scored.end(), [](const WordScore& a, const WordScore& b) {
      return a.score != b.score ? a.score > b.score : a.word < b.word;
    });
    if (scored.size() > n_words) scored.resize(n_words);
    out[c] = std::move(scored);
  }
  return out;
}

std::string cluster_name(std::size_t index, std::span<const WordScore> words, std::size_t name_words) {
  std::string name = std::to_string(index);
  for (std::size_t i = 0; i < words.size() && i < name_words; ++i) name += "_" + words[i].word;
  return name;
}

std::string_view to_string(ClusterTag t) {
  switch (t) {
    case ClusterTag::within: return "within";
    case ClusterTag::cross: return "cross";
    case ClusterTag::not_applicable: return "n/a";
  }
  return "?";
}

std::vector<ClusterTag> tag_cross_cluster(std::span<const LabeledPair> pairs,
                                          const StringMap<std::size_t>& assignments) {
  auto cluster = [&](const std::string& id) {
    auto it = assignments.find(id);
    if (it == assignments.end()) fail(ErrorKind::missing_id, "no cluster assignment for '" + id + "'");
    return it->second;
  };
  std::vector<ClusterTag> tags;
  tags.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.label == PairLabel::pristine) {
      tags.push_back(ClusterTag::not_applicable);
      continue;
    }
    tags.push_back(cluster(p.caption_id) == cluster(p.image_id) ? ClusterTag::within : ClusterTag::cross);
  }
  return tags;
}

std::vector<CrossClusterRow> cross_cluster_stats(std::span<const LabeledPair> pairs,
                                                 std::span<const ClusterTag> tags,
                                                 std::span<const SampleRecord> samples) {
  if (pairs.size() != tags.size()) fail(ErrorKind::argument, "pairs and tags differ in length");
  StringMap<Topic> topic_of;
  for (const auto& s : samples) topic_of.emplace(s.id, s.topic);

  struct Tally {
    std::size_t total = 0, cross = 0;
  };
  std::map<Topic, std::map<Method, Tally>> tally;
  std::map<Topic, std::size_t> topic_total;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto it = topic_of.find(pairs[i].caption_id);
    if (it == topic_of.end()) fail(ErrorKind::missing_id, "caption '" + pairs[i].caption_id + "' not in manifest");
    auto& t = tally[it->second][pairs[i].method];
    ++t.total;
    if (tags[i] == ClusterTag::cross) ++t.cross;
    ++topic_total[it->second];
  }

  std::vector<CrossClusterRow> rows;
  for (const auto& [topic, by_method] : tally) {
    for (Method m : {Method::none, Method::hard, Method::random, Method::cross_topic}) {
      auto it = by_method.find(m);
      if (it == by_method.end()) continue;
      CrossClusterRow r;
      r.topic = topic;
      r.sample_type = m == Method::none ? "pristine" : std::string(to_string(m));
      r.total = it->second.total;
      r.n_cross = it->second.cross;
      r.pct_of_topic = 100.0 * static_cast<double>(r.total) / static_cast<double>(topic_total[topic]);
      r.pct_cross = 100.0 * static_cast<double>(r.n_cross) / static_cast<double>(r.total);
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

}  // namespace ooc
