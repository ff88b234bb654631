#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ooc/errors.hpp"
#include "ooc/pipeline.hpp"
#include "ooc/random.hpp"

namespace ooc {

namespace {

using Vec = std::vector<double>;

Vec gaussian(Rng& rng, std::size_t n, double scale = 1.0) {
  Vec v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

Vec unit(Vec v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  for (auto& x : v) x /= s;
  return v;
}

Vec add(const Vec& a, const Vec& b, double scale = 1.0) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + scale * b[i];
  return out;
}

const std::array<std::array<std::array<const char*, 5>, 4>, 3> kSubtopicWords = {{
    {{{"ocean", "sea", "flood", "coastal", "reef"},
      {"arctic", "glacier", "ice", "permafrost", "snow"},
      {"plastic", "recycling", "waste", "bottle", "landfill"},
      {"solar", "wind", "renewable", "grid", "turbine"}}},
    {{{"vaccine", "dose", "booster", "jab", "pfizer"},
      {"mask", "lockdown", "quarantine", "distancing", "curfew"},
      {"hospital", "icu", "nurses", "ventilator", "patients"},
      {"testing", "pcr", "swab", "antigen", "lab"}}},
    {{{"tank", "armor", "abrams", "leopard", "artillery"},
      {"drone", "uav", "reaper", "strike", "surveillance"},
      {"jet", "fighter", "f35", "squadron", "airbase"},
      {"navy", "destroyer", "carrier", "submarine", "fleet"}}},
}};

const std::array<std::array<const char*, 3>, 3> kTopicWords = {{
    {"climate", "warming", "climatechange"},
    {"covid", "pandemic", "covid19"},
    {"military", "defense", "army"},
}};

const std::array<const char*, 16> kFiller = {
    "today", "new", "report", "says", "watch", "people", "world", "news",
    "look", "week", "latest", "photo", "video", "read", "thread", "must",
};

const std::array<const char*, 6> kGlue = {"the", "of", "and", "in", "is", "this"};

std::string subtopic_word(std::size_t topic, std::size_t sub, std::size_t pick) {
  if (sub < 4) return kSubtopicWords[topic][sub][pick % 5];
  return std::string(to_string(kAllTopics[topic])) + "sub" + std::to_string(sub) + "w" +
         std::to_string(pick % 5);
}

std::string make_text(Rng& rng, std::size_t topic, std::size_t sub) {
  std::string text = kTopicWords[topic][rng.below(3)];
  const std::size_t n_words = 6 + rng.below(5);
  for (std::size_t w = 0; w < n_words; ++w) {
    text += ' ';
    const double u = rng.uniform();
    if (u < 0.45) {
      text += subtopic_word(topic, sub, rng.below(5));
    } else if (u < 0.75) {
      text += kFiller[rng.below(kFiller.size())];
    } else if (u < 0.9) {
      text += kGlue[rng.below(kGlue.size())];
    } else {
      text += '#';
      text += kTopicWords[topic][rng.below(3)];
    }
  }
  return text;
}

}  // namespace

SyntheticCorpus generate_corpus(const SynthOptions& o) {
  if (o.samples < 6) fail(ErrorKind::argument, "synthetic corpus needs at least 6 samples");
  if (o.dim < 4) fail(ErrorKind::argument, "synthetic corpus needs dimension >= 4");
  if (o.subtopics < 1) fail(ErrorKind::argument, "synthetic corpus needs at least one subtopic");

  Rng rng(derive_seed(o.seed, "synth"));
  const std::size_t sem = o.dim * 3 / 4;
  const std::size_t nuis = o.dim - sem;

  std::vector<Vec> topic_center;
  std::vector<std::vector<Vec>> sub_center(3);
  for (std::size_t t = 0; t < 3; ++t) {
    topic_center.push_back(unit(gaussian(rng, sem)));
    for (std::size_t j = 0; j < o.subtopics; ++j)
      sub_center[t].push_back(unit(add(topic_center[t], unit(gaussian(rng, sem)), o.subtopic_spread)));
  }

  SyntheticCorpus c;
  std::vector<std::string> ids;
  std::vector<float> text_values, image_values;
  const double sem_scale = 1.0 / std::sqrt(static_cast<double>(sem));
  const double nuis_scale = o.nuisance / std::sqrt(static_cast<double>(nuis));
  static const std::array<const char*, 2> kRelations = {"text_represented", "text_not_represented"};

  for (std::size_t i = 0; i < o.samples; ++i) {
    // Round-robin topics so every topic is populated.
    const std::size_t t = i % 3;
    const std::size_t j = rng.below(o.subtopics);
    SampleRecord r;
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06zu", i);
    r.id = buf;
    r.topic = kAllTopics[t];
    r.text = make_text(rng, t, j);
    r.image_id = "img_" + r.id;
    const double u = rng.uniform();
    r.split = u < o.train_fraction ? Split::train
                                   : (u < o.train_fraction + o.dev_fraction ? Split::dev : Split::test);

    const Vec s = unit(add(sub_center[t][j], gaussian(rng, sem), o.detail_noise * sem_scale));
    Vec text = s;
    const Vec tn = gaussian(rng, nuis, nuis_scale);
    text.insert(text.end(), tn.begin(), tn.end());
    Vec image = add(s, gaussian(rng, sem), o.image_noise * sem_scale);
    const Vec in = gaussian(rng, nuis, nuis_scale);
    image.insert(image.end(), in.begin(), in.end());
    for (double x : unit(text)) text_values.push_back(static_cast<float>(x));
    for (double x : unit(image)) image_values.push_back(static_cast<float>(x));

    OcrRecord ocr;
    ocr.image_id = r.image_id;
    ocr.width = 200 + static_cast<std::int64_t>(rng.below(601));
    ocr.height = 200 + static_cast<std::int64_t>(rng.below(601));
    if (rng.uniform() >= 0.35) {
      const std::size_t n_boxes = 1 + rng.below(4);
      // Box size scale varies so all coverage buckets are populated.
      const double scale = rng.uniform(0.05, 0.9);
      for (std::size_t b = 0; b < n_boxes; ++b) {
        const auto bw = std::max<std::int64_t>(1, static_cast<std::int64_t>(scale * ocr.width * rng.uniform(0.3, 1.0)));
        const auto bh = std::max<std::int64_t>(1, static_cast<std::int64_t>(scale * ocr.height * rng.uniform(0.1, 0.6)));
        const auto x1 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(ocr.width - bw + 1)));
        const auto y1 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(ocr.height - bh + 1)));
        ocr.boxes.push_back({x1, y1, x1 + bw, y1 + bh});
      }
    }

    c.relation_labels.emplace(r.id, kRelations[rng.below(2)]);
    c.planted_subtopic.emplace(r.id, t * o.subtopics + j);
    ids.push_back(r.id);
    c.ocr.push_back(std::move(ocr));
    c.samples.push_back(std::move(r));
  }
  c.text = EmbeddingMatrix(ids, o.dim, std::move(text_values));
  c.image = EmbeddingMatrix(std::move(ids), o.dim, std::move(image_values));
  return c;
}

}  // namespace ooc
