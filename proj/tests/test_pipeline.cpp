#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "ooc/pipeline.hpp"
#include "ooc/random.hpp"
#include "test_util.hpp"

using namespace ooc;
using nlohmann::json;

namespace {

struct Captured {
  std::string out, warn;
  CommandIo io() {
    return {[this](std::string_view s) { out += s; }, [this](std::string_view s) { warn += s; }};
  }
};

// Synthetic corpus in a temp dir plus a config pointing at it.
struct Workspace {
  TempDir dir;
  KeyValueConfig kv;

  explicit Workspace(std::size_t samples = 300, std::uint64_t seed = 0, std::size_t dim = 16,
                     std::size_t subtopics = 2) {
    KeyValueConfig s;
    s.set("synth.samples", std::to_string(samples));
    s.set("synth.dim", std::to_string(dim));
    s.set("synth.subtopics", std::to_string(subtopics));
    s.set("synth.out", (dir / "corpus").string());
    s.set("seed", std::to_string(seed));
    Captured c;
    cmd_synth(resolve_config(s), c.io());
    kv.load_file(dir / "corpus" / "ooc.conf");
    kv.set("train.epochs", "4");
  }

  std::filesystem::path path(const std::string& rel) const { return dir / "corpus" / rel; }

  std::string run(const std::string& command) {
    Captured c;
    run_command(command, resolve_config(kv), c.io());
    return c.out;
  }

  json metrics() const {
    std::ifstream in(path("reports/metrics.json"));
    return json::parse(in);
  }
};

std::string with_env(const char* name, const char* value, auto&& fn) {
  ::setenv(name, value, 1);
  std::string out;
  try {
    out = fn();
  } catch (...) {
    ::unsetenv(name);
    throw;
  }
  ::unsetenv(name);
  return out;
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config parsing") {
    KeyValueConfig kv;
    kv.parse("# comment\n seed = 5 \ntrain.epochs=3\n\nfusion=concat\n");
    const auto c = resolve_config(kv);
    CHECK(c.seed == 5);
    CHECK(c.train.seed == 5);
    CHECK(c.train.epochs == 3);
    CHECK(c.fusion == FusionMethod::concat);

    KeyValueConfig bad;
    bad.set("train.epoch", "3");
    CHECK_ERROR_KIND(resolve_config(bad), ErrorKind::config);
    KeyValueConfig bad_value;
    bad_value.set("train.epochs", "many");
    CHECK_ERROR_KIND(resolve_config(bad_value), ErrorKind::config);
    KeyValueConfig bad_lr;
    bad_lr.set("train.learning_rate", "-1");
    CHECK_ERROR_KIND(resolve_config(bad_lr), ErrorKind::config);
    KeyValueConfig bad_breakout;
    bad_breakout.set("evaluate.breakouts", "method,shoe_size");
    CHECK_ERROR_KIND(resolve_config(bad_breakout), ErrorKind::config);
    KeyValueConfig no_eq;
    CHECK_ERROR_KIND(no_eq.parse("seed 5"), ErrorKind::config);
  }

  TEST_CASE("defaults") {
    const RunConfig c;
    CHECK(c.mine.ratio_hard == 0.75);
    CHECK(c.build.ratio_hard == 0.5);
    CHECK(c.train.epochs == 16);
    CHECK(c.train.learning_rate == 5e-5);
    CHECK(c.train.batch_size == 512);
    CHECK(c.fusion == FusionMethod::multiply);
    CHECK(c.cluster_k.at(Topic::climate) == 21);
    CHECK(c.cluster_k.at(Topic::covid) == 32);
    CHECK(c.cluster_k.at(Topic::military) == 23);
  }

  TEST_CASE("config files resolve paths relative to themselves; env and later sets win") {
    TempDir dir;
    std::filesystem::create_directories(dir / "sub");
    spit(dir / "sub" / "a.conf", "paths.manifest=m.jsonl\npaths.model=/abs/model.json\nseed=3\n");
    KeyValueConfig kv;
    kv.load_file(dir / "sub" / "a.conf");
    CHECK(resolve_config(kv).paths.manifest == (dir / "sub" / "m.jsonl").lexically_normal());
    CHECK(resolve_config(kv).paths.model == std::filesystem::path("/abs/model.json"));
    const auto seed = with_env("OOC_SEED", "17", [&] {
      kv.apply_environment();
      return std::to_string(resolve_config(kv).seed);
    });
    CHECK(seed == "17");
    kv.set("seed", "18");
    CHECK(resolve_config(kv).seed == 18);
    CHECK_ERROR_KIND(kv.load_file(dir / "missing.conf"), ErrorKind::config);
  }

  TEST_CASE("expert model paths") {
    CHECK(expert_model_path("out/model.json", Topic::covid) == std::filesystem::path("out/model.covid.json"));
    CHECK(expert_model_path("model", Topic::climate) == std::filesystem::path("model.climate"));
  }

  TEST_CASE("synthetic corpus shape") {
    SynthOptions o;
    o.samples = 120;
    o.dim = 12;
    const auto c = generate_corpus(o);
    CHECK(c.samples.size() == 120);
    CHECK(c.text.rows() == 120);
    CHECK(c.image.dim() == 12);
    CHECK(is_normalized(c.text));
    CHECK(is_normalized(c.image));
    std::map<Topic, int> per_topic;
    for (const auto& s : c.samples) ++per_topic[s.topic];
    CHECK(per_topic.size() == 3);
    const auto again = generate_corpus(o);
    CHECK(std::equal(c.text.values().begin(), c.text.values().end(), again.text.values().begin()));
    CHECK_ERROR_KIND(generate_corpus(SynthOptions{.samples = 2}), ErrorKind::argument);
  }

  TEST_CASE("mine prints table counts that add up") {
    Workspace ws;
    const auto out = ws.run("mine");
    CHECK(out.find("pristine") != std::string::npos);
    CHECK(out.find("hard") != std::string::npos);
    const auto pairs = load_pairs(ws.path("train_pairs.jsonl"));
    const auto manifest = load_manifest(ws.path("manifest.jsonl"));
    const auto counts = count_pairs(pairs, manifest);
    for (const auto& [t, row] : counts.by_topic) CHECK(row.pristine == row.hard + row.random);
  }

  TEST_CASE("ratio 1 yields no random lines; reruns are byte-identical") {
    Workspace ws;
    ws.kv.set("mine.ratio_hard", "1");
    ws.run("mine");
    const auto first = slurp(ws.path("train_pairs.jsonl"));
    CHECK(first.find("\"random\"") == std::string::npos);
    ws.run("mine");
    CHECK(slurp(ws.path("train_pairs.jsonl")) == first);
    ws.kv.set("threads", "4");
    ws.run("mine");
    CHECK(slurp(ws.path("train_pairs.jsonl")) == first);
  }

  TEST_CASE("toy manifest of six samples") {
    TempDir dir;
    std::vector<SampleRecord> recs;
    std::vector<std::string> ids;
    std::vector<float> v;
    for (int i = 0; i < 6; ++i) {
      recs.push_back({"t" + std::to_string(i), Topic::climate, "caption " + std::to_string(i), "i" + std::to_string(i), Split::train});
      ids.push_back(recs.back().id);
      v.insert(v.end(), {float(i + 1), float(6 - i), 1.0f});
    }
    save_manifest(recs, dir / "m.jsonl");
    save_matrix(EmbeddingMatrix(ids, 3, v), dir / "t.emb");
    KeyValueConfig kv;
    kv.set("paths.manifest", (dir / "m.jsonl").string());
    kv.set("paths.text_emb", (dir / "t.emb").string());
    kv.set("paths.pairs", (dir / "p.jsonl").string());
    kv.set("mine.ratio_hard", "0.5");
    Captured c;
    cmd_mine(resolve_config(kv), c.io());
    const auto pairs = load_pairs(dir / "p.jsonl");
    std::size_t hard = 0, random = 0, pristine = 0;
    for (const auto& p : pairs) hard += p.method == Method::hard, random += p.method == Method::random, pristine += p.label == PairLabel::pristine;
    CHECK(hard == 3);
    CHECK(random == 3);
    CHECK(pristine == 6);
  }

  TEST_CASE("missing inputs are configuration errors") {
    KeyValueConfig kv;
    Captured c;
    CHECK_ERROR_KIND(cmd_mine(resolve_config(kv), c.io()), ErrorKind::config);
    kv.set("paths.manifest", "/nonexistent/manifest.jsonl");
    CHECK_ERROR_KIND(cmd_mine(resolve_config(kv), c.io()), ErrorKind::config);
    CHECK_ERROR_KIND(run_command("bogus", resolve_config(kv), c.io()), ErrorKind::config);
  }

  TEST_CASE("train then evaluate") {
    Workspace ws;
    ws.run("mine");
    ws.run("build");
    ws.kv.set("train.epochs", "1");
    ws.run("train");
    CHECK(count_lines(ws.path("reports/loss_trace.csv")) == 2);
    const auto model_bytes = slurp(ws.path("model.json"));
    ws.run("train");
    CHECK(slurp(ws.path("model.json")) == model_bytes);

    ws.kv.set("evaluate.breakouts", "method,topic,topic_method,ocr,labels");
    const auto out = ws.run("evaluate");
    CHECK(out.find("zero_shot") != std::string::npos);
    const auto m = ws.metrics();
    for (const char* key : {"pd_at_far01", "pd_at_eer", "acc_at_eer"}) {
      CHECK(m["detector"]["all"].contains(key));
      CHECK(m["zero_shot"]["all"].contains(key));
    }
    CHECK(m["detector"].contains("method=hard"));
    CHECK(m["detector"].contains("topic=covid,method=random"));
    CHECK(m.contains("skipped"));
    const auto pred = slurp(ws.path("reports/predictions.csv"));
    CHECK(pred.rfind("caption_id,image_id,score,label\n", 0) == 0);
    CHECK(std::filesystem::exists(ws.path("reports/roc.csv")));
    CHECK(slurp(ws.path("reports/ocr_coverage.csv")).rfind("image_id,coverage,bucket\n", 0) == 0);
    const auto first = slurp(ws.path("reports/metrics.json"));
    ws.run("evaluate");
    CHECK(slurp(ws.path("reports/metrics.json")) == first);

    ws.kv.set("report.inputs", ws.path("reports/metrics.json").string());
    CHECK(ws.run("report").find("method=hard") != std::string::npos);
    ws.kv.set("report.format", "csv");
    CHECK(ws.run("report").rfind("input,scorer,group", 0) == 0);
  }

  TEST_CASE("zero-weight model scores at chance") {
    Workspace ws;
    ws.run("build");
    auto m = init_model(16, FusionMethod::multiply, 16, 0);
    std::fill(m.w1.begin(), m.w1.end(), 0.0);
    std::fill(m.w2.begin(), m.w2.end(), 0.0);
    std::fill(m.b1.begin(), m.b1.end(), 0.0);
    m.b2 = 0.0;
    save_model(m, ws.path("model.json"));
    ws.run("evaluate");
    const auto all = ws.metrics()["detector"]["all"];
    const double n = all["n_pos"].get<double>() + all["n_neg"].get<double>();
    CHECK(std::abs(all["acc_at_eer"].get<double>() - 0.5) <= 1.0 / n);
  }

  TEST_CASE("breakouts without their files are configuration errors") {
    Workspace ws;
    ws.run("build");
    ws.run("mine");
    ws.run("train");
    ws.kv.set("evaluate.breakouts", "cluster");
    ws.kv.set("paths.clusters", "");
    CHECK_ERROR_KIND(ws.run("evaluate"), ErrorKind::config);
    ws.kv.set("evaluate.breakouts", "ocr");
    ws.kv.set("paths.ocr", "");
    CHECK_ERROR_KIND(ws.run("evaluate"), ErrorKind::config);
    ws.kv.set("evaluate.breakouts", "labels");
    ws.kv.set("paths.labels", ws.path("nothing.jsonl").string());
    CHECK_ERROR_KIND(ws.run("evaluate"), ErrorKind::config);
  }

  TEST_CASE("per-topic experts") {
    Workspace ws;
    ws.kv.set("topic_scope", "per_topic");
    ws.kv.set("train.epochs", "1");
    ws.run("mine");
    ws.run("build");
    ws.run("train");
    for (Topic t : kAllTopics) CHECK(std::filesystem::exists(expert_model_path(ws.path("model.json"), t)));
    CHECK(count_lines(ws.path("reports/loss_trace.csv")) == 4);
    ws.run("evaluate");
    CHECK(ws.metrics()["detector"].contains("all"));
  }

  TEST_CASE("joint training is on par with experts") {
    Workspace ws(1000, 1);
    ws.kv.set("train.epochs", "16");
    ws.kv.set("build.ratio_hard", "0.5");
    ws.run("mine");
    ws.run("build");
    ws.run("train");
    ws.run("evaluate");
    const double joint = ws.metrics()["detector"]["all"]["acc_at_eer"].get<double>();
    ws.kv.set("topic_scope", "per_topic");
    ws.run("train");
    ws.run("evaluate");
    const auto m = ws.metrics();
    double expert = 0.0;
    for (Topic t : kAllTopics) expert += m["detector"]["topic=" + std::string(to_string(t))]["acc_at_eer"].get<double>();
    expert /= 3.0;
    CHECK(joint >= expert - 0.02);
  }

  TEST_CASE("zero-shot separates random negatives") {
    Workspace ws(1000, 2, 64, 4);
    ws.kv.set("build.ratio_hard", "0");
    ws.run("build");
    save_model(init_model(64, FusionMethod::multiply, 64, 0), ws.path("model.json"));
    ws.run("evaluate");
    CHECK(ws.metrics()["zero_shot"]["all"]["acc_at_eer"].get<double>() >= 0.9);
  }

  TEST_CASE("cluster outputs, tagging and determinism") {
    Workspace ws(600, 3);
    ws.run("mine");
    const auto out = ws.run("cluster");
    CHECK(out.find("% cross_cluster") != std::string::npos);
    const auto assignments = slurp(ws.path("clusters.jsonl"));
    CHECK(count_lines(ws.path("clusters.jsonl")) == 600);
    const auto summary = json::parse(slurp(ws.path("reports/cluster_summary.json")));
    CHECK(summary.size() == 6);
    for (const auto& c : summary) {
      CHECK(c.contains("name"));
      CHECK(c["top_words"].size() <= 10);
    }
    CHECK(std::filesystem::exists(ws.path("reports/pairs_tagged.jsonl")));
    ws.run("cluster");
    CHECK(slurp(ws.path("clusters.jsonl")) == assignments);

    ws.kv.set("clustering.k.covid", "100000");
    CHECK_ERROR_KIND(ws.run("cluster"), ErrorKind::argument);
  }

  TEST_CASE("cross-cluster hard negatives are no harder than within-cluster ones") {
    // Two tight sub-topics per topic plus generic captions far from both; a
    // generic caption's nearest neighbour is distant, often in the other
    // cluster, and its swapped image is correspondingly dissimilar.
    TempDir dir;
    Rng rng(21);
    const std::size_t d = 32;
    std::vector<SampleRecord> recs;
    std::vector<std::string> ids;
    std::vector<float> tv, iv;
    std::size_t n = 0;
    for (Topic topic : kAllTopics) {
      for (std::size_t i = 0; i < 300; ++i, ++n) {
        const std::size_t sub = i % 2;
        const bool generic = i % 10 == 0;
        std::vector<double> t(d, 0.0);
        const std::size_t axis = 2 * static_cast<std::size_t>(topic) + sub;
        for (auto& x : t) x = rng.normal() * (generic ? 1.0 : 0.08);
        t[axis] += generic ? 0.5 : 1.0;
        char id[16];
        std::snprintf(id, sizeof id, "q%05zu", n);
        recs.push_back({id, topic, "word" + std::to_string(axis) + " item" + std::to_string(i), "img" + std::string(id),
                        Split::dev});
        ids.push_back(id);
        for (double x : t) tv.push_back(static_cast<float>(x));
        for (double x : t) iv.push_back(static_cast<float>(x + 0.1 * rng.normal()));
      }
    }
    save_manifest(recs, dir / "manifest.jsonl");
    save_matrix(normalize(EmbeddingMatrix(ids, d, tv)), dir / "text.emb");
    save_matrix(normalize(EmbeddingMatrix(ids, d, iv)), dir / "image.emb");
    save_model(init_model(d, FusionMethod::multiply, d, 0), dir / "model.json");
    KeyValueConfig kv;
    spit(dir / "ooc.conf",
         "paths.manifest=manifest.jsonl\npaths.text_emb=text.emb\npaths.img_emb=image.emb\n"
         "paths.clusters=clusters.jsonl\npaths.pairs=pairs.jsonl\npaths.eval_pairs=pairs.jsonl\n"
         "paths.model=model.json\npaths.reports=reports\nmine.split=dev\nmine.ratio_hard=1\n"
         "clustering.k.climate=2\nclustering.k.covid=2\nclustering.k.military=2\n"
         "evaluate.breakouts=cluster\n");
    kv.load_file(dir / "ooc.conf");
    const auto cfg = resolve_config(kv);
    Captured c;
    for (const char* cmd : {"mine", "cluster", "evaluate"}) run_command(cmd, cfg, c.io());
    const auto m = json::parse(slurp(dir / "reports" / "metrics.json"))["zero_shot"];
    REQUIRE(m.contains("cluster=cross"));
    REQUIRE(m.contains("cluster=within"));
    CHECK(m["cluster=cross"]["n_pos"].get<std::size_t>() >= 20);
    CHECK(m["cluster=cross"]["acc_at_eer"].get<double>() >= m["cluster=within"]["acc_at_eer"].get<double>());
  }

  TEST_CASE("hard negatives cross clusters less often than random ones") {
    Workspace ws(900, 4);
    ws.kv.set("mine.ratio_hard", "0.5");
    ws.run("mine");
    ws.run("cluster");
    const auto rows = json::parse(slurp(ws.path("reports/cross_cluster.json")));
    std::size_t hard = 0, hard_cross = 0, random = 0, random_cross = 0;
    for (const auto& r : rows) {
      if (r["sample_type"] == "hard") hard += r["total"].get<std::size_t>(), hard_cross += r["n_cross"].get<std::size_t>();
      if (r["sample_type"] == "random") random += r["total"].get<std::size_t>(), random_cross += r["n_cross"].get<std::size_t>();
    }
    CHECK(double(hard_cross) / double(hard) < double(random_cross) / double(random));
  }
}
