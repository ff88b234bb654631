#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "ooc/forensic_metrics.hpp"
#include "ooc/fusion_detector.hpp"
#include "ooc/random.hpp"
#include "test_util.hpp"

using namespace ooc;

namespace {

std::vector<float> randn(Rng& rng, std::size_t d) {
  std::vector<float> v(d);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

std::vector<float> unit(std::vector<float> v) {
  const double n = norm(v);
  for (auto& x : v) x = static_cast<float>(x / n);
  return v;
}

// Pristine = (u, u + 0.05 noise), falsified = (u, v) with v independent.
struct Toy {
  EmbeddingMatrix img, txt;
  std::vector<LabeledPair> pairs;
};

Toy make_toy(std::size_t n_captions, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> ids;
  std::vector<float> iv, tv;
  for (std::size_t i = 0; i < n_captions; ++i) {
    ids.push_back("s" + std::to_string(i));
    auto u = unit(randn(rng, d));
    auto noisy = u;
    for (auto& x : noisy) x += static_cast<float>(0.05 * rng.normal() / std::sqrt(double(d)));
    tv.insert(tv.end(), u.begin(), u.end());
    noisy = unit(noisy);
    iv.insert(iv.end(), noisy.begin(), noisy.end());
  }
  Toy t{normalize(EmbeddingMatrix(ids, d, iv)), normalize(EmbeddingMatrix(ids, d, tv)), {}};
  for (std::size_t i = 0; i < n_captions; ++i) {
    t.pairs.push_back({ids[i], ids[i], PairLabel::pristine, Method::none});
    t.pairs.push_back({ids[i], ids[(i + 1 + rng.below(n_captions - 1)) % n_captions], PairLabel::falsified,
                       Method::random});
  }
  return t;
}

double accuracy(const DetectorModel& m, const Toy& t) {
  std::size_t ok = 0;
  for (const auto& p : t.pairs) {
    const double s = predict(m, p.caption_id, p.image_id, t.img, t.txt);
    ok += (s > 0.5) == (p.label == PairLabel::falsified);
  }
  return double(ok) / double(t.pairs.size());
}

}  // namespace

TEST_SUITE("fusion_detector") {
  TEST_CASE("fused widths") {
    CHECK(fused_width(FusionMethod::concat, 5) == 10);
    CHECK(fused_width(FusionMethod::concat_dot, 5) == 11);
    CHECK(fused_width(FusionMethod::multiply, 5) == 5);
  }

  TEST_CASE("fuse examples") {
    const std::vector<float> x = {1, 0}, y = {0, 1};
    CHECK(fuse(x, y, FusionMethod::multiply) == std::vector<double>{0, 0});
    const std::vector<float> u = {0.6f, 0.8f}, v = {0.8f, 0.6f};
    const auto cd = fuse(u, u, FusionMethod::concat_dot);
    CHECK(cd.size() == 5);
    CHECK(cd.back() == doctest::Approx(1.0).epsilon(1e-7));
    const auto m = fuse(u, v, FusionMethod::multiply);
    CHECK(m[0] + m[1] == doctest::Approx(0.96).epsilon(1e-7));
    const auto c = fuse(u, v, FusionMethod::concat);
    CHECK(c == std::vector<double>{u[0], u[1], v[0], v[1]});
    CHECK_ERROR_KIND(fuse(u, std::vector<float>{1, 0, 0}, FusionMethod::concat), ErrorKind::argument);
  }

  TEST_CASE("multiply fusion is symmetric") {
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
      const auto a = unit(randn(rng, 7)), b = unit(randn(rng, 7));
      CHECK(fuse(a, b, FusionMethod::multiply) == fuse(b, a, FusionMethod::multiply));
    }
  }

  TEST_CASE("zero-shot score") {
    const std::vector<float> u = {0.6f, 0.8f}, v = {0.8f, 0.6f}, w = {-0.8f, 0.6f};
    CHECK(zero_shot_score(u, u) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(zero_shot_score(u, w) == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(zero_shot_score(u, v) == doctest::Approx(0.96).epsilon(1e-7));
    CHECK_ERROR_KIND(zero_shot_score(u, std::vector<float>{1}), ErrorKind::argument);
  }

  TEST_CASE("zero-shot ranking is invariant to positive rescaling before normalization") {
    Rng rng(4);
    std::vector<std::string> ids;
    std::vector<float> raw, scaled;
    for (int i = 0; i < 20; ++i) {
      ids.push_back("i" + std::to_string(i));
      const auto v = randn(rng, 6);
      const float s = static_cast<float>(0.1 + 10 * rng.uniform());
      for (float x : v) raw.push_back(x), scaled.push_back(x * s);
    }
    const auto a = normalize(EmbeddingMatrix(ids, 6, raw));
    const auto b = normalize(EmbeddingMatrix(ids, 6, scaled));
    const auto q = unit(randn(rng, 6));
    std::size_t best_a = 0, best_b = 0;
    for (std::size_t i = 1; i < ids.size(); ++i) {
      if (zero_shot_score(a.row(i), q) > zero_shot_score(a.row(best_a), q)) best_a = i;
      if (zero_shot_score(b.row(i), q) > zero_shot_score(b.row(best_b), q)) best_b = i;
    }
    CHECK(best_a == best_b);
  }

  TEST_CASE("init shapes and parameter counts") {
    const auto m = init_model(768, FusionMethod::multiply, 768, 0);
    CHECK(m.parameter_count() == 591361);
    const auto c = init_model(4, FusionMethod::concat, 2, 0);
    CHECK(c.input_width() == 8);
    CHECK(c.w1.size() == 16);
    CHECK(c.b1.size() == 2);
    CHECK(c.w2.size() == 2);
    CHECK(init_model(4, FusionMethod::concat, 2, 7) == init_model(4, FusionMethod::concat, 2, 7));
    CHECK_FALSE(init_model(4, FusionMethod::concat, 2, 7) == init_model(4, FusionMethod::concat, 2, 8));
    const double bound = 1.0 / std::sqrt(8.0);
    for (double w : c.w1) CHECK(std::abs(w) <= bound);
    CHECK_ERROR_KIND(init_model(0, FusionMethod::concat, 2, 0), ErrorKind::argument);
    CHECK_ERROR_KIND(init_model(3, FusionMethod::concat, 0, 0), ErrorKind::argument);
  }

  TEST_CASE("analytic gradient matches central differences") {
    Rng rng(12);
    for (int trial = 0; trial < 5; ++trial) {
      for (auto act : {Activation::relu, Activation::identity}) {
        auto m = init_model(8, FusionMethod::concat_dot, 4, 100 + trial, act);
        const std::size_t rows = 6, in = m.input_width();
        std::vector<double> f(rows * in), y(rows);
        for (auto& x : f) x = rng.normal();
        for (auto& t : y) t = static_cast<double>(rng.below(2));
        Gradient g;
        loss_and_gradient(m, f, y, &g);
        auto check_param = [&](double& p, double analytic) {
          const double orig = p;
          const double num = oracle::central_difference(
              [&](double v) {
                p = v;
                return loss_and_gradient(m, f, y, nullptr);
              },
              orig, 1e-4);
          p = orig;
          CHECK(std::abs(num - analytic) <= 1e-4 * std::max({std::abs(num), std::abs(analytic), 1e-3}));
        };
        for (std::size_t i = 0; i < m.w1.size(); ++i) check_param(m.w1[i], g.w1[i]);
        for (std::size_t i = 0; i < m.b1.size(); ++i) check_param(m.b1[i], g.b1[i]);
        for (std::size_t i = 0; i < m.w2.size(); ++i) check_param(m.w2[i], g.w2[i]);
        check_param(m.b2, g.b2);
      }
    }
  }

  TEST_CASE("training separates the toy corpus") {
    const auto t = make_toy(100, 16, 3);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 16;
    cfg.seed = 1;
    const auto r = train(init_model(16, FusionMethod::multiply, 16, 1), t.pairs, t.img, t.txt, cfg);
    CHECK(r.epoch_loss.size() == 16);
    CHECK(r.epoch_loss.back() < r.epoch_loss.front());
    CHECK(r.model.trained_epochs == 16);
    CHECK(accuracy(r.model, t) >= 0.95);

    double pos = 0, neg = 0;
    for (const auto& p : t.pairs) {
      const double s = predict(r.model, p.caption_id, p.image_id, t.img, t.txt);
      (p.label == PairLabel::falsified ? pos : neg) += s;
    }
    CHECK(pos > neg);
  }

  TEST_CASE("training is deterministic") {
    const auto t = make_toy(40, 8, 5);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 8;
    cfg.epochs = 3;
    cfg.seed = 9;
    const auto a = train(init_model(8, FusionMethod::multiply, 8, 2), t.pairs, t.img, t.txt, cfg);
    const auto b = train(init_model(8, FusionMethod::multiply, 8, 2), t.pairs, t.img, t.txt, cfg);
    CHECK(a.model == b.model);
    CHECK(model_to_json(a.model) == model_to_json(b.model));
    CHECK(a.epoch_loss == b.epoch_loss);
  }

  TEST_CASE("zero learning rate leaves weights unchanged") {
    const auto t = make_toy(30, 8, 6);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 4;
    cfg.batch_size = 7;
    const auto init = init_model(8, FusionMethod::concat, 5, 3);
    const auto r = train(init, t.pairs, t.img, t.txt, cfg);
    CHECK(r.model.w1 == init.w1);
    CHECK(r.model.b2 == init.b2);
    for (double l : r.epoch_loss) CHECK(l == doctest::Approx(r.epoch_loss.front()).epsilon(1e-12));
  }

  TEST_CASE("training errors") {
    const auto t = make_toy(10, 4, 1);
    TrainConfig cfg;
    auto pairs = t.pairs;
    pairs.push_back({"ghost", "s1", PairLabel::falsified, Method::random});
    CHECK_ERROR_KIND(train(init_model(4, FusionMethod::multiply, 4, 0), pairs, t.img, t.txt, cfg), ErrorKind::missing_id);
    cfg.mode = TrainMode::fine_tune;
    CHECK_ERROR_KIND(train(init_model(4, FusionMethod::multiply, 4, 0), t.pairs, t.img, t.txt, cfg), ErrorKind::argument);
    cfg.mode = TrainMode::head_only;
    cfg.learning_rate = 1e300;
    cfg.epochs = 3;
    CHECK_ERROR_KIND(train(init_model(4, FusionMethod::multiply, 4, 0), t.pairs, t.img, t.txt, cfg), ErrorKind::divergence);
  }

  TEST_CASE("prediction conventions") {
    auto m = init_model(4, FusionMethod::multiply, 3, 0);
    std::fill(m.w1.begin(), m.w1.end(), 0.0);
    std::fill(m.b1.begin(), m.b1.end(), 0.0);
    std::fill(m.w2.begin(), m.w2.end(), 0.0);
    m.b2 = 0.0;
    const std::vector<float> a = {0.5f, 0.5f, 0.5f, 0.5f}, b = {1, 0, 0, 0};
    CHECK(predict(m, a, b) == 0.5);

    Rng rng(2);
    auto r = init_model(4, FusionMethod::concat, 3, 1);
    const auto x = unit(randn(rng, 4)), y = unit(randn(rng, 4));
    const double before = predict(r, x, y);
    r.b2 += 0.5;
    CHECK(predict(r, x, y) > before);
    CHECK_ERROR_KIND(predict(r, std::vector<float>{1, 0}, std::vector<float>{1, 0}), ErrorKind::argument);
  }

  TEST_CASE("relu head with nonnegative weights is monotone in each feature") {
    auto m = init_model(3, FusionMethod::multiply, 2, 4);
    for (auto& w : m.w1) w = std::abs(w);
    for (auto& w : m.w2) w = std::abs(w);
    std::vector<double> f = {0.1, 0.2, 0.3};
    for (std::size_t k = 0; k < 3; ++k) {
      auto g = f;
      g[k] += 0.5;
      CHECK(m.logit(g) >= m.logit(f));
    }
  }

  TEST_CASE("model file round trip") {
    TempDir dir;
    const auto m = init_model(5, FusionMethod::concat_dot, 3, 42, Activation::identity);
    save_model(m, dir / "m.json");
    const auto back = load_model(dir / "m.json");
    CHECK(back == m);
    save_model(back, dir / "n.json");
    CHECK(slurp(dir / "m.json") == slurp(dir / "n.json"));
    const auto text = slurp(dir / "m.json");
    for (const char* key : {"format_version", "fusion", "d", "hidden_width", "seed", "trained_epochs"})
      CHECK(text.find('"' + std::string(key) + '"') != std::string::npos);

    spit(dir / "bad.json", "{\"format_version\": 99}");
    CHECK_ERROR_KIND(load_model(dir / "bad.json"), ErrorKind::format);
    spit(dir / "junk.json", "not json");
    CHECK_ERROR_KIND(load_model(dir / "junk.json"), ErrorKind::format);
  }

  TEST_CASE("enum names") {
    CHECK(parse_fusion("concat_dot") == FusionMethod::concat_dot);
    CHECK(to_string(FusionMethod::multiply) == "multiply");
    CHECK(parse_activation("identity") == Activation::identity);
    CHECK(parse_train_mode("head_only") == TrainMode::head_only);
    CHECK_ERROR_KIND(parse_fusion("add"), ErrorKind::validation);
  }
}
