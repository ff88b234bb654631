#include "ooc/fusion_detector.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "json.hpp"
#include "ooc/errors.hpp"
#include "ooc/random.hpp"

namespace ooc {

std::string_view to_string(FusionMethod f) {
  switch (f) {
    case FusionMethod::concat: return "concat";
    case FusionMethod::concat_dot: return "concat_dot";
    case FusionMethod::multiply: return "multiply";
  }
  return "?";
}

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

std::string_view to_string(TrainMode m) {
  return m == TrainMode::head_only ? "head_only" : "fine_tune";
}

FusionMethod parse_fusion(std::string_view s) {
  for (auto f : {FusionMethod::concat, FusionMethod::concat_dot, FusionMethod::multiply})
    if (s == to_string(f)) return f;
  fail(ErrorKind::validation, "unknown fusion method '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  fail(ErrorKind::validation, "unknown activation '" + std::string(s) + "'");
}

TrainMode parse_train_mode(std::string_view s) {
  if (s == "head_only") return TrainMode::head_only;
  if (s == "fine_tune") return TrainMode::fine_tune;
  fail(ErrorKind::validation, "unknown training mode '" + std::string(s) + "'");
}

std::size_t fused_width(FusionMethod method, std::size_t dim) {
  switch (method) {
    case FusionMethod::concat: return 2 * dim;
    case FusionMethod::concat_dot: return 2 * dim + 1;
    case FusionMethod::multiply: return dim;
  }
  return 0;
}

namespace {

void check_same_dim(std::span<const float> img, std::span<const float> txt) {
  if (img.size() != txt.size()) {
    fail(ErrorKind::argument, "image/text dimension mismatch: " + std::to_string(img.size()) +
                                  " vs " + std::to_string(txt.size()));
  }
}

}  // namespace

void fuse(std::span<const float> img, std::span<const float> txt, FusionMethod method,
          std::span<double> out) {
  check_same_dim(img, txt);
  const std::size_t d = img.size();
  if (out.size() != fused_width(method, d)) fail(ErrorKind::argument, "fused output has wrong width");
  switch (method) {
    case FusionMethod::multiply:
      for (std::size_t k = 0; k < d; ++k) out[k] = static_cast<double>(img[k]) * txt[k];
      break;
    case FusionMethod::concat:
    case FusionMethod::concat_dot:
      for (std::size_t k = 0; k < d; ++k) {
        out[k] = img[k];
        out[d + k] = txt[k];
      }
      if (method == FusionMethod::concat_dot) out[2 * d] = dot(img, txt);
      break;
  }
}

std::vector<double> fuse(std::span<const float> img, std::span<const float> txt,
                         FusionMethod method) {
  check_same_dim(img, txt);
  std::vector<double> out(fused_width(method, img.size()));
  fuse(img, txt, method, out);
  return out;
}

double zero_shot_score(std::span<const float> img, std::span<const float> txt) {
  check_same_dim(img, txt);
  return dot(img, txt);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double activate(Activation a, double x) {
  return a == Activation::relu ? (x > 0.0 ? x : 0.0) : x;
}

double activate_grad(Activation a, double x) {
  return a == Activation::relu ? (x > 0.0 ? 1.0 : 0.0) : 1.0;
}

// log(1 + exp(z)) - y * z, stable for large |z|.
double bce_with_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

double DetectorModel::logit(std::span<const double> x) const {
  const std::size_t h = hidden;
  std::vector<double> pre(b1.begin(), b1.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double* row = w1.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) pre[j] += xi * row[j];
  }
  double z = b2;
  for (std::size_t j = 0; j < h; ++j) z += w2[j] * activate(activation, pre[j]);
  return z;
}

DetectorModel init_model(std::size_t dim, FusionMethod fusion, std::size_t hidden,
                         std::uint64_t seed, Activation activation) {
  if (dim < 1) fail(ErrorKind::argument, "embedding dimension must be >= 1");
  if (hidden < 1) fail(ErrorKind::argument, "hidden width must be >= 1");
  DetectorModel m;
  m.fusion = fusion;
  m.activation = activation;
  m.dim = dim;
  m.hidden = hidden;
  m.seed = seed;
  const std::size_t in = m.input_width();

  Rng rng(derive_seed(seed, "init"));
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  m.w1.resize(in * hidden);
  for (auto& w : m.w1) w = rng.uniform(-bound1, bound1);
  m.b1.resize(hidden);
  for (auto& b : m.b1) b = rng.uniform(-bound1, bound1);
  m.w2.resize(hidden);
  for (auto& w : m.w2) w = rng.uniform(-bound2, bound2);
  m.b2 = rng.uniform(-bound2, bound2);
  return m;
}

double loss_and_gradient(const DetectorModel& model, std::span<const double> features,
                         std::span<const double> targets, Gradient* grad) {
  const std::size_t rows = targets.size();
  const std::size_t in = model.input_width();
  const std::size_t h = model.hidden;
  if (features.size() != rows * in) fail(ErrorKind::argument, "feature block has wrong size");
  if (rows == 0) fail(ErrorKind::argument, "empty batch");

  if (grad) {
    grad->w1.assign(model.w1.size(), 0.0);
    grad->b1.assign(h, 0.0);
    grad->w2.assign(h, 0.0);
    grad->b2 = 0.0;
  }
  const double scale = 1.0 / static_cast<double>(rows);
  std::vector<double> pre(h), act(h);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = features.data() + r * in;
    std::copy(model.b1.begin(), model.b1.end(), pre.begin());
    for (std::size_t i = 0; i < in; ++i) {
      const double* w = model.w1.data() + i * h;
      for (std::size_t j = 0; j < h; ++j) pre[j] += x[i] * w[j];
    }
    double z = model.b2;
    for (std::size_t j = 0; j < h; ++j) {
      act[j] = activate(model.activation, pre[j]);
      z += model.w2[j] * act[j];
    }
    total += bce_with_logit(z, targets[r]);
    if (!grad) continue;

    const double dz = (sigmoid(z) - targets[r]) * scale;
    grad->b2 += dz;
    for (std::size_t j = 0; j < h; ++j) {
      grad->w2[j] += dz * act[j];
      const double dpre = dz * model.w2[j] * activate_grad(model.activation, pre[j]);
      pre[j] = dpre;  // reuse as upstream gradient
      grad->b1[j] += dpre;
    }
    for (std::size_t i = 0; i < in; ++i) {
      double* g = grad->w1.data() + i * h;
      for (std::size_t j = 0; j < h; ++j) g[j] += x[i] * pre[j];
    }
  }
  return total * scale;
}

namespace {

class Adam {
 public:
  Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  // Parameter blocks are visited in a fixed order: w1, b1, w2, b2.
  void step(DetectorModel& model, const Gradient& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    std::size_t slot = 0;
    auto update = [&](double& p, double grad) {
      double& m = m_[slot];
      double& v = v_[slot];
      ++slot;
      m = kBeta1 * m + (1.0 - kBeta1) * grad;
      v = kBeta2 * v + (1.0 - kBeta2) * grad * grad;
      p -= lr_ * (m / c1) / (std::sqrt(v / c2) + kEps);
    };
    for (std::size_t i = 0; i < model.w1.size(); ++i) update(model.w1[i], g.w1[i]);
    for (std::size_t i = 0; i < model.b1.size(); ++i) update(model.b1[i], g.b1[i]);
    for (std::size_t i = 0; i < model.w2.size(); ++i) update(model.w2[i], g.w2[i]);
    update(model.b2, g.b2);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace

TrainResult train(DetectorModel model, std::span<const LabeledPair> pairs,
                  const EmbeddingMatrix& img_store, const EmbeddingMatrix& txt_store,
                  const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::head_only) {
    fail(ErrorKind::argument, "only head_only training is supported; backbone fine-tuning is not");
  }
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    fail(ErrorKind::argument, "learning rate must be finite and non-negative");
  }
  if (cfg.epochs < 1) fail(ErrorKind::argument, "epochs must be >= 1");
  if (cfg.batch_size < 1) fail(ErrorKind::argument, "batch size must be >= 1");
  if (pairs.empty()) fail(ErrorKind::argument, "no training pairs");
  if (img_store.dim() != model.dim || txt_store.dim() != model.dim) {
    fail(ErrorKind::argument, "store dimension does not match model dimension " +
                                  std::to_string(model.dim));
  }

  const std::size_t n = pairs.size();
  std::vector<std::size_t> img_rows(n), txt_rows(n);
  std::vector<double> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    txt_rows[i] = txt_store.index_of(pairs[i].caption_id);
    img_rows[i] = img_store.index_of(pairs[i].image_id);
    labels[i] = pairs[i].label == PairLabel::falsified ? 1.0 : 0.0;
  }

  const std::size_t width = model.input_width();
  Adam adam(model.parameter_count(), cfg.learning_rate);
  Rng rng(derive_seed(cfg.seed, "train/shuffle"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::vector<double> features, targets;
  Gradient grad;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t rows = std::min(cfg.batch_size, n - start);
      features.resize(rows * width);
      targets.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = order[start + r];
        fuse(img_store.row(img_rows[i]), txt_store.row(txt_rows[i]), model.fusion,
             std::span<double>(features.data() + r * width, width));
        targets[r] = labels[i];
      }
      const double loss = loss_and_gradient(model, features, targets, &grad);
      if (!std::isfinite(loss)) {
        fail(ErrorKind::divergence, "training loss became non-finite in epoch " + std::to_string(epoch));
      }
      epoch_total += loss * static_cast<double>(rows);
      adam.step(model, grad);
    }
    const double mean = epoch_total / static_cast<double>(n);
    if (!std::isfinite(mean)) {
      fail(ErrorKind::divergence, "training loss became non-finite in epoch " + std::to_string(epoch));
    }
    result.epoch_loss.push_back(mean);
  }
  for (double w : model.w1)
    if (!std::isfinite(w)) fail(ErrorKind::divergence, "non-finite weight after training");
  model.trained_epochs += cfg.epochs;
  result.model = std::move(model);
  return result;
}

double predict(const DetectorModel& model, std::span<const float> img, std::span<const float> txt) {
  if (img.size() != model.dim) fail(ErrorKind::argument, "vector dimension does not match model");
  const auto features = fuse(img, txt, model.fusion);
  return sigmoid(model.logit(features));
}

double predict(const DetectorModel& model, std::string_view caption_id, std::string_view image_id,
               const EmbeddingMatrix& img_store, const EmbeddingMatrix& txt_store) {
  return predict(model, img_store.lookup(image_id), txt_store.lookup(caption_id));
}

namespace {

using ojson = nlohmann::ordered_json;

ojson tensor(const std::vector<double>& values, std::vector<std::size_t> shape) {
  return ojson{{"shape", shape}, {"values", values}};
}

std::vector<double> read_tensor(const nlohmann::json& j, std::vector<std::size_t> expected,
                                const char* name) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape != expected) fail(ErrorKind::format, std::string("tensor '") + name + "' has wrong shape");
  auto values = j.at("values").get<std::vector<double>>();
  const std::size_t count = std::accumulate(expected.begin(), expected.end(), std::size_t{1},
                                            std::multiplies<>());
  if (values.size() != count) fail(ErrorKind::format, std::string("tensor '") + name + "' has wrong size");
  for (double v : values)
    if (!std::isfinite(v)) fail(ErrorKind::validation, std::string("non-finite weight in '") + name + "'");
  return values;
}

constexpr int kModelFormatVersion = 1;

}  // namespace

std::string model_to_json(const DetectorModel& m) {
  ojson j;
  j["format_version"] = kModelFormatVersion;
  j["fusion"] = to_string(m.fusion);
  j["activation"] = to_string(m.activation);
  j["d"] = m.dim;
  j["hidden_width"] = m.hidden;
  j["seed"] = m.seed;
  j["trained_epochs"] = m.trained_epochs;
  j["w1"] = tensor(m.w1, {m.input_width(), m.hidden});
  j["b1"] = tensor(m.b1, {m.hidden});
  j["w2"] = tensor(m.w2, {m.hidden, 1});
  j["b2"] = tensor({m.b2}, {1});
  return j.dump(1) + "\n";
}

DetectorModel model_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      fail(ErrorKind::format, "unsupported model format_version");
    }
    DetectorModel m;
    m.fusion = parse_fusion(j.at("fusion").get<std::string>());
    m.activation = parse_activation(j.value("activation", std::string("relu")));
    m.dim = j.at("d").get<std::size_t>();
    m.hidden = j.at("hidden_width").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.trained_epochs = j.at("trained_epochs").get<int>();
    if (m.dim < 1 || m.hidden < 1) fail(ErrorKind::format, "model has zero dimension");
    m.w1 = read_tensor(j.at("w1"), {m.input_width(), m.hidden}, "w1");
    m.b1 = read_tensor(j.at("b1"), {m.hidden}, "b1");
    m.w2 = read_tensor(j.at("w2"), {m.hidden, 1}, "w2");
    m.b2 = read_tensor(j.at("b2"), {1}, "b2")[0];
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("bad model file: ") + e.what());
  }
}

void save_model(const DetectorModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  out << model_to_json(model);
}

DetectorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return model_from_json(text);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace ooc
