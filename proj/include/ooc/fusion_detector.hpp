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

enum class FusionMethod { concat, concat_dot, multiply };
enum class Activation { relu, identity };
enum class TrainMode { head_only, fine_tune };

std::string_view to_string(FusionMethod f);
std::string_view to_string(Activation a);
std::string_view to_string(TrainMode m);
FusionMethod parse_fusion(std::string_view s);
Activation parse_activation(std::string_view s);
TrainMode parse_train_mode(std::string_view s);

/// concat -> 2d, concat_dot -> 2d + 1, multiply -> d.
std::size_t fused_width(FusionMethod method, std::size_t dim);

void fuse(std::span<const float> img, std::span<const float> txt, FusionMethod method,
          std::span<double> out);
std::vector<double> fuse(std::span<const float> img, std::span<const float> txt,
                         FusionMethod method);

/// Dot product of unit vectors; higher means more likely pristine.
double zero_shot_score(std::span<const float> img, std::span<const float> txt);

/// Two-layer perceptron head: fused features -> hidden -> one logit.
///
/// `w1` is input_width x hidden (row-major), `w2` has one entry per hidden
/// unit. The head outputs the logit of "falsified".
struct DetectorModel {
  FusionMethod fusion = FusionMethod::multiply;
  Activation activation = Activation::relu;
  std::size_t dim = 0;
  std::size_t hidden = 0;
  std::uint64_t seed = 0;
  int trained_epochs = 0;
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;

  std::size_t input_width() const { return fused_width(fusion, dim); }
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + 1; }

  double logit(std::span<const double> features) const;

  friend bool operator==(const DetectorModel&, const DetectorModel&) = default;
};

DetectorModel init_model(std::size_t dim, FusionMethod fusion, std::size_t hidden,
                         std::uint64_t seed, Activation activation = Activation::relu);

struct TrainConfig {
  double learning_rate = 5e-5;
  int epochs = 16;
  std::size_t batch_size = 512;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::head_only;
};

/// Gradient with the same layout as a DetectorModel's parameters.
struct Gradient {
  std::vector<double> w1, b1, w2;
  double b2 = 0.0;
};

/// Mean binary cross-entropy of sigmoid(logit) against `targets` (1 =
/// falsified) over `rows` feature rows, plus its gradient when requested.
double loss_and_gradient(const DetectorModel& model, std::span<const double> features,
                         std::span<const double> targets, Gradient* grad);

struct TrainResult {
  DetectorModel model;
  std::vector<double> epoch_loss;  // mean loss per epoch
};

/// Adam over seeded-shuffled minibatches. Both stores must be unit-normalized.
TrainResult train(DetectorModel model, std::span<const LabeledPair> pairs,
                  const EmbeddingMatrix& img_store, const EmbeddingMatrix& txt_store,
                  const TrainConfig& cfg);

double sigmoid(double z);

/// Probability that the pair is falsified.
double predict(const DetectorModel& model, std::string_view caption_id, std::string_view image_id,
               const EmbeddingMatrix& img_store, const EmbeddingMatrix& txt_store);
double predict(const DetectorModel& model, std::span<const float> img, std::span<const float> txt);

std::string model_to_json(const DetectorModel& model);
DetectorModel model_from_json(std::string_view text);
void save_model(const DetectorModel& model, const std::filesystem::path& path);
DetectorModel load_model(const std::filesystem::path& path);

}  // namespace ooc
