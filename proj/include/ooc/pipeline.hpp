#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ooc/corpus_analytics.hpp"
#include "ooc/embedding_store.hpp"
#include "ooc/fusion_detector.hpp"
#include "ooc/mismatch_factory.hpp"

namespace ooc {

/// Flat `key=value` configuration with dotted keys. Lines starting with '#'
/// are comments. Later assignments win.
class KeyValueConfig {
 public:
  void load_file(const std::filesystem::path& path);
  void parse(std::string_view text, std::string_view origin = "<config>");
  void set(std::string key, std::string value);
  std::optional<std::string> get(std::string_view key) const;
  bool has(std::string_view key) const { return get(key).has_value(); }
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

  /// OOC_SEED, when set, replaces `seed`.
  void apply_environment();

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

struct RunConfig {
  struct Paths {
    std::filesystem::path manifest, text_emb, img_emb, ocr, labels, clusters;
    std::filesystem::path pairs;       // training pairs (mine output, train input)
    std::filesystem::path eval_pairs;  // evaluation pairs (build output, evaluate input)
    std::filesystem::path model;
    std::filesystem::path reports = "reports";
  } paths;

  struct DatasetStage {
    Split split = Split::train;
    double ratio_hard = 0.75;
    std::size_t cross_topic = 0;
  };
  DatasetStage mine{Split::train, 0.75, 0};
  DatasetStage build{Split::dev, 0.5, 0};

  FusionMethod fusion = FusionMethod::multiply;
  Activation activation = Activation::relu;
  std::size_t hidden_width = 0;  // 0 -> embedding dimension
  TrainConfig train;
  std::size_t max_train_pairs = 0;  // 0 -> all; otherwise a seeded subset

  TopicScope topic_scope = TopicScope::joint;
  std::map<Topic, std::size_t> cluster_k = {
      {Topic::climate, 21}, {Topic::covid, 32}, {Topic::military, 23}};
  std::size_t cluster_words = 10;
  std::size_t cluster_name_words = 3;

  std::vector<std::string> breakouts = {"method", "topic", "topic_method"};
  bool zero_shot = true;

  std::size_t synth_samples = 1000;
  std::size_t synth_dim = 64;
  std::size_t synth_subtopics = 4;
  std::filesystem::path synth_out = "synth";

  std::vector<std::filesystem::path> report_inputs;
  std::string report_format = "table";

  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Converts key/value entries to a RunConfig; unknown keys or malformed
/// values raise a configuration error naming the key.
RunConfig resolve_config(const KeyValueConfig& kv);

/// All keys resolve_config understands, for help output.
std::vector<std::string> known_config_keys();

// ---- Synthetic corpus -------------------------------------------------------

struct SynthOptions {
  std::size_t samples = 1000;
  std::size_t dim = 64;
  std::size_t subtopics = 4;  // per topic
  std::uint64_t seed = 0;
  double subtopic_spread = 0.8;
  double detail_noise = 0.7;
  double image_noise = 0.25;
  double nuisance = 0.65;
  double train_fraction = 0.7;
  double dev_fraction = 0.15;
};

/// Planted corpus: three topics with `subtopics` text sub-clusters each.
/// Text rows are [semantic | text-only nuisance], image rows are
/// [semantic + noise | image-only nuisance], both unit-normalized.
struct SyntheticCorpus {
  std::vector<SampleRecord> samples;
  EmbeddingMatrix text;
  EmbeddingMatrix image;
  std::vector<OcrRecord> ocr;
  StringMap<std::string> relation_labels;
  StringMap<std::size_t> planted_subtopic;  // sample id -> global subtopic index
};

SyntheticCorpus generate_corpus(const SynthOptions& options);

// ---- Commands ---------------------------------------------------------------

using TextSink = std::function<void(std::string_view)>;

struct CommandIo {
  TextSink out;   // tables and results
  TextSink warn;  // warnings
};

void cmd_synth(const RunConfig& cfg, const CommandIo& io);
void cmd_mine(const RunConfig& cfg, const CommandIo& io);
void cmd_build(const RunConfig& cfg, const CommandIo& io);
void cmd_train(const RunConfig& cfg, const CommandIo& io);
void cmd_evaluate(const RunConfig& cfg, const CommandIo& io);
void cmd_cluster(const RunConfig& cfg, const CommandIo& io);
void cmd_report(const RunConfig& cfg, const CommandIo& io);

std::vector<std::string> command_names();

/// Dispatches by name. Errors propagate as exceptions.
void run_command(std::string_view name, const RunConfig& cfg, const CommandIo& io);

/// Expert model path for a topic: "<stem>.<topic><ext>".
std::filesystem::path expert_model_path(const std::filesystem::path& model, Topic topic);

}  // namespace ooc
