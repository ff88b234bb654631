// Command-line front end over the C API.
//
//   ooc <command> [--config FILE] [--set key=value ...] [command flags]
//
// Settings are layered: built-in defaults, then config files in order, then
// OOC_SEED, then --set and command flags.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "ooc/ooc.h"

namespace {

struct Flag {
  const char* name;  // e.g. "--text-emb"
  const char* key;   // config key it sets
  const char* help;
};

// Flags shared by commands that read the corpus.
const std::vector<Flag> kCorpusFlags = {
    {"--manifest", "paths.manifest", "sample manifest (JSON lines)"},
    {"--text-emb", "paths.text_emb", "text embeddings (EMB1)"},
};

const std::vector<Flag> kStoreFlags = {
    {"--img-emb", "paths.img_emb", "image embeddings (EMB1)"},
};

const std::vector<std::pair<const char*, std::vector<Flag>>> kCommands = {
    {"synth",
     {{"--samples", "synth.samples", "number of samples"},
      {"--dim", "synth.dim", "embedding dimension"},
      {"--subtopics", "synth.subtopics", "planted sub-clusters per topic"},
      {"--out", "synth.out", "output directory"}}},
    {"mine",
     {{"--split", "mine.split", "manifest split to draw from"},
      {"--ratio-hard", "mine.ratio_hard", "fraction of falsified pairs mined as hard negatives"},
      {"--cross-topic", "mine.cross_topic", "number of extra cross-topic falsified pairs"},
      {"--out", "paths.pairs", "output pairs file"},
      {"--topic-scope", "topic_scope", "per_topic or joint"}}},
    {"build",
     {{"--split", "build.split", "manifest split to draw from"},
      {"--ratio-hard", "build.ratio_hard", "fraction of falsified pairs mined as hard negatives"},
      {"--cross-topic", "build.cross_topic", "number of extra cross-topic falsified pairs"},
      {"--out", "paths.eval_pairs", "output pairs file"},
      {"--topic-scope", "topic_scope", "per_topic or joint"}}},
    {"train",
     {{"--pairs", "paths.pairs", "training pairs"},
      {"--model", "paths.model", "output model file"},
      {"--fusion", "fusion", "concat, concat_dot or multiply"},
      {"--epochs", "train.epochs", "training epochs"},
      {"--lr", "train.learning_rate", "learning rate"},
      {"--batch", "train.batch_size", "minibatch size"},
      {"--hidden", "train.hidden_width", "hidden width (0 = embedding dimension)"},
      {"--activation", "train.activation", "relu or identity"},
      {"--max-pairs", "train.max_pairs", "train on a seeded subset of this size"},
      {"--topic-scope", "topic_scope", "per_topic or joint"},
      {"--reports", "paths.reports", "report directory"}}},
    {"evaluate",
     {{"--pairs", "paths.eval_pairs", "evaluation pairs"},
      {"--model", "paths.model", "model file"},
      {"--ocr", "paths.ocr", "OCR boxes (JSON lines)"},
      {"--labels", "paths.labels", "per-caption labels (JSON lines)"},
      {"--clusters", "paths.clusters", "cluster assignments (JSON lines)"},
      {"--breakouts", "evaluate.breakouts", "comma list: method,topic,topic_method,ocr,labels,cluster"},
      {"--zero-shot", "evaluate.zero_shot", "also score the zero-shot baseline (true/false)"},
      {"--topic-scope", "topic_scope", "per_topic or joint"},
      {"--reports", "paths.reports", "report directory"}}},
    {"cluster",
     {{"--pairs", "paths.pairs", "pairs file to tag within/cross cluster"},
      {"--out", "paths.clusters", "output assignments"},
      {"--k-climate", "clustering.k.climate", "clusters for climate"},
      {"--k-covid", "clustering.k.covid", "clusters for covid"},
      {"--k-military", "clustering.k.military", "clusters for military"},
      {"--reports", "paths.reports", "report directory"}}},
    {"report",
     {{"--inputs", "report.inputs", "comma list of metrics.json files"},
      {"--format", "report.format", "table or csv"}}},
};

bool uses_corpus(const std::string& cmd) { return cmd != "synth" && cmd != "report"; }
bool uses_images(const std::string& cmd) { return cmd == "train" || cmd == "evaluate"; }

void write_to(const char* text, size_t len, void* user) {
  std::fwrite(text, 1, len, static_cast<std::FILE*>(user));
}

void write_warn(const char* text, size_t len, void*) { std::fwrite(text, 1, len, stderr); }

int report(ooc_status st) {
  std::fprintf(stderr, "error: %s: %s\n", ooc_status_string(st), ooc_last_error());
  return ooc_exit_code(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Out-of-context image/caption toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ooc_version());

  struct Parsed {
    CLI::App* sub = nullptr;
    std::vector<std::string> configs;
    std::vector<std::string> sets;
    std::string seed, threads;
    std::vector<std::pair<const char*, std::string>> values;  // key, value
    std::vector<CLI::Option*> options;
  };
  std::vector<Parsed> parsed;
  parsed.reserve(kCommands.size());

  for (const auto& [name, flags] : kCommands) {
    auto& p = parsed.emplace_back();
    p.sub = app.add_subcommand(name);
    p.sub->add_option("--config", p.configs, "config file (repeatable; later files win)");
    p.sub->add_option("--set", p.sets, "override: key=value (repeatable)");
    p.sub->add_option("--seed", p.seed, "random seed");
    p.sub->add_option("--threads", p.threads, "worker threads");
    std::vector<Flag> all = flags;
    const std::string cmd = name;
    if (uses_corpus(cmd)) all.insert(all.begin(), kCorpusFlags.begin(), kCorpusFlags.end());
    if (uses_images(cmd)) all.insert(all.begin() + 2, kStoreFlags.begin(), kStoreFlags.end());
    p.values.reserve(all.size());
    for (const auto& f : all) {
      auto& slot = p.values.emplace_back(f.key, std::string());
      p.options.push_back(p.sub->add_option(f.name, slot.second, f.help));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors count as configuration errors.
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  for (auto& p : parsed) {
    if (!p.sub->parsed()) continue;
    ooc_config* cfg = nullptr;
    ooc_status st = ooc_config_create(&cfg);
    if (st != OOC_OK) return report(st);
    auto run = [&]() -> ooc_status {
      for (const auto& file : p.configs)
        if (auto s = ooc_config_load_file(cfg, file.c_str()); s != OOC_OK) return s;
      if (auto s = ooc_config_apply_env(cfg); s != OOC_OK) return s;
      for (const auto& kv : p.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
          std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
          return OOC_ERR_CONFIG;
        }
        if (auto s = ooc_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()); s != OOC_OK) return s;
      }
      if (!p.seed.empty()) ooc_config_set(cfg, "seed", p.seed.c_str());
      if (!p.threads.empty()) ooc_config_set(cfg, "threads", p.threads.c_str());
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        if (p.options[i]->count() > 0) ooc_config_set(cfg, p.values[i].first, p.values[i].second.c_str());
      }
      return ooc_run_command(cfg, p.sub->get_name().c_str(), write_to, write_warn, stdout);
    };
    st = run();
    ooc_config_destroy(cfg);
    if (st == OOC_ERR_CONFIG && *ooc_last_error() == '\0') return ooc_exit_code(st);
    if (st != OOC_OK) return report(st);
    return 0;
  }
  return 0;
}
