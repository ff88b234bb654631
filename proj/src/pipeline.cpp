#include "ooc/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ooc/errors.hpp"
#include "ooc/forensic_metrics.hpp"
#include "ooc/random.hpp"

namespace ooc {

using nlohmann::ordered_json;

namespace {

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

const std::filesystem::path& require(const std::filesystem::path& p, std::string_view key,
                                     std::string_view command) {
  if (p.empty()) {
    fail(ErrorKind::config, std::string(command) + " requires " + std::string(key));
  }
  return p;
}

const std::filesystem::path& require_input(const std::filesystem::path& p, std::string_view key,
                                           std::string_view command) {
  require(p, key, command);
  if (!std::filesystem::exists(p)) {
    fail(ErrorKind::config, std::string(key) + " '" + p.string() + "' does not exist");
  }
  return p;
}

void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

std::ofstream open_out(const std::filesystem::path& p) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write '" + p.string() + "'");
  return out;
}

std::filesystem::path report_path(const RunConfig& cfg, std::string_view name) {
  return cfg.paths.reports / std::string(name);
}

EmbeddingMatrix load_store(const std::filesystem::path& p) { return normalize(load_matrix(p)); }

StringMap<const SampleRecord*> index_samples(const std::vector<SampleRecord>& samples) {
  StringMap<const SampleRecord*> idx;
  for (const auto& s : samples) idx.emplace(s.id, &s);
  return idx;
}

const SampleRecord& sample_of(const StringMap<const SampleRecord*>& idx, const std::string& id) {
  auto it = idx.find(id);
  if (it == idx.end()) fail(ErrorKind::missing_id, "sample '" + id + "' is not in the manifest");
  return *it->second;
}

std::vector<SampleRecord> split_samples(const std::vector<SampleRecord>& all, Split split) {
  std::vector<SampleRecord> out;
  std::copy_if(all.begin(), all.end(), std::back_inserter(out),
               [split](const SampleRecord& s) { return s.split == split; });
  return out;
}

// ---- mine / build -----------------------------------------------------------

void print_counts(const DatasetCounts& c, const CommandIo& io) {
  io.out(format("%-12s %10s %10s %10s\n", "topic", "pristine", "random", "hard"));
  TopicCounts total;
  for (const auto& [topic, row] : c.by_topic) {
    io.out(format("%-12s %10zu %10zu %10zu\n", std::string(to_string(topic)).c_str(), row.pristine,
                  row.random, row.hard));
    total.pristine += row.pristine;
    total.random += row.random;
    total.hard += row.hard;
  }
  if (c.cross.cross_topic > 0 || c.cross.pristine > 0) {
    io.out(format("%-12s %10zu %10zu %10s\n", "cross_topic", c.cross.pristine, c.cross.cross_topic, "-"));
  }
  const std::size_t pristine = total.pristine + c.cross.pristine;
  const std::size_t falsified = total.random + total.hard + c.cross.cross_topic;
  io.out(format("%-12s %10zu %10zu %10zu   (pristine %zu, falsified %zu)\n", "total", pristine,
                total.random + c.cross.cross_topic, total.hard, pristine, falsified));
}

void make_dataset(const RunConfig& cfg, const RunConfig::DatasetStage& stage,
                  const std::filesystem::path& out, std::string_view command, std::string_view out_key,
                  const CommandIo& io) {
  const auto manifest = load_manifest(require_input(cfg.paths.manifest, "paths.manifest", command));
  const auto texts = load_store(require_input(cfg.paths.text_emb, "paths.text_emb", command));
  require(out, out_key, command);

  const auto samples = split_samples(manifest, stage.split);
  if (samples.empty()) {
    fail(ErrorKind::validation, "manifest has no samples in split '" + std::string(to_string(stage.split)) + "'");
  }
  BuildOptions opts;
  opts.ratio_hard = stage.ratio_hard;
  opts.cross_topic_count = stage.cross_topic;
  opts.seed = cfg.seed;
  opts.topic_scope = cfg.topic_scope;
  opts.threads = cfg.threads;
  const auto dataset = build_dataset(samples, texts, opts);
  ensure_parent(out);
  save_pairs(dataset.pairs, out);

  io.out(format("%s: split=%s ratio_hard=%.4g cross_topic=%zu seed=%llu -> %s\n",
                std::string(command).c_str(), std::string(to_string(stage.split)).c_str(), stage.ratio_hard,
                stage.cross_topic, static_cast<unsigned long long>(cfg.seed), out.string().c_str()));
  print_counts(count_pairs(dataset.pairs, samples), io);
}

// ---- train ------------------------------------------------------------------

std::vector<LabeledPair> subset_pairs(std::vector<LabeledPair> pairs, std::size_t max, std::uint64_t seed) {
  if (max == 0 || max >= pairs.size()) return pairs;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng(derive_seed(seed, "train/subset")).shuffle(std::span(order));
  order.resize(max);
  std::sort(order.begin(), order.end());
  std::vector<LabeledPair> out;
  out.reserve(max);
  for (std::size_t i : order) out.push_back(std::move(pairs[i]));
  return out;
}

}  // namespace

std::filesystem::path expert_model_path(const std::filesystem::path& model, Topic topic) {
  auto p = model;
  const auto ext = model.extension();
  p.replace_extension();
  p += "." + std::string(to_string(topic));
  p += ext;
  return p;
}

namespace {

struct ScopedPairs {
  std::string scope;
  std::optional<Topic> topic;
  std::vector<LabeledPair> pairs;
};

std::vector<ScopedPairs> partition_by_scope(const RunConfig& cfg, const std::vector<LabeledPair>& pairs,
                                            std::string_view command) {
  if (cfg.topic_scope == TopicScope::joint) return {{"joint", std::nullopt, pairs}};
  const auto manifest = load_manifest(require_input(cfg.paths.manifest, "paths.manifest", command));
  const auto idx = index_samples(manifest);
  std::map<Topic, std::vector<LabeledPair>> by_topic;
  for (const auto& p : pairs) by_topic[sample_of(idx, p.caption_id).topic].push_back(p);
  std::vector<ScopedPairs> out;
  for (auto& [topic, list] : by_topic) out.push_back({std::string(to_string(topic)), topic, std::move(list)});
  return out;
}

}  // namespace

void cmd_synth(const RunConfig& cfg, const CommandIo& io) {
  SynthOptions o;
  o.samples = cfg.synth_samples;
  o.dim = cfg.synth_dim;
  o.subtopics = cfg.synth_subtopics;
  o.seed = cfg.seed;
  const auto corpus = generate_corpus(o);
  const auto& dir = cfg.synth_out;
  std::filesystem::create_directories(dir);
  save_manifest(corpus.samples, dir / "manifest.jsonl");
  save_matrix(corpus.text, dir / "text.emb");
  save_matrix(corpus.image, dir / "image.emb");
  save_ocr(corpus.ocr, dir / "ocr.jsonl");
  {
    auto out = open_out(dir / "relations.jsonl");
    for (const auto& s : corpus.samples)
      out << nlohmann::json{{"id", s.id}, {"label", corpus.relation_labels.at(s.id)}}.dump() << '\n';
  }
  {
    auto out = open_out(dir / "planted.jsonl");
    for (const auto& s : corpus.samples)
      out << nlohmann::json{{"id", s.id}, {"cluster", corpus.planted_subtopic.at(s.id)}}.dump() << '\n';
  }
  // Paths are relative to the config file. Training settings suit the small
  // synthetic corpus rather than the full-scale defaults.
  auto conf = open_out(dir / "ooc.conf");
  conf << "# generated by `ooc synth`\n"
       << "paths.manifest=manifest.jsonl\n"
       << "paths.text_emb=text.emb\n"
       << "paths.img_emb=image.emb\n"
       << "paths.ocr=ocr.jsonl\n"
       << "paths.labels=relations.jsonl\n"
       << "paths.clusters=clusters.jsonl\n"
       << "paths.pairs=train_pairs.jsonl\n"
       << "paths.eval_pairs=dev_pairs.jsonl\n"
       << "paths.model=model.json\n"
       << "paths.reports=reports\n"
       << "seed=" << cfg.seed << "\n"
       << "mine.ratio_hard=0.75\n"
       << "build.ratio_hard=0.5\n"
       << "fusion=multiply\n"
       << "train.learning_rate=0.003\n"
       << "train.batch_size=32\n"
       << "train.epochs=16\n";
  for (Topic t : kAllTopics) conf << "clustering.k." << to_string(t) << "=" << o.subtopics << "\n";

  io.out(format("synth: %zu samples, d=%zu, %zu subtopics per topic -> %s\n", o.samples, o.dim,
                o.subtopics, dir.string().c_str()));
}

void cmd_mine(const RunConfig& cfg, const CommandIo& io) {
  make_dataset(cfg, cfg.mine, cfg.paths.pairs, "mine", "paths.pairs", io);
}

void cmd_build(const RunConfig& cfg, const CommandIo& io) {
  make_dataset(cfg, cfg.build, cfg.paths.eval_pairs, "build", "paths.eval_pairs", io);
}

void cmd_train(const RunConfig& cfg, const CommandIo& io) {
  auto pairs = load_pairs(require_input(cfg.paths.pairs, "paths.pairs", "train"));
  const auto txt = load_store(require_input(cfg.paths.text_emb, "paths.text_emb", "train"));
  const auto img = load_store(require_input(cfg.paths.img_emb, "paths.img_emb", "train"));
  require(cfg.paths.model, "paths.model", "train");
  if (txt.dim() != img.dim()) fail(ErrorKind::validation, "text and image embeddings differ in dimension");
  pairs = subset_pairs(std::move(pairs), cfg.max_train_pairs, cfg.seed);

  const std::size_t hidden = cfg.hidden_width == 0 ? txt.dim() : cfg.hidden_width;
  auto trace = open_out(report_path(cfg, "loss_trace.csv"));
  trace.precision(17);
  trace << "scope,epoch,loss\n";
  for (const auto& scoped : partition_by_scope(cfg, pairs, "train")) {
    auto model = init_model(txt.dim(), cfg.fusion, hidden, cfg.seed, cfg.activation);
    TrainResult result;
    try {
      result = train(std::move(model), scoped.pairs, img, txt, cfg.train);
    } catch (const Error& e) {
      fail(e.kind(), "training scope '" + scoped.scope + "': " + e.what());
    }
    const auto path = scoped.topic ? expert_model_path(cfg.paths.model, *scoped.topic) : cfg.paths.model;
    ensure_parent(path);
    save_model(result.model, path);
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
      trace << scoped.scope << ',' << e + 1 << ',' << result.epoch_loss[e] << '\n';
    io.out(format("train[%s]: %zu pairs, %d epochs, loss %.6f -> %.6f, %zu params -> %s\n",
                  scoped.scope.c_str(), scoped.pairs.size(), cfg.train.epochs, result.epoch_loss.front(),
                  result.epoch_loss.back(), result.model.parameter_count(), path.string().c_str()));
  }
}

namespace {

// ---- evaluate ---------------------------------------------------------------

ordered_json summary_json(const MetricsSummary& s) {
  return ordered_json{{"pd_at_far01", s.pd_at_far01}, {"pd_at_eer", s.pd_at_eer},
                      {"acc_at_eer", s.acc_at_eer},   {"eer", s.eer},
                      {"eer_threshold", s.eer_threshold}, {"n_pos", s.n_pos},
                      {"n_neg", s.n_neg}};
}

struct Scorer {
  std::string name;
  std::vector<double> scores;
};

// Group label per prediction for each requested breakout family.
struct Grouping {
  std::string family;
  std::vector<std::string> labels;
};

std::vector<Grouping> make_groupings(const RunConfig& cfg, const std::vector<LabeledPair>& pairs) {
  const auto wants = [&](std::string_view b) {
    return std::find(cfg.breakouts.begin(), cfg.breakouts.end(), b) != cfg.breakouts.end();
  };
  const bool need_manifest = wants("topic") || wants("topic_method") || wants("ocr") || wants("cluster");
  std::vector<SampleRecord> manifest;
  StringMap<const SampleRecord*> idx;
  if (need_manifest) {
    if (cfg.paths.manifest.empty()) {
      fail(ErrorKind::config, "topic/ocr/cluster breakouts require paths.manifest");
    }
    manifest = load_manifest(require_input(cfg.paths.manifest, "paths.manifest", "evaluate"));
    idx = index_samples(manifest);
  }

  // Method of each caption's first falsified pair; its pristine pair joins
  // that method's group.
  StringMap<Method> caption_method;
  for (const auto& p : pairs)
    if (p.label == PairLabel::falsified) caption_method.emplace(p.caption_id, p.method);
  auto method_of = [&](const LabeledPair& p) -> std::string {
    if (p.label == PairLabel::falsified) return std::string(to_string(p.method));
    auto it = caption_method.find(p.caption_id);
    return it == caption_method.end() ? std::string() : std::string(to_string(it->second));
  };

  std::vector<Grouping> out;
  const std::size_t n = pairs.size();
  if (wants("method")) {
    Grouping g{"method", {}};
    for (const auto& p : pairs) {
      auto m = method_of(p);
      g.labels.push_back(m.empty() ? m : "method=" + m);
    }
    out.push_back(std::move(g));
  }
  if (wants("topic")) {
    Grouping g{"topic", {}};
    for (const auto& p : pairs)
      g.labels.push_back("topic=" + std::string(to_string(sample_of(idx, p.caption_id).topic)));
    out.push_back(std::move(g));
  }
  if (wants("topic_method")) {
    Grouping g{"topic_method", {}};
    for (const auto& p : pairs) {
      const auto m = method_of(p);
      g.labels.push_back(m.empty() ? m
                                   : "topic=" + std::string(to_string(sample_of(idx, p.caption_id).topic)) +
                                         ",method=" + m);
    }
    out.push_back(std::move(g));
  }
  if (wants("ocr")) {
    if (cfg.paths.ocr.empty()) fail(ErrorKind::config, "the ocr breakout requires paths.ocr");
    StringMap<double> coverage;
    auto csv = open_out(report_path(cfg, "ocr_coverage.csv"));
    csv.precision(17);
    csv << "image_id,coverage,bucket\n";
    for (const auto& rec : load_ocr(require_input(cfg.paths.ocr, "paths.ocr", "evaluate"))) {
      const double c = ocr_coverage(rec);
      coverage.emplace(rec.image_id, c);
      csv << rec.image_id << ',' << c << ',' << to_string(bucket(c)) << '\n';
    }
    Grouping g{"ocr", {}};
    for (const auto& p : pairs) {
      // Coverage of the image actually shown with the caption.
      auto it = coverage.find(sample_of(idx, p.image_id).image_id);
      g.labels.push_back(it == coverage.end() ? std::string()
                                              : "ocr=" + std::string(bucket_label(bucket(it->second))));
    }
    out.push_back(std::move(g));
  }
  if (wants("labels")) {
    if (cfg.paths.labels.empty()) fail(ErrorKind::config, "the labels breakout requires paths.labels");
    const auto labels = load_labels(require_input(cfg.paths.labels, "paths.labels", "evaluate"));
    Grouping g{"labels", {}};
    for (const auto& p : pairs) {
      auto it = labels.find(p.caption_id);
      g.labels.push_back(it == labels.end() ? std::string() : "relation=" + it->second);
    }
    out.push_back(std::move(g));
  }
  if (wants("cluster")) {
    if (cfg.paths.clusters.empty()) fail(ErrorKind::config, "the cluster breakout requires paths.clusters");
    StringMap<std::size_t> assignments;
    {
      std::ifstream in(require_input(cfg.paths.clusters, "paths.clusters", "evaluate"));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        assignments.emplace(j.at("id").get<std::string>(), j.at("cluster").get<std::size_t>());
      }
    }
    // Hard falsified pairs and the pristine pairs of the same captions.
    std::vector<LabeledPair> hard;
    std::vector<std::size_t> hard_index;
    for (std::size_t i = 0; i < n; ++i) {
      if (pairs[i].method == Method::hard) {
        hard.push_back(pairs[i]);
        hard_index.push_back(i);
      }
    }
    const auto tags = tag_cross_cluster(hard, assignments);
    StringMap<ClusterTag> caption_tag;
    std::vector<std::string> labels(n);
    for (std::size_t h = 0; h < hard.size(); ++h) {
      caption_tag.emplace(hard[h].caption_id, tags[h]);
      labels[hard_index[h]] = std::string(to_string(tags[h]));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (pairs[i].label != PairLabel::pristine) continue;
      auto it = caption_tag.find(pairs[i].caption_id);
      if (it != caption_tag.end()) labels[i] = std::string(to_string(it->second));
    }
    Grouping g{"cluster", {}}, gt{"topic_cluster", {}};
    for (std::size_t i = 0; i < n; ++i) {
      g.labels.push_back(labels[i].empty() ? std::string() : "cluster=" + labels[i]);
      gt.labels.push_back(labels[i].empty() ? std::string()
                                            : "topic=" + std::string(to_string(sample_of(idx, pairs[i].caption_id).topic)) +
                                                  ",cluster=" + labels[i]);
    }
    out.push_back(std::move(g));
    out.push_back(std::move(gt));
  }
  return out;
}

void print_metrics_header(const CommandIo& io) {
  io.out(format("%-10s %-34s %12s %10s %10s %7s %7s\n", "scorer", "group", "pD@0.1FAR", "pD@EER",
                "Acc@EER", "n_pos", "n_neg"));
}

void print_metrics_row(const CommandIo& io, const std::string& scorer, const std::string& group,
                       const MetricsSummary& s) {
  io.out(format("%-10s %-34s %12.4f %10.4f %10.4f %7zu %7zu\n", scorer.c_str(), group.c_str(), s.pd_at_far01,
                s.pd_at_eer, s.acc_at_eer, s.n_pos, s.n_neg));
}

void write_predictions(const std::filesystem::path& path, const std::vector<LabeledPair>& pairs,
                       const std::vector<double>& scores) {
  auto out = open_out(path);
  out.precision(17);
  out << "caption_id,image_id,score,label\n";
  for (std::size_t i = 0; i < pairs.size(); ++i)
    out << pairs[i].caption_id << ',' << pairs[i].image_id << ',' << scores[i] << ','
        << to_string(pairs[i].label) << '\n';
}

}  // namespace

void cmd_evaluate(const RunConfig& cfg, const CommandIo& io) {
  const auto pairs = load_pairs(require_input(cfg.paths.eval_pairs, "paths.eval_pairs", "evaluate"));
  const auto txt = load_store(require_input(cfg.paths.text_emb, "paths.text_emb", "evaluate"));
  const auto img = load_store(require_input(cfg.paths.img_emb, "paths.img_emb", "evaluate"));
  require(cfg.paths.model, "paths.model", "evaluate");
  if (pairs.empty()) fail(ErrorKind::validation, "no evaluation pairs");

  std::vector<Scorer> scorers;
  {
    Scorer det{"detector", std::vector<double>(pairs.size())};
    if (cfg.topic_scope == TopicScope::joint) {
      const auto model = load_model(require_input(cfg.paths.model, "paths.model", "evaluate"));
      for (std::size_t i = 0; i < pairs.size(); ++i)
        det.scores[i] = predict(model, pairs[i].caption_id, pairs[i].image_id, img, txt);
    } else {
      const auto manifest = load_manifest(require_input(cfg.paths.manifest, "paths.manifest", "evaluate"));
      const auto idx = index_samples(manifest);
      std::map<Topic, DetectorModel> experts;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Topic t = sample_of(idx, pairs[i].caption_id).topic;
        auto it = experts.find(t);
        if (it == experts.end()) {
          const auto path = expert_model_path(cfg.paths.model, t);
          it = experts.emplace(t, load_model(require_input(path, "expert model", "evaluate"))).first;
        }
        det.scores[i] = predict(it->second, pairs[i].caption_id, pairs[i].image_id, img, txt);
      }
    }
    scorers.push_back(std::move(det));
  }
  if (cfg.zero_shot) {
    Scorer zs{"zero_shot", std::vector<double>(pairs.size())};
    for (std::size_t i = 0; i < pairs.size(); ++i)
      zs.scores[i] = -zero_shot_score(img.lookup(pairs[i].image_id), txt.lookup(pairs[i].caption_id));
    scorers.push_back(std::move(zs));
  }

  std::vector<PairLabel> labels;
  for (const auto& p : pairs) labels.push_back(p.label);
  const auto groupings = make_groupings(cfg, pairs);

  ordered_json report = ordered_json::object();
  ordered_json skipped = ordered_json::array();
  auto csv = open_out(report_path(cfg, "metrics.csv"));
  csv.precision(17);
  csv << "scorer,group,pd_at_far01,pd_at_eer,acc_at_eer,eer,n_pos,n_neg\n";
  print_metrics_header(io);
  for (const auto& scorer : scorers) {
    ordered_json groups = ordered_json::object();
    auto emit = [&](const std::string& group, const MetricsSummary& s) {
      groups[group] = summary_json(s);
      csv << scorer.name << ',' << group << ',' << s.pd_at_far01 << ',' << s.pd_at_eer << ',' << s.acc_at_eer
          << ',' << s.eer << ',' << s.n_pos << ',' << s.n_neg << '\n';
      print_metrics_row(io, scorer.name, group, s);
    };
    const auto curve = roc(scorer.scores, labels);
    emit("all", summarize(curve));
    write_roc_csv(curve, report_path(cfg, scorer.name == "detector" ? "roc.csv" : "roc_" + scorer.name + ".csv"));
    for (const auto& g : groupings) {
      for (const auto& [name, rep] : breakout(scorer.scores, labels, g.labels)) {
        if (rep.summary) {
          emit(name, *rep.summary);
        } else {
          skipped.push_back({{"scorer", scorer.name}, {"group", name}, {"n_pos", rep.n_pos}, {"n_neg", rep.n_neg}});
          io.warn(format("warning: %s group '%s' skipped (n_pos=%zu, n_neg=%zu)\n", scorer.name.c_str(),
                         name.c_str(), rep.n_pos, rep.n_neg));
        }
      }
    }
    report[scorer.name] = std::move(groups);
  }
  report["skipped"] = std::move(skipped);
  open_out(report_path(cfg, "metrics.json")) << report.dump(2) << '\n';
  write_predictions(report_path(cfg, "predictions.csv"), pairs, scorers.front().scores);
  if (scorers.size() > 1) write_predictions(report_path(cfg, "predictions_zero_shot.csv"), pairs, scorers[1].scores);
}

void cmd_cluster(const RunConfig& cfg, const CommandIo& io) {
  const auto manifest = load_manifest(require_input(cfg.paths.manifest, "paths.manifest", "cluster"));
  const auto texts = load_store(require_input(cfg.paths.text_emb, "paths.text_emb", "cluster"));
  require(cfg.paths.clusters, "paths.clusters", "cluster");

  std::map<Topic, std::vector<const SampleRecord*>> by_topic;
  for (const auto& s : manifest) by_topic[s.topic].push_back(&s);

  StringMap<std::size_t> assignment;
  ordered_json summary = ordered_json::array();
  std::size_t offset = 0;
  io.out(format("%-8s %-10s %6s  %s\n", "cluster", "topic", "size", "name"));
  for (const auto& [topic, members] : by_topic) {
    std::vector<std::string> ids;
    for (const auto* s : members) ids.push_back(s->id);
    const std::size_t k = cfg.cluster_k.at(topic);
    if (k > ids.size()) {
      fail(ErrorKind::argument, "clustering.k." + std::string(to_string(topic)) + "=" + std::to_string(k) +
                                    " exceeds the " + std::to_string(ids.size()) + " samples in that topic");
    }
    auto model = cluster_texts(texts.select(ids), k, derive_seed(cfg.seed, "cluster/" + std::string(to_string(topic))));
    std::vector<std::vector<std::string>> docs(k);
    for (std::size_t i = 0; i < members.size(); ++i) docs[model.assignments[i]].push_back(members[i]->text);
    model.top_words = cluster_top_words(docs, cfg.cluster_words);
    const auto sizes = model.sizes();
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t global = offset + c;
      if (model.top_words[c].empty()) {
        io.warn(format("warning: cluster %zu has no scorable words\n", global));
      }
      const auto name = cluster_name(global, model.top_words[c], cfg.cluster_name_words);
      ordered_json words = ordered_json::array();
      for (const auto& w : model.top_words[c]) words.push_back({{"word", w.word}, {"score", w.score}});
      summary.push_back({{"cluster", global}, {"topic", to_string(topic)}, {"name", name},
                         {"size", sizes[c]}, {"top_words", std::move(words)}});
      io.out(format("%-8zu %-10s %6zu  %s\n", global, std::string(to_string(topic)).c_str(), sizes[c], name.c_str()));
    }
    for (std::size_t i = 0; i < members.size(); ++i) assignment.emplace(ids[i], offset + model.assignments[i]);
    offset += k;
  }

  {
    auto out = open_out(cfg.paths.clusters);
    for (const auto& s : manifest)
      out << nlohmann::json{{"id", s.id}, {"cluster", assignment.at(s.id)}}.dump() << '\n';
  }
  open_out(report_path(cfg, "cluster_summary.json")) << summary.dump(2) << '\n';

  if (!cfg.paths.pairs.empty() && std::filesystem::exists(cfg.paths.pairs)) {
    const auto pairs = load_pairs(cfg.paths.pairs);
    const auto tags = tag_cross_cluster(pairs, assignment);
    {
      auto out = open_out(report_path(cfg, "pairs_tagged.jsonl"));
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        out << nlohmann::ordered_json{{"caption_id", pairs[i].caption_id}, {"image_id", pairs[i].image_id},
                                      {"label", to_string(pairs[i].label)}, {"method", to_string(pairs[i].method)},
                                      {"cluster_tag", to_string(tags[i])}}
                   .dump()
            << '\n';
      }
    }
    const auto rows = cross_cluster_stats(pairs, tags, manifest);
    ordered_json stats = ordered_json::array();
    io.out(format("\n%-10s %-12s %9s %18s %16s %16s\n", "topic", "sample_type", "total", "% of topic total",
                  "# cross_cluster", "% cross_cluster"));
    for (const auto& r : rows) {
      stats.push_back({{"topic", to_string(r.topic)}, {"sample_type", r.sample_type}, {"total", r.total},
                       {"pct_of_topic", r.pct_of_topic}, {"n_cross", r.n_cross}, {"pct_cross", r.pct_cross}});
      io.out(format("%-10s %-12s %9zu %18.2f %16zu %16.2f\n", std::string(to_string(r.topic)).c_str(),
                    r.sample_type.c_str(), r.total, r.pct_of_topic, r.n_cross, r.pct_cross));
    }
    open_out(report_path(cfg, "cross_cluster.json")) << stats.dump(2) << '\n';
  }
}

void cmd_report(const RunConfig& cfg, const CommandIo& io) {
  if (cfg.report_inputs.empty()) fail(ErrorKind::config, "report requires report.inputs");
  const bool csv = cfg.report_format == "csv";
  if (csv) {
    io.out("input,scorer,group,pd_at_far01,pd_at_eer,acc_at_eer,n_pos,n_neg\n");
  } else {
    io.out(format("%-24s ", "input"));
    print_metrics_header(io);
  }
  for (const auto& path : cfg.report_inputs) {
    std::ifstream in(require_input(path, "report.inputs", "report"));
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::format, path.string() + ": " + e.what());
    }
    for (const auto& [scorer, groups] : j.items()) {
      if (scorer == "skipped" || !groups.is_object()) continue;
      for (const auto& [group, m] : groups.items()) {
        MetricsSummary s;
        s.pd_at_far01 = m.at("pd_at_far01").get<double>();
        s.pd_at_eer = m.at("pd_at_eer").get<double>();
        s.acc_at_eer = m.at("acc_at_eer").get<double>();
        s.n_pos = m.at("n_pos").get<std::size_t>();
        s.n_neg = m.at("n_neg").get<std::size_t>();
        if (csv) {
          io.out(format("%s,%s,%s,%.6f,%.6f,%.6f,%zu,%zu\n", path.string().c_str(), scorer.c_str(), group.c_str(),
                        s.pd_at_far01, s.pd_at_eer, s.acc_at_eer, s.n_pos, s.n_neg));
        } else {
          io.out(format("%-24s ", path.filename().string().c_str()));
          print_metrics_row(io, scorer, group, s);
        }
      }
    }
  }
}

std::vector<std::string> command_names() {
  return {"synth", "mine", "build", "train", "evaluate", "cluster", "report"};
}

void run_command(std::string_view name, const RunConfig& cfg, const CommandIo& io) {
  if (name == "synth") return cmd_synth(cfg, io);
  if (name == "mine") return cmd_mine(cfg, io);
  if (name == "build") return cmd_build(cfg, io);
  if (name == "train") return cmd_train(cfg, io);
  if (name == "evaluate") return cmd_evaluate(cfg, io);
  if (name == "cluster") return cmd_cluster(cfg, io);
  if (name == "report") return cmd_report(cfg, io);
  fail(ErrorKind::config, "unknown command '" + std::string(name) + "'");
}

}  // namespace ooc
