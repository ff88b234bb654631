#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "ooc/errors.hpp"
#include "ooc/pipeline.hpp"

namespace ooc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

void KeyValueConfig::parse(std::string_view text, std::string_view origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::config, std::string(origin) + ":" + std::to_string(lineno) +
                                  ": expected key=value, got '" + t + "'");
    }
    auto key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) fail(ErrorKind::config, std::string(origin) + ":" + std::to_string(lineno) + ": empty key");
    set(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
}

void KeyValueConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::config, "cannot open config file '" + path.string() + "'");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  KeyValueConfig local;
  local.parse(text, path.string());
  // Relative paths in a config file are relative to the file itself.
  const auto base = path.parent_path();
  for (auto [key, value] : local.entries()) {
    if (key.starts_with("paths.") && !value.empty() && std::filesystem::path(value).is_relative()) {
      value = (base / value).lexically_normal().string();
    }
    set(key, value);
  }
}

void KeyValueConfig::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

std::optional<std::string> KeyValueConfig::get(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void KeyValueConfig::apply_environment() {
  if (const char* s = std::getenv("OOC_SEED"); s && *s) set("seed", s);
}

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  fail(ErrorKind::config, "config key '" + std::string(key) + "': expected " + std::string(expected) +
                              ", got '" + std::string(value) + "'");
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a non-negative integer");
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  std::string s(value);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) bad_value(key, value, "a real number");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    auto item = trim(value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename Fn>
auto enum_value(std::string_view key, std::string_view value, Fn&& parse) {
  try {
    return parse(value);
  } catch (const Error&) {
    bad_value(key, value, "a known name");
  }
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto path = [&](const char* key, std::filesystem::path RunConfig::Paths::*member) {
      t[key] = [member](RunConfig& c, std::string_view, std::string_view v) { c.paths.*member = std::string(v); };
    };
    path("paths.manifest", &RunConfig::Paths::manifest);
    path("paths.text_emb", &RunConfig::Paths::text_emb);
    path("paths.img_emb", &RunConfig::Paths::img_emb);
    path("paths.ocr", &RunConfig::Paths::ocr);
    path("paths.labels", &RunConfig::Paths::labels);
    path("paths.clusters", &RunConfig::Paths::clusters);
    path("paths.pairs", &RunConfig::Paths::pairs);
    path("paths.eval_pairs", &RunConfig::Paths::eval_pairs);
    path("paths.model", &RunConfig::Paths::model);
    path("paths.reports", &RunConfig::Paths::reports);

    auto stage = [&](const std::string& prefix, RunConfig::DatasetStage RunConfig::*member) {
      t[prefix + ".split"] = [member](RunConfig& c, std::string_view k, std::string_view v) {
        (c.*member).split = enum_value(k, v, parse_split);
      };
      t[prefix + ".ratio_hard"] = [member](RunConfig& c, std::string_view k, std::string_view v) {
        const double r = parse_real(k, v);
        if (r < 0.0 || r > 1.0) bad_value(k, v, "a fraction in [0, 1]");
        (c.*member).ratio_hard = r;
      };
      t[prefix + ".cross_topic"] = [member](RunConfig& c, std::string_view k, std::string_view v) {
        (c.*member).cross_topic = parse_unsigned<std::size_t>(k, v);
      };
    };
    stage("mine", &RunConfig::mine);
    stage("build", &RunConfig::build);

    t["fusion"] = [](RunConfig& c, std::string_view k, std::string_view v) { c.fusion = enum_value(k, v, parse_fusion); };
    t["train.activation"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.activation = enum_value(k, v, parse_activation);
    };
    t["train.hidden_width"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.hidden_width = parse_unsigned<std::size_t>(k, v);
    };
    t["train.learning_rate"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      const double lr = parse_real(k, v);
      if (lr < 0.0) bad_value(k, v, "a non-negative learning rate");
      c.train.learning_rate = lr;
    };
    t["train.epochs"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      const int e = parse_unsigned<int>(k, v);
      if (e < 1) bad_value(k, v, "at least 1 epoch");
      c.train.epochs = e;
    };
    t["train.batch_size"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      const auto b = parse_unsigned<std::size_t>(k, v);
      if (b < 1) bad_value(k, v, "a positive batch size");
      c.train.batch_size = b;
    };
    t["train.mode"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.train.mode = enum_value(k, v, parse_train_mode);
    };
    t["train.max_pairs"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.max_train_pairs = parse_unsigned<std::size_t>(k, v);
    };
    t["topic_scope"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.topic_scope = enum_value(k, v, parse_topic_scope);
    };
    for (Topic topic : kAllTopics) {
      t["clustering.k." + std::string(to_string(topic))] = [topic](RunConfig& c, std::string_view k, std::string_view v) {
        c.cluster_k[topic] = parse_unsigned<std::size_t>(k, v);
      };
    }
    t["clustering.words"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.cluster_words = parse_unsigned<std::size_t>(k, v);
    };
    t["clustering.name_words"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.cluster_name_words = parse_unsigned<std::size_t>(k, v);
    };
    t["evaluate.breakouts"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      static const std::set<std::string, std::less<>> known = {"method", "topic", "topic_method",
                                                               "ocr", "labels", "cluster"};
      c.breakouts = split_list(v);
      for (const auto& b : c.breakouts)
        if (!known.contains(b)) bad_value(k, b, "one of method,topic,topic_method,ocr,labels,cluster");
    };
    t["evaluate.zero_shot"] = [](RunConfig& c, std::string_view k, std::string_view v) { c.zero_shot = parse_bool(k, v); };
    t["synth.samples"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.synth_samples = parse_unsigned<std::size_t>(k, v);
    };
    t["synth.dim"] = [](RunConfig& c, std::string_view k, std::string_view v) { c.synth_dim = parse_unsigned<std::size_t>(k, v); };
    t["synth.subtopics"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.synth_subtopics = parse_unsigned<std::size_t>(k, v);
    };
    t["synth.out"] = [](RunConfig& c, std::string_view, std::string_view v) { c.synth_out = std::string(v); };
    t["report.inputs"] = [](RunConfig& c, std::string_view, std::string_view v) {
      c.report_inputs.clear();
      for (auto& item : split_list(v)) c.report_inputs.emplace_back(item);
    };
    t["report.format"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      if (v != "table" && v != "csv") bad_value(k, v, "table or csv");
      c.report_format = std::string(v);
    };
    t["seed"] = [](RunConfig& c, std::string_view k, std::string_view v) { c.seed = parse_unsigned<std::uint64_t>(k, v); };
    t["threads"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.threads = std::max(1u, parse_unsigned<unsigned>(k, v));
    };
    return t;
  }();
  return table;
}

}  // namespace

RunConfig resolve_config(const KeyValueConfig& kv) {
  RunConfig cfg;
  const auto& table = setters();
  for (const auto& [key, value] : kv.entries()) {
    auto it = table.find(key);
    if (it == table.end()) fail(ErrorKind::config, "unknown config key '" + key + "'");
    it->second(cfg, key, value);
  }
  cfg.train.seed = cfg.seed;
  return cfg;
}

std::vector<std::string> known_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

}  // namespace ooc
