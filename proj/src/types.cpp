#include "ooc/types.hpp"

#include "ooc/errors.hpp"

namespace ooc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::format: return "format error";
    case ErrorKind::alignment: return "alignment error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::missing_id: return "missing-id error";
    case ErrorKind::degenerate: return "degenerate-input error";
    case ErrorKind::argument: return "argument error";
    case ErrorKind::insufficient: return "insufficient-candidates error";
    case ErrorKind::divergence: return "divergence error";
    case ErrorKind::undefined_metric: return "undefined-metric error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::io: return "i/o error";
  }
  return "error";
}

std::string_view to_string(Topic t) {
  switch (t) {
    case Topic::climate: return "climate";
    case Topic::covid: return "covid";
    case Topic::military: return "military";
  }
  return "?";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

std::string_view to_string(PairLabel l) {
  return l == PairLabel::pristine ? "pristine" : "falsified";
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::none: return "none";
    case Method::random: return "random";
    case Method::hard: return "hard";
    case Method::cross_topic: return "cross_topic";
  }
  return "?";
}

std::string_view to_string(TopicScope s) {
  return s == TopicScope::joint ? "joint" : "per_topic";
}

namespace {

[[noreturn]] void unknown(std::string_view what, std::string_view value) {
  fail(ErrorKind::validation,
       "unknown " + std::string(what) + " '" + std::string(value) + "'");
}

}  // namespace

Topic parse_topic(std::string_view s) {
  for (Topic t : kAllTopics)
    if (s == to_string(t)) return t;
  unknown("topic", s);
}

Split parse_split(std::string_view s) {
  for (Split v : {Split::train, Split::dev, Split::test})
    if (s == to_string(v)) return v;
  unknown("split", s);
}

PairLabel parse_label(std::string_view s) {
  if (s == "pristine") return PairLabel::pristine;
  if (s == "falsified") return PairLabel::falsified;
  unknown("label", s);
}

Method parse_method(std::string_view s) {
  for (Method m : {Method::none, Method::random, Method::hard, Method::cross_topic})
    if (s == to_string(m)) return m;
  unknown("method", s);
}

TopicScope parse_topic_scope(std::string_view s) {
  if (s == "joint") return TopicScope::joint;
  if (s == "per_topic") return TopicScope::per_topic;
  unknown("topic scope", s);
}

}  // namespace ooc
