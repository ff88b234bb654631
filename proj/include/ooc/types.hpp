#pragma once

#include <array>
#include <string>
#include <string_view>

namespace ooc {

enum class Topic { climate, covid, military };
enum class Split { train, dev, test };
enum class PairLabel { pristine, falsified };
enum class Method { none, random, hard, cross_topic };
enum class TopicScope { per_topic, joint };

inline constexpr std::array<Topic, 3> kAllTopics = {Topic::climate, Topic::covid,
                                                    Topic::military};

std::string_view to_string(Topic t);
std::string_view to_string(Split s);
std::string_view to_string(PairLabel l);
std::string_view to_string(Method m);
std::string_view to_string(TopicScope s);

// Parsers throw Error(ErrorKind::validation) on unknown names.
Topic parse_topic(std::string_view s);
Split parse_split(std::string_view s);
PairLabel parse_label(std::string_view s);
Method parse_method(std::string_view s);
TopicScope parse_topic_scope(std::string_view s);

}  // namespace ooc
