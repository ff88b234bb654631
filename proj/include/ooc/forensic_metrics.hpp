#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ooc/embedding_store.hpp"
#include "ooc/types.hpp"

namespace ooc {

// Falsified is the positive class throughout; a higher score means "more
// likely falsified".

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
  std::size_t fp = 0;  // pristine with score >= threshold
  std::size_t tp = 0;  // falsified with score >= threshold
};

/// Points ordered by descending threshold. The first point sits at a
/// sentinel threshold (max score + 1) with no detections; then one point per
/// distinct score.
struct RocCurve {
  std::vector<RocPoint> points;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

RocCurve roc(std::span<const double> scores, std::span<const PairLabel> labels);

struct EerPoint {
  double eer = 0.0;
  double threshold = 0.0;
  // Interpolated tpr (pD) and balanced accuracy at the crossing.
  double tpr = 0.0;
  double balanced_accuracy = 0.0;
  bool interpolated = false;
  // Max of |delta fpr| and |delta tpr| across the bracketing segment; 0 when
  // the crossing is realised by a curve point.
  double gap = 0.0;
};

/// Operating point where fpr equals the miss rate, with linear interpolation
/// between the two points bracketing the sign change of fpr - fnr.
EerPoint eer(const RocCurve& curve);

/// Max tpr over points with fpr <= far (step convention). 0 < far < 1.
double pd_at_far(const RocCurve& curve, double far);

struct MetricsSummary {
  double pd_at_far01 = 0.0;
  double pd_at_eer = 0.0;
  double acc_at_eer = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

MetricsSummary summarize(const RocCurve& curve);
MetricsSummary summarize(std::span<const double> scores, std::span<const PairLabel> labels);

struct GroupReport {
  std::size_t size = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::optional<MetricsSummary> summary;  // empty when a class is missing
};

using Breakout = std::map<std::string, GroupReport>;

/// Per-group metrics; `groups[i]` names the group of prediction i and an
/// empty name leaves the prediction out. Groups missing a class are kept
/// with an empty summary.
Breakout breakout(std::span<const double> scores, std::span<const PairLabel> labels,
                  std::span<const std::string> groups);

struct ScoredPair {
  std::string caption_id;
  std::string image_id;
  double score = 0.0;
  PairLabel label = PairLabel::pristine;
};

/// Groups by caption id; predictions whose caption is not in `grouping` are
/// left out.
Breakout breakout(std::span<const ScoredPair> predictions, const StringMap<std::string>& grouping);

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path);

}  // namespace ooc
