#include "ooc/forensic_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>

#include "ooc/errors.hpp"

namespace ooc {

RocCurve roc(std::span<const double> scores, std::span<const PairLabel> labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::argument, "scores and labels differ in length");
  RocCurve c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) fail(ErrorKind::argument, "non-finite score at index " + std::to_string(i));
    (labels[i] == PairLabel::falsified ? c.n_pos : c.n_neg) += 1;
  }
  if (c.n_pos == 0 || c.n_neg == 0) {
    fail(ErrorKind::undefined_metric, "ROC needs both pristine and falsified samples (got " +
                                          std::to_string(c.n_pos) + " falsified, " +
                                          std::to_string(c.n_neg) + " pristine)");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double np = static_cast<double>(c.n_pos);
  const double nn = static_cast<double>(c.n_neg);
  c.points.push_back({scores[order.front()] + 1.0, 0.0, 0.0, 0, 0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    for (; k < order.size() && scores[order[k]] == s; ++k) {
      (labels[order[k]] == PairLabel::falsified ? tp : fp) += 1;
    }
    c.points.push_back({s, static_cast<double>(fp) / nn, static_cast<double>(tp) / np, fp, tp});
  }
  return c;
}

namespace {

void check_curve(const RocCurve& c) {
  if (c.points.size() < 2 || c.n_pos == 0 || c.n_neg == 0) {
    fail(ErrorKind::undefined_metric, "invalid ROC curve");
  }
}

// Signed comparison of fpr against fnr = 1 - tpr in exact integer arithmetic.
int crossing_sign(const RocPoint& p, std::size_t n_pos, std::size_t n_neg) {
  const auto lhs = static_cast<unsigned __int128>(p.fp) * n_pos;
  const auto rhs = static_cast<unsigned __int128>(n_pos - p.tp) * n_neg;
  return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

double balanced_accuracy(const RocPoint& p, std::size_t n_pos, std::size_t n_neg) {
  return (static_cast<double>(p.tp) / static_cast<double>(n_pos) +
          static_cast<double>(n_neg - p.fp) / static_cast<double>(n_neg)) /
         2.0;
}

}  // namespace

EerPoint eer(const RocCurve& c) {
  check_curve(c);
  std::size_t i = 1;
  while (i < c.points.size() && crossing_sign(c.points[i], c.n_pos, c.n_neg) < 0) ++i;
  if (i == c.points.size()) fail(ErrorKind::undefined_metric, "ROC curve does not reach (1, 1)");

  const RocPoint& hi = c.points[i];
  EerPoint e;
  if (crossing_sign(hi, c.n_pos, c.n_neg) == 0) {
    e.eer = hi.fpr;
    e.threshold = hi.threshold;
    e.tpr = hi.tpr;
    e.balanced_accuracy = balanced_accuracy(hi, c.n_pos, c.n_neg);
    return e;
  }
  const RocPoint& lo = c.points[i - 1];
  const double f_lo = lo.fpr - (1.0 - lo.tpr);  // < 0
  const double f_hi = hi.fpr - (1.0 - hi.tpr);  // > 0
  const double t = -f_lo / (f_hi - f_lo);
  auto lerp = [t](double a, double b) { return a + t * (b - a); };
  e.eer = lerp(lo.fpr, hi.fpr);
  e.threshold = lerp(lo.threshold, hi.threshold);
  e.tpr = lerp(lo.tpr, hi.tpr);
  e.balanced_accuracy = lerp(balanced_accuracy(lo, c.n_pos, c.n_neg),
                             balanced_accuracy(hi, c.n_pos, c.n_neg));
  e.interpolated = true;
  e.gap = std::max(std::abs(hi.fpr - lo.fpr), std::abs(hi.tpr - lo.tpr));
  return e;
}

double pd_at_far(const RocCurve& c, double far) {
  check_curve(c);
  if (!(far > 0.0 && far < 1.0)) fail(ErrorKind::argument, "false alarm rate must be in (0, 1)");
  double best = 0.0;
  for (const auto& p : c.points)
    if (p.fpr <= far) best = std::max(best, p.tpr);
  return best;
}

MetricsSummary summarize(const RocCurve& c) {
  const EerPoint e = eer(c);
  MetricsSummary s;
  s.pd_at_far01 = pd_at_far(c, 0.1);
  s.pd_at_eer = e.tpr;
  s.acc_at_eer = e.balanced_accuracy;
  s.eer = e.eer;
  s.eer_threshold = e.threshold;
  s.n_pos = c.n_pos;
  s.n_neg = c.n_neg;
  return s;
}

MetricsSummary summarize(std::span<const double> scores, std::span<const PairLabel> labels) {
  return summarize(roc(scores, labels));
}

Breakout breakout(std::span<const double> scores, std::span<const PairLabel> labels,
                  std::span<const std::string> groups) {
  if (scores.empty()) fail(ErrorKind::argument, "no predictions to break out");
  if (scores.size() != labels.size() || scores.size() != groups.size()) {
    fail(ErrorKind::argument, "scores, labels and groups differ in length");
  }
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (!groups[i].empty()) members[groups[i]].push_back(i);

  Breakout out;
  std::vector<double> s;
  std::vector<PairLabel> l;
  for (const auto& [name, idx] : members) {
    s.clear();
    l.clear();
    GroupReport g;
    g.size = idx.size();
    for (std::size_t i : idx) {
      s.push_back(scores[i]);
      l.push_back(labels[i]);
      (labels[i] == PairLabel::falsified ? g.n_pos : g.n_neg) += 1;
    }
    if (g.n_pos > 0 && g.n_neg > 0) g.summary = summarize(s, l);
    out.emplace(name, g);
  }
  return out;
}

Breakout breakout(std::span<const ScoredPair> predictions, const StringMap<std::string>& grouping) {
  if (predictions.empty()) fail(ErrorKind::argument, "no predictions to break out");
  std::vector<double> scores;
  std::vector<PairLabel> labels;
  std::vector<std::string> groups;
  for (const auto& p : predictions) {
    auto it = grouping.find(p.caption_id);
    scores.push_back(p.score);
    labels.push_back(p.label);
    groups.push_back(it == grouping.end() ? std::string() : it->second);
  }
  return breakout(scores, labels, groups);
}

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  out.precision(17);
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) out << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
}

}  // namespace ooc
