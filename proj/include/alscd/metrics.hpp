#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "alscd/change_map.hpp"
#include "alscd/morphology.hpp"
#include "alscd/tensor.hpp"

namespace alscd {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Counts over cells where `evaluate` is nonzero (all cells when empty).
/// Any nonzero value counts as positive.
template <class P, class Q>
ConfusionCounts confusion(std::span<const P> pred, std::span<const Q> truth, std::span<const std::uint8_t> evaluate = {}) {
  require_shape(pred.size() == truth.size(), "confusion: pred has " + std::to_string(pred.size()) + " cells, truth " +
                                                 std::to_string(truth.size()));
  require_shape(evaluate.empty() || evaluate.size() == pred.size(), "confusion: evaluate mask size");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!evaluate.empty() && !evaluate[i]) continue;
    const bool p = pred[i] != P(0), t = truth[i] != Q(0);
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline ConfusionCounts confusion(const Mask& pred, const Mask& truth, const Mask* evaluate = nullptr) {
  require_shape(pred.same_shape(truth), "confusion: mask shapes differ");
  return confusion<std::uint8_t, std::uint8_t>(pred.data, truth.data,
                                               evaluate ? std::span<const std::uint8_t>(evaluate->data)
                                                        : std::span<const std::uint8_t>{});
}

/// TP / (TP + FP + FN); 1.0 when both masks are empty.
inline double iou(const ConfusionCounts& c) {
  const std::uint64_t d = c.tp + c.fp + c.fn;
  return d == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(d);
}

struct ClassScore {
  std::size_t predicted = 0, truth = 0, matched = 0;
  // empty conventions: no predictions gives precision 1, no truth gives recall 1
  double precision() const { return predicted ? static_cast<double>(matched) / static_cast<double>(predicted) : 1.0; }
  double recall() const { return truth ? static_cast<double>(matched) / static_cast<double>(truth) : 1.0; }
};

struct BlobScores {
  std::map<ChangeLabel, ClassScore> per_class;
  const ClassScore& operator[](ChangeLabel l) const { return per_class.at(l); }
};

/// Blob-level precision/recall per change class. Blobs are 8-connected
/// components of one class; a predicted and a truth blob match when their
/// cell IOU reaches the threshold. Matching is one-to-one, greedy by
/// descending IOU, ties by (pred, truth) discovery order.
inline BlobScores blob_pr(const ChangeMap& pred, const ChangeMap& truth, double iou_match_threshold = 0.5) {
  require_same_spec(pred.spec, truth.spec, "blob_pr");
  BlobScores out;
  for (ChangeLabel cls : kChangeClasses) {
    const std::uint8_t v = label_value(cls);
    const std::size_t W = pred.spec.width, H = pred.spec.height;
    const Components pc = connected_components(W, H, [&](std::size_t i) { return pred.label[i] == v; });
    const Components tc = connected_components(W, H, [&](std::size_t i) { return truth.label[i] == v; });
    std::map<std::pair<std::int32_t, std::int32_t>, std::size_t> inter;
    for (std::size_t i = 0; i < W * H; ++i)
      if (pc.label[i] && tc.label[i]) ++inter[{pc.label[i], tc.label[i]}];
    struct Cand {
      double iou;
      std::int32_t p, t;
    };
    std::vector<Cand> cands;
    for (const auto& [key, n] : inter) {
      const double a = static_cast<double>(pc.sizes[static_cast<std::size_t>(key.first - 1)]);
      const double b = static_cast<double>(tc.sizes[static_cast<std::size_t>(key.second - 1)]);
      const double u = static_cast<double>(n) / (a + b - static_cast<double>(n));
      if (u >= iou_match_threshold) cands.push_back({u, key.first, key.second});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.iou > y.iou; });
    std::vector<bool> pused(static_cast<std::size_t>(pc.count) + 1), tused(static_cast<std::size_t>(tc.count) + 1);
    ClassScore s;
    s.predicted = static_cast<std::size_t>(pc.count);
    s.truth = static_cast<std::size_t>(tc.count);
    for (const Cand& c : cands) {
      if (pused[static_cast<std::size_t>(c.p)] || tused[static_cast<std::size_t>(c.t)]) continue;
      pused[static_cast<std::size_t>(c.p)] = tused[static_cast<std::size_t>(c.t)] = true;
      ++s.matched;
    }
    out.per_class[cls] = s;
  }
  return out;
}

}  // namespace alscd
