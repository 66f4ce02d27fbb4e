#include "tda/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tda/error.hpp"

namespace tda::stats {

namespace {

std::vector<bool> positive_mask(std::size_t n, std::span<const std::size_t> positives) {
  std::vector<bool> mask(n, false);
  for (std::size_t p : positives) {
    require(p < n, ErrorCode::invalid_argument,
            "positive id " + std::to_string(p) + " outside score range");
    require(!mask[p], ErrorCode::invalid_argument, "duplicate positive id " + std::to_string(p));
    mask[p] = true;
  }
  return mask;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::shape_mismatch, "spearman: length mismatch");
  require(a.size() >= 3, ErrorCode::invalid_argument, "spearman: need at least 3 entries");
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(std::isfinite(a[i]) && std::isfinite(b[i]), ErrorCode::numeric,
            "spearman: non-finite input");
  }
  require(!is_constant(a) && !is_constant(b), ErrorCode::numeric,
          "spearman: correlation undefined for a constant input");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<std::size_t> descending_order(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return order;
}

std::vector<std::size_t> topk_indices(std::span<const double> v, std::size_t k) {
  require(k >= 1 && k <= v.size(), ErrorCode::invalid_argument,
          "topk_indices: k must lie in [1, " + std::to_string(v.size()) + "]");
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto cmp = [&](std::size_t a, std::size_t b) {
    return v[a] > v[b] || (v[a] == v[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), cmp);
  order.resize(k);
  return order;
}

double auprc(std::span<const double> scores, std::span<const std::size_t> positives) {
  require(!positives.empty(), ErrorCode::invalid_argument, "auprc: positive set is empty");
  require(positives.size() < scores.size(), ErrorCode::invalid_argument,
          "auprc: need at least one negative");
  const auto mask = positive_mask(scores.size(), positives);
  const auto order = descending_order(scores);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (mask[order[r]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(positives.size());
}

std::vector<CurvePoint> pr_curve(std::span<const double> scores,
                                 std::span<const std::size_t> positives) {
  require(!positives.empty(), ErrorCode::invalid_argument, "pr_curve: positive set is empty");
  const auto mask = positive_mask(scores.size(), positives);
  const auto order = descending_order(scores);
  std::vector<CurvePoint> curve;
  curve.reserve(order.size());
  std::size_t hits = 0;
  const double total = static_cast<double>(positives.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    hits += mask[order[r]];
    curve.push_back({static_cast<double>(hits) / total,
                     static_cast<double>(hits) / static_cast<double>(r + 1)});
  }
  return curve;
}

std::vector<CurvePoint> detection_curve(std::span<const std::size_t> ranking,
                                        std::span<const std::size_t> positives) {
  const std::size_t n = ranking.size();
  require(n >= 1, ErrorCode::invalid_argument, "detection_curve: empty ranking");
  require(!positives.empty(), ErrorCode::invalid_argument, "detection_curve: positive set is empty");
  std::vector<bool> seen(n, false);
  for (std::size_t id : ranking) {
    require(id < n && !seen[id], ErrorCode::invalid_argument,
            "detection_curve: ranking is not a permutation of 0..n-1");
    seen[id] = true;
  }
  const auto mask = positive_mask(n, positives);
  std::vector<CurvePoint> curve;
  curve.reserve(n + 1);
  curve.push_back({0.0, 0.0});
  std::size_t found = 0;
  const double total = static_cast<double>(positives.size());
  for (std::size_t k = 0; k < n; ++k) {
    found += mask[ranking[k]];
    curve.push_back({static_cast<double>(k + 1) / static_cast<double>(n),
                     static_cast<double>(found) / total});
  }
  return curve;
}

double detection_auc(std::span<const std::size_t> ranking,
                     std::span<const std::size_t> positives) {
  const auto curve = detection_curve(ranking, positives);
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    area += 0.5 * (curve[k].x - curve[k - 1].x) * (curve[k].y + curve[k - 1].y);
  }
  return area;
}

}  // namespace tda::stats
