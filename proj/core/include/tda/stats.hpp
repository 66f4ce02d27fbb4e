#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tda::stats {

/// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

/// Spearman rank correlation: Pearson correlation of average-tie ranks.
/// Throws on length < 3, unequal lengths, or a constant input.
double spearman(std::span<const double> a, std::span<const double> b);

/// True when every entry equals the first (Spearman is undefined).
bool is_constant(std::span<const double> v);

/// Indices sorted by value descending, ties by ascending index.
std::vector<std::size_t> descending_order(std::span<const double> v);

/// The k largest entries in descending_order.
std::vector<std::size_t> topk_indices(std::span<const double> v, std::size_t k);

/// Average precision: mean over positives of precision at the rank where the
/// positive appears, ranking by descending score with ties broken by index.
/// Requires 1 <= |positives| < scores.size().
double auprc(std::span<const double> scores, std::span<const std::size_t> positives);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

/// Precision-recall points, one per rank position (recall, precision).
std::vector<CurvePoint> pr_curve(std::span<const double> scores,
                                 std::span<const std::size_t> positives);

/// Cumulative detection curve for inspecting ids in `ranking` order:
/// n+1 points (k/n, found_k/|positives|) for k = 0..n.
std::vector<CurvePoint> detection_curve(std::span<const std::size_t> ranking,
                                        std::span<const std::size_t> positives);

/// Trapezoid area under detection_curve. Perfect ranking gives 1 - pi/2 and
/// the reversed perfect ranking pi/2, where pi = |positives| / n.
double detection_auc(std::span<const std::size_t> ranking,
                     std::span<const std::size_t> positives);

}  // namespace tda::stats
