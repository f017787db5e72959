#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ckmerge {

/// Whether lower metric values (training loss) or higher metric values
/// (elapsed training steps) earn larger merge weights.
enum class MetricObjective { Min, Max };

/// A metrics-weighted recipe: the objective plus the two factors shaping the
/// rank-dependent multiplier penalty^(power^rank).
///   - penalty_p > 0. Values below 1 decay weights by rank; 1 disables the
///     multiplier (reducing to the basic formula); values above 1 invert the
///     decay so the best rank receives the smallest multiplier.
///   - power_q > 1 controls how steeply the multiplier changes between
///     consecutive ranks.
struct WeightScheme {
    MetricObjective objective = MetricObjective::Min;
    double penalty_p = 1.0;
    double power_q = 2.0;
};

/// Zero-based rank of each metric, 0 = best (lowest for Min, highest for
/// Max), n-1 = worst. Ties are broken by input index: the earlier entry
/// ranks better. Throws ValidationError on empty or non-finite input.
[[nodiscard]] std::vector<std::size_t> rank_positions(std::span<const double> metrics,
                                                      MetricObjective objective);

/// Basic metric-proportional weights, normalized to sum 1:
/// phi = 1/metric for Min, phi = metric for Max.
/// Errors: empty input; Min with a value <= 0 ("nonpositive Min-objective
/// metric"); Max with all zeros ("degenerate Max metrics") or any negative
/// value.
[[nodiscard]] std::vector<double> basic_weights(std::span<const double> metrics,
                                                MetricObjective objective);

/// Rank-penalized weights, normalized to sum 1:
/// phi = penalty^(power^rank) * (1/metric for Min | metric for Max).
/// With penalty_p == 1 the output is bit-for-bit identical to
/// basic_weights. Additional error: penalty_p <= 0 ("invalid penalty
/// factor").
[[nodiscard]] std::vector<double> penalized_weights(std::span<const double> metrics,
                                                    const WeightScheme& scheme);

/// n entries of 1/n. Throws ValidationError when n == 0.
[[nodiscard]] std::vector<double> uniform_weights(std::size_t n);

}  // namespace ckmerge
