#include "ckmerge/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ckmerge/errors.hpp"

namespace ckmerge {

namespace {

void check_metrics(std::span<const double> metrics, MetricObjective objective) {
    if (metrics.empty()) throw ValidationError("empty metric vector");
    bool any_positive = false;
    for (const double m : metrics) {
        if (!std::isfinite(m)) throw ValidationError("non-finite metric value");
        if (objective == MetricObjective::Min && m <= 0.0) {
            throw ValidationError("nonpositive Min-objective metric");
        }
        if (objective == MetricObjective::Max && m < 0.0) {
            throw ValidationError("negative Max-objective metric");
        }
        if (m > 0.0) any_positive = true;
    }
    if (objective == MetricObjective::Max && !any_positive) {
        throw ValidationError("degenerate Max metrics");
    }
}

/// Indices ordered best-to-worst. std::stable_sort plus a value-only
/// comparator yields the documented tie-break: equal metrics keep their
/// input order, so the earlier index ranks better.
std::vector<std::size_t> best_first_order(std::span<const double> metrics,
                                          MetricObjective objective) {
    std::vector<std::size_t> order(metrics.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (objective == MetricObjective::Min) {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return metrics[a] < metrics[b]; });
    } else {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return metrics[a] > metrics[b]; });
    }
    return order;
}

/// phi -> weights. The total is accumulated best-rank-first so that the
/// summation order is a function of the ranking alone: permuting the inputs
/// or dropping the rank multiplier (penalty 1) reproduces the identical
/// floating-point sum, which keeps the documented reduction and
/// equivariance identities bit-exact.
///
/// `log_phi` carries ln(phi) computed without forming phi itself; it is the
/// fallback for extreme factor choices whose phi overflow or underflow
/// double precision, where the weights are renormalized in log space around
/// the largest exponent.
std::vector<double> normalize_by_rank(std::span<const double> phi,
                                      std::span<const double> log_phi,
                                      std::span<const std::size_t> order) {
    double total = 0.0;
    for (const std::size_t idx : order) total += phi[idx];

    std::vector<double> weights(phi.size());
    if (total > 0.0 && std::isfinite(total)) {
        for (std::size_t i = 0; i < phi.size(); ++i) weights[i] = phi[i] / total;
        return weights;
    }

    double max_log = -std::numeric_limits<double>::infinity();
    for (const double lp : log_phi) max_log = std::max(max_log, lp);
    double shifted_total = 0.0;
    for (const std::size_t idx : order) shifted_total += std::exp(log_phi[idx] - max_log);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        weights[i] = std::exp(log_phi[i] - max_log) / shifted_total;
    }
    return weights;
}

}  // namespace

std::vector<std::size_t> rank_positions(std::span<const double> metrics,
                                        MetricObjective objective) {
    if (metrics.empty()) throw ValidationError("empty metric vector");
    for (const double m : metrics) {
        if (!std::isfinite(m)) throw ValidationError("non-finite metric value");
    }
    const std::vector<std::size_t> order = best_first_order(metrics, objective);
    std::vector<std::size_t> positions(metrics.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank) positions[order[rank]] = rank;
    return positions;
}

std::vector<double> basic_weights(std::span<const double> metrics, MetricObjective objective) {
    check_metrics(metrics, objective);
    std::vector<double> phi(metrics.size());
    std::vector<double> log_phi(metrics.size());
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        if (objective == MetricObjective::Min) {
            phi[i] = 1.0 / metrics[i];
            log_phi[i] = -std::log(metrics[i]);
        } else {
            phi[i] = metrics[i];
            log_phi[i] = std::log(metrics[i]);  // -inf for a zero metric: weight 0
        }
    }
    return normalize_by_rank(phi, log_phi, best_first_order(metrics, objective));
}

std::vector<double> penalized_weights(std::span<const double> metrics,
                                      const WeightScheme& scheme) {
    if (!(scheme.penalty_p > 0.0) || !std::isfinite(scheme.penalty_p)) {
        throw ValidationError("invalid penalty factor");
    }
    if (!(scheme.power_q > 1.0) || !std::isfinite(scheme.power_q)) {
        throw ValidationError("invalid power factor");
    }
    check_metrics(metrics, scheme.objective);

    const std::vector<std::size_t> order = best_first_order(metrics, scheme.objective);
    std::vector<std::size_t> positions(metrics.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank) positions[order[rank]] = rank;

    // phi = penalty^(power^rank) * base. pow(1.0, y) == 1.0 exactly, so a
    // penalty of 1 leaves base untouched and the basic weights fall out
    // bit-for-bit.
    const double log_penalty = std::log(scheme.penalty_p);
    std::vector<double> phi(metrics.size());
    std::vector<double> log_phi(metrics.size());
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        const double metric = metrics[i];
        const double base = scheme.objective == MetricObjective::Min ? 1.0 / metric : metric;
        const double log_base =
            scheme.objective == MetricObjective::Min ? -std::log(metric) : std::log(metric);
        const double exponent =
            std::pow(scheme.power_q, static_cast<double>(positions[i]));
        phi[i] = std::pow(scheme.penalty_p, exponent) * base;
        log_phi[i] = exponent * log_penalty + log_base;
    }
    return normalize_by_rank(phi, log_phi, order);
}

std::vector<double> uniform_weights(std::size_t n) {
    if (n == 0) throw ValidationError("uniform weights require at least one checkpoint");
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

}  // namespace ckmerge
