#pragma once

#include <span>
#include <string>
#include <vector>

#include "ckmerge/tensor.hpp"

namespace ckmerge {

/// One alignment discrepancy discovered across a checkpoint list.
/// `reason` is one of "missing-in-checkpoint-<j>", "shape-mismatch",
/// "dtype-mismatch".
struct AlignmentIssue {
    std::string name;
    std::string reason;

    bool operator==(const AlignmentIssue&) const = default;
};

/// Result of aligning several checkpoints: the tensor names every
/// checkpoint shares with identical shape and dtype, and everything else.
struct AlignmentReport {
    std::vector<std::string> common_names;  // sorted
    std::vector<AlignmentIssue> mismatches;

    [[nodiscard]] bool aligned() const noexcept { return mismatches.empty(); }
};

/// Report-only: enumerates the common tensor names across all checkpoints
/// and every discrepancy. Throws ValidationError only when called with an
/// empty checkpoint list.
[[nodiscard]] AlignmentReport validate_alignment(std::span<const TensorMap> checkpoints);

/// Mixing kernel shared by the uniform soup and all metrics-weighted
/// merges: out[name][j] = sum_i weights[i] * checkpoints[i][name][j].
/// Elements accumulate in double and round once to the tensors' dtype.
/// Zero-weight members contribute nothing, so a one-hot weight vector
/// returns that member bit-exactly. Requires |checkpoints| == |weights|
/// and full alignment; violations throw ValidationError naming the
/// offending tensor.
[[nodiscard]] TensorMap merge_linear(std::span<const TensorMap> checkpoints,
                                     std::span<const double> weights);

/// Two-model blend lambda * a + (1 - lambda) * b; lambda must lie in
/// [0, 1]. lambda 1 returns `a` exactly and lambda 0 returns `b` exactly.
[[nodiscard]] TensorMap pairwise_merge(const TensorMap& a, const TensorMap& b, double lambda);

}  // namespace ckmerge
