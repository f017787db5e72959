#include "ckmerge/merge.hpp"

#include <set>
#include <string>

#include "ckmerge/errors.hpp"

namespace ckmerge {

AlignmentReport validate_alignment(std::span<const TensorMap> checkpoints) {
    if (checkpoints.empty()) {
        throw ValidationError("alignment requires at least one checkpoint");
    }

    std::set<std::string> all_names;
    for (const TensorMap& map : checkpoints) {
        for (const auto& [name, tensor] : map) all_names.insert(name);
    }

    AlignmentReport report;
    for (const std::string& name : all_names) {
        // Missing anywhere takes precedence, then shape, then dtype; one
        // issue per name keeps the report readable.
        const AlignmentIssue* issue = nullptr;
        AlignmentIssue scratch;
        for (std::size_t j = 0; j < checkpoints.size() && issue == nullptr; ++j) {
            if (checkpoints[j].find(name) == checkpoints[j].end()) {
                scratch = {name, "missing-in-checkpoint-" + std::to_string(j)};
                issue = &scratch;
            }
        }
        if (issue == nullptr) {
            const Tensor& reference = checkpoints.front().at(name);
            for (std::size_t j = 1; j < checkpoints.size() && issue == nullptr; ++j) {
                const Tensor& other = checkpoints[j].at(name);
                if (other.shape != reference.shape) {
                    scratch = {name, "shape-mismatch"};
                    issue = &scratch;
                } else if (other.dtype != reference.dtype) {
                    scratch = {name, "dtype-mismatch"};
                    issue = &scratch;
                }
            }
        }
        if (issue != nullptr) {
            report.mismatches.push_back(*issue);
        } else {
            report.common_names.push_back(name);
        }
    }
    return report;
}

TensorMap merge_linear(std::span<const TensorMap> checkpoints, std::span<const double> weights) {
    if (checkpoints.size() != weights.size()) {
        throw ValidationError("merge weight count " + std::to_string(weights.size()) +
                              " does not match checkpoint count " +
                              std::to_string(checkpoints.size()));
    }
    const AlignmentReport report = validate_alignment(checkpoints);
    if (!report.aligned()) {
        const AlignmentIssue& first = report.mismatches.front();
        throw ValidationError("tensor alignment failed: '" + first.name + "' " + first.reason);
    }

    // Zero-weight members are skipped entirely: they contribute nothing to
    // the sum, and skipping keeps one-hot weight vectors bit-exact (adding
    // 0.0 * x would still disturb signed zeros and propagate non-finite
    // values from members that were weighted out).
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] != 0.0) active.push_back(i);
    }

    TensorMap out;
    for (const std::string& name : report.common_names) {
        const Tensor& reference = checkpoints.front().at(name);
        Tensor merged(reference.dtype, reference.shape);
        const std::size_t count = merged.element_count();
        for (std::size_t j = 0; j < count; ++j) {
            double acc = 0.0;
            bool first = true;
            for (const std::size_t i : active) {
                const double term = weights[i] * checkpoints[i].at(name).get(j);
                acc = first ? term : acc + term;
                first = false;
            }
            merged.set(j, acc);
        }
        out.emplace(name, std::move(merged));
    }
    return out;
}

TensorMap pairwise_merge(const TensorMap& a, const TensorMap& b, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ValidationError("pairwise merge parameter lambda must lie in [0, 1]");
    }
    const TensorMap checkpoints[2] = {a, b};
    const double weights[2] = {lambda, 1.0 - lambda};
    return merge_linear(checkpoints, weights);
}

}  // namespace ckmerge
