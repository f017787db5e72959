#include "ckmerge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ckmerge/errors.hpp"
#include "ckmerge/merge.hpp"

namespace ckmerge {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const char c : text) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

void require_aligned_with_base(std::span<const TensorMap> checkpoints, const TensorMap& base) {
    std::vector<TensorMap> all(checkpoints.begin(), checkpoints.end());
    all.push_back(base);
    const AlignmentReport report = validate_alignment(all);
    if (!report.aligned()) {
        const AlignmentIssue& first = report.mismatches.front();
        throw ValidationError("tensor alignment failed: '" + first.name + "' " + first.reason);
    }
    if (report.common_names.empty()) {
        throw ValidationError("no common tensors between checkpoints and base");
    }
}

/// Number of entries kept by the magnitude trim: the top ceil(density * n)
/// of n entries. density in (0, 1] keeps at least one entry per tensor.
std::size_t trim_keep_count(double density, std::size_t n) {
    return static_cast<std::size_t>(
        std::min(static_cast<double>(n), std::ceil(density * static_cast<double>(n))));
}

/// Zeroes all but the `keep` largest-magnitude entries. Magnitude ties are
/// broken toward the lower flat index so the result is deterministic.
void trim_to_top_magnitude(std::vector<double>& delta, std::size_t keep) {
    if (keep >= delta.size()) return;
    std::vector<std::size_t> order(delta.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(delta[a]) > std::fabs(delta[b]);
    });
    std::vector<double> trimmed(delta.size(), 0.0);
    for (std::size_t r = 0; r < keep; ++r) trimmed[order[r]] = delta[order[r]];
    delta = std::move(trimmed);
}

int sign_of(double v) noexcept { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

/// Shared core of the sign-election merges. `preprocess` mutates one
/// checkpoint's delta vector for one tensor before trimming (used for
/// drop-and-rescale); pass nullptr for the plain variant.
using DeltaPreprocess = void (*)(std::vector<double>&, const std::string&, std::size_t,
                                 const DareParams&);

TensorMap elect_and_merge(std::span<const TensorMap> checkpoints, const TensorMap& base,
                          const TiesParams& ties, DeltaPreprocess preprocess,
                          const DareParams& dare) {
    if (!(ties.density > 0.0 && ties.density <= 1.0)) {
        throw ValidationError("ties density must lie in (0, 1]");
    }
    if (checkpoints.size() < 2) {
        throw ValidationError("sign-election merge requires at least 2 checkpoints");
    }
    require_aligned_with_base(checkpoints, base);

    TensorMap out;
    for (const auto& [name, base_tensor] : base) {
        const std::size_t count = base_tensor.element_count();
        const std::size_t keep = trim_keep_count(ties.density, count);

        std::vector<std::vector<double>> deltas(checkpoints.size());
        for (std::size_t i = 0; i < checkpoints.size(); ++i) {
            const Tensor& t = checkpoints[i].at(name);
            deltas[i].resize(count);
            for (std::size_t j = 0; j < count; ++j) {
                deltas[i][j] = t.get(j) - base_tensor.get(j);
            }
            if (preprocess != nullptr) preprocess(deltas[i], name, i, dare);
            trim_to_top_magnitude(deltas[i], keep);
        }

        Tensor merged(base_tensor.dtype, base_tensor.shape);
        for (std::size_t j = 0; j < count; ++j) {
            double sum = 0.0;
            for (std::size_t i = 0; i < deltas.size(); ++i) sum += deltas[i][j];
            const int elected = sign_of(sum);

            double agreeing_total = 0.0;
            std::size_t agreeing_count = 0;
            if (elected != 0) {
                for (std::size_t i = 0; i < deltas.size(); ++i) {
                    if (sign_of(deltas[i][j]) == elected) {
                        agreeing_total += deltas[i][j];
                        ++agreeing_count;
                    }
                }
            }
            const double merged_delta =
                agreeing_count == 0 ? 0.0 : agreeing_total / static_cast<double>(agreeing_count);
            merged.set(j, base_tensor.get(j) + merged_delta);
        }
        out.emplace(name, std::move(merged));
    }
    return out;
}

void drop_and_rescale(std::vector<double>& delta, const std::string& name,
                      std::size_t checkpoint_index, const DareParams& dare) {
    // Dividing by (1 - drop_rate) keeps the preprocessed delta unbiased and
    // is an exact no-op at drop rate 0, which is what makes that case
    // reduce to the plain sign-election merge bit-for-bit.
    for (std::size_t j = 0; j < delta.size(); ++j) {
        const double u = dare_mask_uniform(dare.seed, checkpoint_index, name, j);
        if (u < dare.drop_rate) {
            delta[j] = 0.0;
        } else {
            delta[j] /= 1.0 - dare.drop_rate;
        }
    }
}

}  // namespace

std::string base_choice_name(BaseChoice choice) {
    return choice == BaseChoice::FirstCheckpoint ? "first" : "last";
}

BaseChoice base_choice_from_name(std::string_view name) {
    if (name == "first") return BaseChoice::FirstCheckpoint;
    if (name == "last") return BaseChoice::LastCheckpoint;
    throw ValidationError("unknown base choice '" + std::string(name) +
                          "' (expected 'first' or 'last')");
}

std::vector<TensorMap> task_vectors(std::span<const TensorMap> checkpoints,
                                    const TensorMap& base) {
    require_aligned_with_base(checkpoints, base);
    std::vector<TensorMap> out;
    out.reserve(checkpoints.size());
    for (const TensorMap& ckpt : checkpoints) {
        TensorMap delta_map;
        for (const auto& [name, base_tensor] : base) {
            const Tensor& t = ckpt.at(name);
            Tensor delta(base_tensor.dtype, base_tensor.shape);
            const std::size_t count = delta.element_count();
            for (std::size_t j = 0; j < count; ++j) {
                delta.set(j, t.get(j) - base_tensor.get(j));
            }
            delta_map.emplace(name, std::move(delta));
        }
        out.push_back(std::move(delta_map));
    }
    return out;
}

TensorMap ties_merge(std::span<const TensorMap> checkpoints, const TensorMap& base,
                     const TiesParams& params) {
    return elect_and_merge(checkpoints, base, params, nullptr, DareParams{});
}

TensorMap dare_ties_merge(std::span<const TensorMap> checkpoints, const TensorMap& base,
                          const TiesParams& ties, const DareParams& dare) {
    if (!(dare.drop_rate >= 0.0 && dare.drop_rate < 1.0)) {
        throw ValidationError("dare drop rate must lie in [0, 1)");
    }
    return elect_and_merge(checkpoints, base, ties, &drop_and_rescale, dare);
}

double dare_mask_uniform(std::uint64_t seed, std::size_t checkpoint_index,
                         std::string_view tensor_name, std::size_t flat_index) noexcept {
    std::uint64_t h = splitmix64(seed ^ fnv1a64(tensor_name));
    h = splitmix64(h ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(checkpoint_index) + 1)));
    h = splitmix64(h ^ static_cast<std::uint64_t>(flat_index));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

TensorMap slerp_merge(const TensorMap& a, const TensorMap& b, double t,
                      std::vector<std::string>* warnings) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ValidationError("slerp parameter t must lie in [0, 1]");
    }
    {
        const TensorMap pair[2] = {a, b};
        const AlignmentReport report = validate_alignment(pair);
        if (!report.aligned()) {
            const AlignmentIssue& first = report.mismatches.front();
            throw ValidationError("tensor alignment failed: '" + first.name + "' " +
                                  first.reason);
        }
    }
    if (t == 0.0) return a;
    if (t == 1.0) return b;

    TensorMap out;
    for (const auto& [name, ta] : a) {
        const Tensor& tb = b.at(name);
        const std::size_t count = ta.element_count();

        double dot = 0.0, norm_a_sq = 0.0, norm_b_sq = 0.0;
        for (std::size_t j = 0; j < count; ++j) {
            const double u = ta.get(j);
            const double v = tb.get(j);
            dot += u * v;
            norm_a_sq += u * u;
            norm_b_sq += v * v;
        }
        const double norm_a = std::sqrt(norm_a_sq);
        const double norm_b = std::sqrt(norm_b_sq);

        double coeff_a = 1.0 - t;  // linear-interpolation fallback coefficients
        double coeff_b = t;
        if (norm_a == 0.0 || norm_b == 0.0) {
            if (warnings != nullptr) {
                warnings->push_back("zero-norm tensor '" + name +
                                    "': falling back to linear interpolation");
            }
        } else {
            const double cosine = std::clamp(dot / (norm_a * norm_b), -1.0, 1.0);
            const double omega = std::acos(cosine);
            const double sin_omega = std::sin(omega);
            // Nearly parallel (or antiparallel) tensors have no well-defined
            // great circle; blend linearly instead.
            if (sin_omega >= 1e-6) {
                coeff_a = std::sin((1.0 - t) * omega) / sin_omega;
                coeff_b = std::sin(t * omega) / sin_omega;
            }
        }

        Tensor merged(ta.dtype, ta.shape);
        for (std::size_t j = 0; j < count; ++j) {
            merged.set(j, coeff_a * ta.get(j) + coeff_b * tb.get(j));
        }
        out.emplace(name, std::move(merged));
    }
    return out;
}

}  // namespace ckmerge
