#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ckmerge/tensor.hpp"

namespace ckmerge {

/// Which end of the training run supplies the base model for
/// delta-space methods (and the fixed endpoint for spherical blends).
enum class BaseChoice { FirstCheckpoint, LastCheckpoint };

[[nodiscard]] std::string base_choice_name(BaseChoice choice);
[[nodiscard]] BaseChoice base_choice_from_name(std::string_view name);

/// Sign-election merge parameters: `density` is the fraction of
/// largest-magnitude delta entries kept per checkpoint per tensor,
/// in (0, 1].
struct TiesParams {
    double density = 0.5;
};

/// Drop-and-rescale preprocessing parameters: each delta entry is zeroed
/// independently with probability `drop_rate` in [0, 1) and survivors are
/// scaled by 1/(1-drop_rate); `seed` makes the mask reproducible across
/// machines.
struct DareParams {
    double drop_rate = 0.5;
    std::uint64_t seed = 0;
};

/// Per-checkpoint parameter deltas: out[i][name] = checkpoints[i][name] -
/// base[name]. Requires full alignment with the base.
[[nodiscard]] std::vector<TensorMap> task_vectors(std::span<const TensorMap> checkpoints,
                                                  const TensorMap& base);

/// Trim / elect-sign / disjoint-mean merge over deltas from `base`:
/// per tensor each checkpoint keeps its top density-fraction of delta
/// entries by absolute value; per position the elected sign is the sign of
/// the kept-delta sum (0 on exact cancellation); the merged delta is the
/// mean of kept deltas matching the elected sign, or 0 if none survive.
/// Output = base + merged delta. Requires >= 2 checkpoints.
[[nodiscard]] TensorMap ties_merge(std::span<const TensorMap> checkpoints, const TensorMap& base,
                                   const TiesParams& params);

/// Drop-and-rescale preprocessing applied to every delta, then the
/// trim/elect/mean merge above. A drop rate of 0 reproduces ties_merge
/// bit-for-bit. The mask is derived deterministically from (seed,
/// checkpoint index, tensor name, flat element index).
[[nodiscard]] TensorMap dare_ties_merge(std::span<const TensorMap> checkpoints,
                                        const TensorMap& base, const TiesParams& ties,
                                        const DareParams& dare);

/// The uniform variate in [0, 1) that decides whether one delta entry is
/// dropped (dropped iff variate < drop_rate). Exposed so the mask's
/// distribution and determinism can be tested directly.
[[nodiscard]] double dare_mask_uniform(std::uint64_t seed, std::size_t checkpoint_index,
                                       std::string_view tensor_name,
                                       std::size_t flat_index) noexcept;

/// Spherical linear interpolation between two aligned models, per tensor
/// over the flattened vectors: with omega the angle between u and v, the
/// result is sin((1-t)*omega)/sin(omega) * u + sin(t*omega)/sin(omega) * v.
/// Near-parallel tensors (sin omega < 1e-6) and zero-norm tensors fall
/// back to linear interpolation; the zero-norm case appends a warning to
/// `warnings` when provided. t = 0 returns `a` exactly, t = 1 returns `b`
/// exactly.
[[nodiscard]] TensorMap slerp_merge(const TensorMap& a, const TensorMap& b, double t,
                                    std::vector<std::string>* warnings = nullptr);

}  // namespace ckmerge
