#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "ckmerge/baselines.hpp"

namespace ckmerge {

/// Parsed form of a merged-checkpoint name:
///   last_{k}[_{m}]_{unweighted|loss_pf-{n}_{d}|steps_pf-{n}_{d}}
/// where {n} and {d} are the integer and fractional digits of the penalty
/// factor ("pf-0_7" is 0.7, "pf-1_05" is 1.05). `penalty` is present iff
/// the scheme is metric-weighted.
struct MergeName {
    enum class Scheme { Unweighted, Loss, Steps };

    std::size_t k = 1;
    std::optional<std::size_t> interval_m;  // >= 1; omitted when merging adjacent checkpoints
    Scheme scheme = Scheme::Unweighted;
    std::optional<double> penalty;

    bool operator==(const MergeName&) const = default;
};

/// Serializes a MergeName back to the grammar above. The penalty's
/// fractional digits are emitted without trailing zeros but always with at
/// least one digit (1.0 -> "pf-1_0"); penalties are supported to 12
/// fractional digits.
[[nodiscard]] std::string format_name(const MergeName& name);

/// Inverse of format_name. Rejects malformed names with a ValidationError
/// whose message points at the byte offset of the first violation. After
/// "last_", one integer is k alone and two integers are k then the
/// interval; the scheme token that follows disambiguates the tail.
[[nodiscard]] MergeName parse_name(std::string_view text);

/// Parsed form of a comparison-method merge name:
///   {ties|dare_ties|slerp}_last_{k}[_{m}]_base_{first|last}
struct BaselineName {
    std::string method;  // "ties" | "dare_ties" | "slerp"
    std::size_t k = 2;
    std::optional<std::size_t> interval_m;
    BaseChoice base = BaseChoice::FirstCheckpoint;

    bool operator==(const BaselineName&) const = default;
};

[[nodiscard]] std::string format_baseline_name(const BaselineName& name);
[[nodiscard]] BaselineName parse_baseline_name(std::string_view text);

}  // namespace ckmerge
