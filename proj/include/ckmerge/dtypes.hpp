#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace ckmerge {

/// Element types supported by tensor containers. All on-disk data is
/// little-endian; f16 is IEEE 754 binary16, bf16 is bfloat16 (the top
/// 16 bits of an IEEE binary32).
enum class DType { F32, F16, BF16 };

[[nodiscard]] std::size_t element_size(DType dtype) noexcept;
[[nodiscard]] std::string_view dtype_name(DType dtype) noexcept;

/// Parses "f32" / "f16" / "bf16"; throws ValidationError otherwise.
[[nodiscard]] DType dtype_from_name(std::string_view name);

// Bit-level conversions. Encoding rounds to nearest, ties to even;
// NaN payloads survive a round trip (the quiet bit may be forced).
[[nodiscard]] std::uint16_t f32_to_f16_bits(float value) noexcept;
[[nodiscard]] float f16_bits_to_f32(std::uint16_t bits) noexcept;
[[nodiscard]] std::uint16_t f32_to_bf16_bits(float value) noexcept;
[[nodiscard]] float bf16_bits_to_f32(std::uint16_t bits) noexcept;

}  // namespace ckmerge
