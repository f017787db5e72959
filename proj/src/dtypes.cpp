#include "ckmerge/dtypes.hpp"

#include <bit>

#include "ckmerge/errors.hpp"

namespace ckmerge {

std::size_t element_size(DType dtype) noexcept {
    switch (dtype) {
        case DType::F32: return 4;
        case DType::F16: return 2;
        case DType::BF16: return 2;
    }
    return 0;  // unreachable
}

std::string_view dtype_name(DType dtype) noexcept {
    switch (dtype) {
        case DType::F32: return "f32";
        case DType::F16: return "f16";
        case DType::BF16: return "bf16";
    }
    return "";  // unreachable
}

DType dtype_from_name(std::string_view name) {
    if (name == "f32") return DType::F32;
    if (name == "f16") return DType::F16;
    if (name == "bf16") return DType::BF16;
    throw ValidationError("unknown dtype '" + std::string(name) + "'");
}

std::uint16_t f32_to_f16_bits(float value) noexcept {
    const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
    const std::uint32_t sign = (x >> 16) & 0x8000u;
    const std::uint32_t exp = (x >> 23) & 0xffu;
    std::uint32_t mant = x & 0x7fffffu;

    if (exp == 0xffu) {  // inf / NaN: keep the top mantissa bits so NaN stays NaN
        std::uint16_t payload = static_cast<std::uint16_t>(mant >> 13);
        if (mant != 0 && payload == 0) payload = 1;
        return static_cast<std::uint16_t>(sign | 0x7c00u | payload);
    }

    const int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 0x1f) {  // overflow -> signed infinity
        return static_cast<std::uint16_t>(sign | 0x7c00u);
    }
    if (e <= 0) {
        if (e < -10) return static_cast<std::uint16_t>(sign);  // underflow -> signed zero
        // Subnormal: shift the mantissa (with its implicit leading bit) right
        // and round to nearest, ties to even.
        mant |= 0x800000u;
        const int shift = 14 - e;  // 14..24
        const std::uint32_t kept = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        const std::uint32_t half = 1u << (shift - 1);
        std::uint32_t out = kept;
        if (rem > half || (rem == half && (kept & 1u))) ++out;
        return static_cast<std::uint16_t>(sign | out);
    }

    // Normal: round the 23-bit mantissa down to 10 bits, ties to even.
    // A mantissa carry rolls into the exponent and, at the top, to infinity,
    // which is the correct rounding behavior.
    std::uint32_t out = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (out & 1u))) ++out;
    return static_cast<std::uint16_t>(sign | out);
}

float f16_bits_to_f32(std::uint16_t bits) noexcept {
    const std::uint32_t sign = (static_cast<std::uint32_t>(bits) & 0x8000u) << 16;
    const std::uint32_t exp = (bits >> 10) & 0x1fu;
    std::uint32_t mant = bits & 0x3ffu;

    if (exp == 0x1fu) {  // inf / NaN
        return std::bit_cast<float>(sign | 0x7f800000u | (mant << 13));
    }
    if (exp == 0) {
        if (mant == 0) return std::bit_cast<float>(sign);  // signed zero
        // Subnormal: renormalize into a binary32 normal. A subnormal encodes
        // mant * 2^-24; after `shift` doublings the leading bit sits at 2^10,
        // so the value is (1 + frac) * 2^(-14 - shift).
        int shift = 0;
        while (!(mant & 0x400u)) {
            mant <<= 1;
            ++shift;
        }
        mant &= 0x3ffu;
        const std::uint32_t e32 = static_cast<std::uint32_t>(127 - 14 - shift);
        return std::bit_cast<float>(sign | (e32 << 23) | (mant << 13));
    }
    return std::bit_cast<float>(sign | ((exp - 15 + 127) << 23) | (mant << 13));
}

std::uint16_t f32_to_bf16_bits(float value) noexcept {
    const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
    if ((x & 0x7f800000u) == 0x7f800000u) {  // inf / NaN: truncate, keep NaN set
        std::uint16_t out = static_cast<std::uint16_t>(x >> 16);
        if ((x & 0x7fffffu) != 0 && (out & 0x7fu) == 0) out |= 1;
        return out;
    }
    const std::uint32_t rem = x & 0xffffu;
    std::uint32_t out = x >> 16;
    if (rem > 0x8000u || (rem == 0x8000u && (out & 1u))) ++out;
    return static_cast<std::uint16_t>(out);
}

float bf16_bits_to_f32(std::uint16_t bits) noexcept {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

}  // namespace ckmerge
