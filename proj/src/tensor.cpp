#include "ckmerge/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "ckmerge/errors.hpp"

namespace ckmerge {

namespace {

std::uint16_t load_le16(const std::byte* p) noexcept {
    return static_cast<std::uint16_t>(static_cast<std::uint8_t>(p[0]) |
                                      (static_cast<std::uint8_t>(p[1]) << 8));
}

std::uint32_t load_le32(const std::byte* p) noexcept {
    return static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[0])) |
           (static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[1])) << 8) |
           (static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[2])) << 16) |
           (static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[3])) << 24);
}

void store_le16(std::byte* p, std::uint16_t v) noexcept {
    p[0] = static_cast<std::byte>(v & 0xff);
    p[1] = static_cast<std::byte>((v >> 8) & 0xff);
}

void store_le32(std::byte* p, std::uint32_t v) noexcept {
    p[0] = static_cast<std::byte>(v & 0xff);
    p[1] = static_cast<std::byte>((v >> 8) & 0xff);
    p[2] = static_cast<std::byte>((v >> 16) & 0xff);
    p[3] = static_cast<std::byte>((v >> 24) & 0xff);
}

}  // namespace

Tensor::Tensor(DType dt, std::vector<std::size_t> shp) : dtype(dt), shape(std::move(shp)) {
    for (const std::size_t dim : shape) {
        if (dim == 0) throw ValidationError("tensor shape contains a zero dimension");
    }
    data.assign(byte_count(), std::byte{0});
}

std::size_t Tensor::element_count() const noexcept {
    std::size_t count = 1;
    for (const std::size_t dim : shape) count *= dim;
    return count;
}

std::size_t Tensor::byte_count() const noexcept {
    return element_count() * element_size(dtype);
}

double Tensor::get(std::size_t i) const {
    const std::byte* p = data.data() + i * element_size(dtype);
    switch (dtype) {
        case DType::F32: return static_cast<double>(std::bit_cast<float>(load_le32(p)));
        case DType::F16: return static_cast<double>(f16_bits_to_f32(load_le16(p)));
        case DType::BF16: return static_cast<double>(bf16_bits_to_f32(load_le16(p)));
    }
    return 0.0;  // unreachable
}

void Tensor::set(std::size_t i, double value) {
    std::byte* p = data.data() + i * element_size(dtype);
    const float f = static_cast<float>(value);
    switch (dtype) {
        case DType::F32: store_le32(p, std::bit_cast<std::uint32_t>(f)); break;
        case DType::F16: store_le16(p, f32_to_f16_bits(f)); break;
        case DType::BF16: store_le16(p, f32_to_bf16_bits(f)); break;
    }
}

std::vector<double> Tensor::to_doubles() const {
    std::vector<double> out(element_count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = get(i);
    return out;
}

Tensor Tensor::from_doubles(DType dtype, std::vector<std::size_t> shape,
                            std::span<const double> values) {
    Tensor t(dtype, std::move(shape));
    if (values.size() != t.element_count()) {
        throw ValidationError("value count does not match tensor shape");
    }
    for (std::size_t i = 0; i < values.size(); ++i) t.set(i, values[i]);
    return t;
}

void validate_tensor_map(const TensorMap& map) {
    for (const auto& [name, tensor] : map) {
        if (name.empty()) throw ValidationError("tensor map contains an empty tensor name");
        for (const std::size_t dim : tensor.shape) {
            if (dim == 0) {
                throw ValidationError("tensor '" + name + "' has a zero dimension");
            }
        }
        if (tensor.data.size() != tensor.byte_count()) {
            throw ValidationError("tensor '" + name + "' buffer size does not match shape");
        }
    }
}

}  // namespace ckmerge
