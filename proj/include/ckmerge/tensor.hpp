#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ckmerge/dtypes.hpp"

namespace ckmerge {

/// A dense named tensor: dtype, shape, and a contiguous little-endian
/// element buffer. Elements are addressed by flat (row-major) index;
/// all arithmetic goes through double and rounds once on store.
struct Tensor {
    DType dtype = DType::F32;
    std::vector<std::size_t> shape;  // every dimension >= 1; empty = scalar
    std::vector<std::byte> data;     // element_count() * element_size(dtype) bytes

    Tensor() = default;
    Tensor(DType dtype, std::vector<std::size_t> shape);

    [[nodiscard]] std::size_t element_count() const noexcept;
    [[nodiscard]] std::size_t byte_count() const noexcept;

    /// Decodes element `i` to double.
    [[nodiscard]] double get(std::size_t i) const;
    /// Encodes `value` into element `i`, rounding to this tensor's dtype.
    void set(std::size_t i, double value);

    [[nodiscard]] std::vector<double> to_doubles() const;

    [[nodiscard]] static Tensor from_doubles(DType dtype, std::vector<std::size_t> shape,
                                             std::span<const double> values);

    bool operator==(const Tensor&) const = default;
};

/// Named tensor collection. Ordered by name so that iteration (and hence
/// serialization and merge output) is deterministic.
using TensorMap = std::map<std::string, Tensor>;

/// Throws ValidationError if any name is empty, any dimension is zero, or
/// any buffer length disagrees with shape x dtype.
void validate_tensor_map(const TensorMap& map);

}  // namespace ckmerge
