#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ckmerge {

/// Returns the lowercase hex SHA-256 digest of a byte range. Used as the
/// content digest of written tensor containers so merges can be audited
/// for reproducibility.
[[nodiscard]] std::string sha256_hex(const void* data, std::size_t size);
[[nodiscard]] std::string sha256_hex(const std::vector<std::byte>& bytes);

}  // namespace ckmerge
