#pragma once

#include <filesystem>
#include <string>

#include "ckmerge/errors.hpp"
#include "ckmerge/tensor.hpp"

namespace ckmerge {

/// Why a tensor container could not be read. Each variant has a dedicated
/// crafted-fixture test.
enum class ContainerErrc {
    TruncatedHeader,    // file shorter than the header-length field promises
    TruncatedData,      // declared offsets reach past the data region
    MalformedHeader,    // header is not the expected structured text
    UnknownDtype,       // dtype string not one of f32/f16/bf16
    SizeMismatch,       // offset range length != shape x element size
    OverlappingRanges,  // two tensors claim intersecting data ranges
};

[[nodiscard]] std::string_view container_errc_name(ContainerErrc code) noexcept;

class ContainerError : public IoError {
public:
    ContainerError(ContainerErrc code, const std::string& message)
        : IoError(message), code_(code) {}

    [[nodiscard]] ContainerErrc code() const noexcept { return code_; }

private:
    ContainerErrc code_;
};

/// Container layout, bit-exact:
///   [u64 little-endian header length N] [N bytes UTF-8 JSON header] [data]
/// The header maps each tensor name to {"dtype", "shape", "offsets"}
/// under a top-level "tensors" object; offsets are [begin, end) byte
/// positions relative to the start of the data region. Writers emit
/// tensors in lexicographic name order, packed contiguously, so identical
/// maps serialize to identical bytes.

/// Reads and fully validates a container. Throws ContainerError with the
/// matching variant on any structural defect, or IoError when the file
/// cannot be opened.
[[nodiscard]] TensorMap read_container(const std::filesystem::path& path);

/// Writes `map` to `path` and returns the SHA-256 hex digest of the file
/// bytes. Output is a pure function of the map's content.
std::string write_container(const TensorMap& map, const std::filesystem::path& path);

/// Serializes without touching the filesystem (the writer above plus the
/// digest are built on this).
[[nodiscard]] std::vector<std::byte> serialize_container(const TensorMap& map);

}  // namespace ckmerge
