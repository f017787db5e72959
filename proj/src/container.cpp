#include "ckmerge/container.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ckmerge/digest.hpp"

namespace ckmerge {

namespace {

using nlohmann::json;

[[noreturn]] void fail(ContainerErrc code, const std::filesystem::path& path,
                       const std::string& what) {
    throw ContainerError(code, "container '" + path.string() + "': " + what);
}

std::uint64_t load_le64(const std::byte* p) noexcept {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | static_cast<std::uint64_t>(static_cast<std::uint8_t>(p[i]));
    }
    return v;
}

void append_le64(std::vector<std::byte>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
    }
}

}  // namespace

std::string_view container_errc_name(ContainerErrc code) noexcept {
    switch (code) {
        case ContainerErrc::TruncatedHeader: return "truncated header";
        case ContainerErrc::TruncatedData: return "truncated data region";
        case ContainerErrc::MalformedHeader: return "malformed header";
        case ContainerErrc::UnknownDtype: return "unknown dtype";
        case ContainerErrc::SizeMismatch: return "size mismatch";
        case ContainerErrc::OverlappingRanges: return "overlapping tensor ranges";
    }
    return "unknown error";
}

std::vector<std::byte> serialize_container(const TensorMap& map) {
    validate_tensor_map(map);

    // std::map iteration is lexicographic, and nlohmann::json objects sort
    // keys the same way, so both the header and the data layout are
    // deterministic functions of the map content.
    json tensors = json::object();
    std::uint64_t cursor = 0;
    for (const auto& [name, tensor] : map) {
        json entry;
        entry["dtype"] = std::string(dtype_name(tensor.dtype));
        entry["shape"] = tensor.shape;
        entry["offsets"] = {cursor, cursor + tensor.byte_count()};
        tensors[name] = std::move(entry);
        cursor += tensor.byte_count();
    }
    json header;
    header["tensors"] = std::move(tensors);
    const std::string header_text = header.dump();

    std::vector<std::byte> out;
    out.reserve(8 + header_text.size() + cursor);
    append_le64(out, header_text.size());
    for (const char c : header_text) out.push_back(static_cast<std::byte>(c));
    for (const auto& [name, tensor] : map) {
        out.insert(out.end(), tensor.data.begin(), tensor.data.end());
    }
    return out;
}

std::string write_container(const TensorMap& map, const std::filesystem::path& path) {
    const std::vector<std::byte> bytes = serialize_container(map);
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
    file.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    if (!file) throw IoError("write failed for '" + path.string() + "'");
    return sha256_hex(bytes);
}

TensorMap read_container(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<std::byte> bytes;
    {
        file.seekg(0, std::ios::end);
        const std::streamoff size = file.tellg();
        file.seekg(0, std::ios::beg);
        bytes.resize(static_cast<std::size_t>(size));
        if (size > 0) {
            file.read(reinterpret_cast<char*>(bytes.data()), size);
        }
        if (!file) throw IoError("read failed for '" + path.string() + "'");
    }

    if (bytes.size() < 8) {
        fail(ContainerErrc::TruncatedHeader, path, "file too short for header length field");
    }
    const std::uint64_t header_len = load_le64(bytes.data());
    if (header_len > bytes.size() - 8) {
        fail(ContainerErrc::TruncatedHeader, path,
             "header length " + std::to_string(header_len) + " exceeds file size");
    }

    json header;
    try {
        header = json::parse(std::string_view(reinterpret_cast<const char*>(bytes.data() + 8),
                                              static_cast<std::size_t>(header_len)));
    } catch (const json::exception& e) {
        fail(ContainerErrc::MalformedHeader, path, e.what());
    }
    if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_object()) {
        fail(ContainerErrc::MalformedHeader, path, "missing 'tensors' object");
    }

    const std::byte* data_region = bytes.data() + 8 + header_len;
    const std::uint64_t data_size = bytes.size() - 8 - header_len;

    TensorMap map;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (const auto& [name, entry] : header["tensors"].items()) {
        if (name.empty()) {
            fail(ContainerErrc::MalformedHeader, path, "empty tensor name");
        }
        if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
            !entry.contains("offsets")) {
            fail(ContainerErrc::MalformedHeader, path,
                 "tensor '" + name + "' missing dtype/shape/offsets");
        }
        if (!entry["dtype"].is_string()) {
            fail(ContainerErrc::MalformedHeader, path, "tensor '" + name + "' dtype not a string");
        }
        DType dtype;
        try {
            dtype = dtype_from_name(entry["dtype"].get<std::string>());
        } catch (const ValidationError&) {
            fail(ContainerErrc::UnknownDtype, path,
                 "tensor '" + name + "' has unknown dtype '" +
                     entry["dtype"].get<std::string>() + "'");
        }

        if (!entry["shape"].is_array()) {
            fail(ContainerErrc::MalformedHeader, path, "tensor '" + name + "' shape not a list");
        }
        std::vector<std::size_t> shape;
        std::uint64_t count = 1;
        for (const auto& dim : entry["shape"]) {
            if (!dim.is_number_unsigned() || dim.get<std::uint64_t>() == 0) {
                fail(ContainerErrc::MalformedHeader, path,
                     "tensor '" + name + "' has a nonpositive dimension");
            }
            shape.push_back(dim.get<std::size_t>());
            count *= dim.get<std::uint64_t>();
        }

        if (!entry["offsets"].is_array() || entry["offsets"].size() != 2 ||
            !entry["offsets"][0].is_number_unsigned() ||
            !entry["offsets"][1].is_number_unsigned()) {
            fail(ContainerErrc::MalformedHeader, path,
                 "tensor '" + name + "' offsets must be [begin, end]");
        }
        const std::uint64_t begin = entry["offsets"][0].get<std::uint64_t>();
        const std::uint64_t end = entry["offsets"][1].get<std::uint64_t>();
        if (begin > end) {
            fail(ContainerErrc::MalformedHeader, path,
                 "tensor '" + name + "' offsets are reversed");
        }
        if (end > data_size) {
            fail(ContainerErrc::TruncatedData, path,
                 "tensor '" + name + "' range ends at " + std::to_string(end) +
                     " but the data region holds " + std::to_string(data_size) + " bytes");
        }
        const std::uint64_t expected = count * element_size(dtype);
        if (end - begin != expected) {
            fail(ContainerErrc::SizeMismatch, path,
                 "tensor '" + name + "' declares " + std::to_string(end - begin) +
                     " bytes but shape x dtype needs " + std::to_string(expected));
        }
        ranges.emplace_back(begin, end);

        Tensor tensor(dtype, std::move(shape));
        std::copy(data_region + begin, data_region + end, tensor.data.begin());
        map.emplace(name, std::move(tensor));
    }

    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i) {
        if (ranges[i].first < ranges[i - 1].second) {
            fail(ContainerErrc::OverlappingRanges, path, "tensor data ranges overlap");
        }
    }
    return map;
}

}  // namespace ckmerge
