#include "ckmerge/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>
#include <stdexcept>

namespace ckmerge {

std::string sha256_hex(const void* data, std::size_t size) {
    const std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                                      EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data, size) != 1) {
        throw std::runtime_error("sha256: digest computation failed");
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> raw{};
    unsigned int raw_len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), raw.data(), &raw_len) != 1) {
        throw std::runtime_error("sha256: digest computation failed");
    }

    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(2 * raw_len);
    for (unsigned int i = 0; i < raw_len; ++i) {
        hex.push_back(kHex[raw[i] >> 4]);
        hex.push_back(kHex[raw[i] & 0xf]);
    }
    return hex;
}

std::string sha256_hex(const std::vector<std::byte>& bytes) {
    return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace ckmerge
