#include "drivepoison/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "drivepoison/errors.hpp"

namespace drivepoison {

namespace {

std::string digest_hex(const EVP_MD* md, std::string_view a, std::string_view b) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), a.data(), a.size()) != 1 ||
        EVP_DigestUpdate(ctx.get(), b.data(), b.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1) {
        throw Error("digest computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        hex += kHex[out[i] >> 4];
        hex += kHex[out[i] & 0x0F];
    }
    return hex;
}

}  // namespace

std::string git_blob_hash(std::string_view content) {
    std::string header = "blob " + std::to_string(content.size());
    header.push_back('\0');
    return digest_hex(EVP_sha1(), header, content);
}

std::string fingerprint(std::string_view content) {
    return digest_hex(EVP_sha256(), content, {}).substr(0, 16);
}

}  // namespace drivepoison
