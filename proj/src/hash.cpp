#include "npull/hash.hpp"

#include <array>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "npull/error.hpp"

namespace npull
{
    std::string sha256_hex(std::span<const std::uint8_t> bytes)
    {
        std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
        unsigned int length = 0;
        if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
            throw Error("SHA-256 digest failed");
        }
        std::string out;
        out.reserve(2 * length);
        for (unsigned int i = 0; i < length; ++i) out += fmt::format("{:02x}", digest[i]);
        return out;
    }

    std::string sha256_hex(std::string_view text)
    {
        return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
}
