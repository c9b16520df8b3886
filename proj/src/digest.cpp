#include "pkg/digest.hpp"

#include <cstring>

#include <openssl/evp.h>

namespace pkg::digest {

Sha256 sha256(const std::uint8_t* data, std::size_t len) {
    Sha256 out{};
    unsigned int out_len = 0;
    EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr);
    return out;
}

Sha256 sha256(const std::string& data) {
    return sha256(reinterpret_cast<const std::uint8_t*>(data.data()), data.size());
}

std::string to_hex(const Sha256& d) {
    static const char* digits = "0123456789abcdef";
    std::string hex;
    hex.reserve(64);
    for (std::uint8_t b : d) {
        hex.push_back(digits[b >> 4]);
        hex.push_back(digits[b & 0xf]);
    }
    return hex;
}

void FieldHasher::add_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void FieldHasher::add(const std::string& field) {
    add_u64(field.size());
    buf_.insert(buf_.end(), field.begin(), field.end());
}

void FieldHasher::add_f64(double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    add_u64(bits);
}

Sha256 FieldHasher::finish() const {
    return sha256(buf_.data(), buf_.size());
}

} // namespace pkg::digest
