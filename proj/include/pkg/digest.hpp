#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace pkg::digest {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(const std::uint8_t* data, std::size_t len);
Sha256 sha256(const std::string& data);

std::string to_hex(const Sha256& d);

// Accumulates length-prefixed fields so that ("ab","c") and ("a","bc")
// hash differently.
class FieldHasher {
public:
    void add(const std::string& field);
    void add_u64(std::uint64_t v);
    void add_f64(double v);
    Sha256 finish() const;

private:
    std::vector<std::uint8_t> buf_;
};

} // namespace pkg::digest
