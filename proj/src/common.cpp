#include "predsens/common.hpp"

#include <cstdio>

namespace predsens {

std::string to_hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf);
}

std::string encode_doubles_hex(const std::vector<double>& values) {
    std::string out;
    out.reserve(values.size() * 16);
    for (double d : values) {
        out += to_hex64(std::bit_cast<std::uint64_t>(d));
    }
    return out;
}

static int nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::vector<double> decode_doubles_hex(std::string_view hex) {
    if (hex.size() % 16 != 0) {
        throw DataError("hex double block has length " + std::to_string(hex.size()) +
                        ", expected a multiple of 16");
    }
    std::vector<double> out(hex.size() / 16);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (std::size_t j = 0; j < 16; ++j) {
            int n = nibble(hex[i * 16 + j]);
            if (n < 0) {
                throw DataError("invalid hex digit in encoded double block");
            }
            bits = (bits << 4) | static_cast<std::uint64_t>(n);
        }
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

}  // namespace predsens
