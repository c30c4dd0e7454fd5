#pragma once

// Shared plumbing: error taxonomy, deterministic hashing, hex-encoded doubles,
// and seed derivation used across the library.

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace predsens {

// Error taxonomy maps onto the CLI exit codes:
//   ConfigError -> 1 (bad flags, invalid hyperparameters)
//   DataError   -> 2 (missing/malformed input data, shape mismatches)
//   NumericError-> 3 (non-finite values produced during computation)
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Shape/dimension mismatches are a species of bad data.
class DimensionError : public DataError {
public:
    explicit DimensionError(const std::string& msg) : DataError(msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// FNV-1a, 64-bit: stable content hash for config fingerprints and model
// fingerprints. Not cryptographic; we only need determinism.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex64(std::uint64_t value);

// Bit-exact text encoding for doubles: 16 lowercase hex digits of the IEEE-754
// bit pattern, most significant nibble first.
std::string encode_doubles_hex(const std::vector<double>& values);
std::vector<double> decode_doubles_hex(std::string_view hex);

// Deterministic stream splitting (splitmix64). Used to derive independent
// RNG seeds per bootstrap resample / per epoch so that parallel and
// sequential execution agree.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 1));
}

}  // namespace predsens
