#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hdbench {

// Error taxonomy used across the library. The CLI maps these to exit codes
// (config 2, data 3, anything else 4). Argument violations use
// std::invalid_argument directly.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a over raw bytes. Used for checkpoint identities in provenance
// records; not cryptographic.
std::uint64_t fnv1a64(const void* data, std::size_t len) noexcept;

// Deterministic seed derivation: mixes a base seed with a stage tag and an
// index so that every RNG consumer in a run gets an independent, reproducible
// stream. Same (base, tag, index) always yields the same seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) noexcept;

// Lowercase hex rendering of a 64-bit hash.
std::string hex64(std::uint64_t value);

}  // namespace hdbench
