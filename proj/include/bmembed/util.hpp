#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bmembed {

/// Counter-based 64-bit generator (SplitMix64). Used everywhere a seeded
/// draw is needed so results reproduce across platforms.
struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    uint64_t next_below(uint64_t n);

    /// Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller.
    double next_gaussian();
};

/// FNV-1a over a string; used to derive per-key rng streams.
uint64_t fnv1a(std::string_view s);

/// Mixes two 64-bit values into a fresh seed.
uint64_t mix_seed(uint64_t a, uint64_t b);

/// Hex-encoded SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

/// Raw 32-byte SHA-256 digest.
std::array<unsigned char, 32> sha256_digest(std::string_view data);

/// Collapses runs of whitespace to single spaces and trims the ends.
std::string fold_whitespace(std::string_view s);

/// ASCII lowercase copy.
std::string to_lower(std::string_view s);

/// Reads a whole file; throws std::runtime_error if it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes a file atomically enough for our purposes (truncate + write).
void write_file(const std::filesystem::path& path, std::string_view data);

/// Splits a string into lines, dropping a trailing empty line.
std::vector<std::string> split_lines(std::string_view text);

}  // namespace bmembed
