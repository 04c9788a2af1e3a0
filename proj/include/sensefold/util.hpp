#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>

namespace sensefold {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; the fixed mixing function behind all derived seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for stream `index` under `master`, independent of scheduling order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) + index);
}

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are rethrown (first by index).
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Reads a whole file; `.gz` files are decompressed transparently.
std::string read_text_file(const std::filesystem::path& path);
/// Writes a whole file; `.gz` paths are gzip-compressed.
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace sensefold
