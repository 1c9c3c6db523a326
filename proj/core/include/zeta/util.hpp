#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace zeta {

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary and renames over `path`.
void write_file(const std::filesystem::path& path, std::string_view contents);
void append_line(const std::filesystem::path& path, std::string_view line);
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);

// RFC 3339 UTC timestamp with millisecond precision.
std::string utc_now();

// 64-bit FNV-1a followed by a SplitMix64 finalizer.
std::uint64_t hash_key(std::uint64_t seed, std::string_view key);

// Runs fn(i) for i in [0, n) on at most `jobs` threads. The first exception
// thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace zeta
