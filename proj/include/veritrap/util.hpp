#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace veritrap {

// FNV-1a 64-bit. Used for content hashes and stable sub-seed derivation;
// deliberately not std::hash, which varies across implementations.
constexpr uint64_t fnv1a(std::string_view data, uint64_t seed = 14695981039346656037ull) {
    uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 step; good enough to decorrelate derived seeds.
constexpr uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t root, std::string_view stage, std::string_view subject) {
    return mix64(root ^ fnv1a(stage) ^ mix64(fnv1a(subject)));
}

std::string lowercase(std::string_view s);
std::string trim(std::string_view s);

// Case-insensitive, whitespace-collapsed equality key ("exact_normalized").
std::string normalize_name(std::string_view s);

std::vector<std::string> split_lines(std::string_view text);

// Replaces every occurrence of `placeholder` (e.g. "{name}").
std::string substitute(std::string_view tmpl, std::string_view placeholder, std::string_view value);

// Replaces every "{name}" placeholder.
std::string substitute_name(std::string_view tmpl, std::string_view name);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);
uint64_t hash_file(const std::string& path);
bool file_exists(const std::string& path);

std::string hex64(uint64_t v);

}  // namespace veritrap
