#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sdr {

// Lowercased runs of alphanumeric characters. The shared tokenizer for
// n-gram metrics, keyword matching, TF-IDF, and the mock embedder.
std::vector<std::string> tokenize_alnum(std::string_view text);

// Whitespace-separated words, used for word counts and length weights.
std::vector<std::string> split_words(std::string_view text);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

std::uint64_t fnv1a64(std::string_view data);

// Stable hex content hash for the embedding cache.
std::string content_hash(std::string_view text);

// Deterministic per-dialogue seed derivation.
std::uint64_t mix_seed(std::uint64_t run_seed, std::string_view key);

// Accepts "YYYY-MM-DD HH:MM:SS" or "YYYY-MM-DDTHH:MM:SS" (optionally with a
// trailing "Z"); returns seconds since the epoch, treating the stamp as UTC.
// Throws ValidationError on malformed input.
std::int64_t parse_timestamp(const std::string& stamp);
std::string format_timestamp(std::int64_t epoch_seconds);

}  // namespace sdr
