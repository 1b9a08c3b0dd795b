#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace dgrc {

// ===== hashing =====

// Hex-encoded SHA-256 of arbitrary bytes.  Used for cache keys and config
// hashes, where accidental collisions must be out of the question.
std::string sha256_hex(std::string_view data);

// First 8 bytes of SHA-256 as an unsigned integer, for seeding.
std::uint64_t sha256_prefix64(std::string_view data);

// splitmix64 step: the generator behind every seeded decision in the
// pipeline.  Chosen over std:: distributions because its output is fully
// specified, so seeded runs are reproducible across platforms.
std::uint64_t splitmix64(std::uint64_t& state);

class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() { return splitmix64(state_); }

  // Uniform in [0, n).  Modulo bias is negligible for the small n used here
  // and keeps the stream platform-independent.
  std::uint64_t below(std::uint64_t n);

  // Uniform in [lo, hi] inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi);

  double unit();  // [0, 1)

 private:
  std::uint64_t state_;
};

// Seed stream for a named decision: mixes the run seed with a label such as
// "select|<problem_id>" so every decision point draws from its own stream.
DeterministicRng seeded_rng(std::uint64_t seed, std::string_view label);

// ===== text =====

std::string trim(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

// Removes a surrounding markdown code fence (``` or ```lang) and, after
// that, one layer of matching quotes.  Applied before strict verdict and
// JSON parsing so cosmetic wrapping does not fail a response.
std::string strip_fences_and_quotes(std::string_view s);

// Number of maximal non-whitespace runs.  The token-count proxy used by the
// statistics stage (labelled as such in its output).
std::size_t whitespace_token_count(std::string_view s);

// Glob match with '*' wildcards only.  Used by the scripted mock provider's
// match tags.
bool glob_match(std::string_view pattern, std::string_view text);

// ===== files =====

std::string read_file(const std::filesystem::path& p);

// Write via temp file + rename so readers never observe a half-written file.
void atomic_write_file(const std::filesystem::path& p, std::string_view content);

std::vector<std::string> read_lines(const std::filesystem::path& p);

// ===== parallelism =====

// Runs fn(i) for i in [0, n) on up to `workers` threads.  Work items must
// write only to their own slot; the first exception thrown by any item is
// rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace dgrc
