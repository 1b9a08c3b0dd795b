#include "dgrc/util.hpp"

#include <openssl/sha.h>

#include <atomic>
#include <cctype>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "dgrc/errors.hpp"

namespace dgrc {

const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_config: return "invalid_config";
    case ErrorKind::invalid_input: return "invalid_input";
    case ErrorKind::transport_error: return "transport_error";
    case ErrorKind::provider_refusal: return "provider_refusal";
    case ErrorKind::cache_corruption: return "cache_corruption";
    case ErrorKind::unsupported_capability: return "unsupported_capability";
    case ErrorKind::empty_continuation: return "empty_continuation";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::mock_fixture_miss: return "mock_fixture_miss";
    case ErrorKind::judge_protocol_error: return "judge_protocol_error";
    case ErrorKind::parse_error: return "parse_error";
    case ErrorKind::format_error: return "format_error";
    case ErrorKind::alignment_error: return "alignment_error";
    case ErrorKind::score_range_error: return "score_range_error";
    case ErrorKind::degenerate_score: return "degenerate_score";
    case ErrorKind::missing_predecessor: return "missing_predecessor";
    case ErrorKind::store_inconsistency: return "store_inconsistency";
    case ErrorKind::config_hash_mismatch: return "config_hash_mismatch";
    case ErrorKind::no_verified_chain: return "no_verified_chain";
  }
  return "unknown";
}

// ===== hashing =====

std::string sha256_hex(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(SHA256_DIGEST_LENGTH * 2);
  for (unsigned char b : digest) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0xf]);
  }
  return out;
}

std::uint64_t sha256_prefix64(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | digest[i];
  return v;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t DeterministicRng::below(std::uint64_t n) {
  if (n == 0) return 0;
  return next() % n;
}

std::int64_t DeterministicRng::range(std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
}

double DeterministicRng::unit() {
  // 53 high bits -> double in [0, 1)
  return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0);
}

DeterministicRng seeded_rng(std::uint64_t seed, std::string_view label) {
  std::uint64_t mixed = seed ^ sha256_prefix64(label);
  // one warm-up step decorrelates nearby seeds
  splitmix64(mixed);
  return DeterministicRng(mixed);
}

// ===== text =====

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string strip_fences_and_quotes(std::string_view s) {
  std::string t = trim(s);
  if (starts_with(t, "```") && ends_with(t, "```") && t.size() >= 6) {
    std::string inner = t.substr(3, t.size() - 6);
    // drop a language hint on the opening fence line
    std::size_t nl = inner.find('\n');
    if (nl != std::string::npos) {
      std::string first = trim(inner.substr(0, nl));
      bool word = !first.empty();
      for (char c : first) {
        if (!std::isalnum(static_cast<unsigned char>(c))) { word = false; break; }
      }
      if (word) inner = inner.substr(nl + 1);
    }
    t = trim(inner);
  }
  if (t.size() >= 2) {
    char a = t.front(), b = t.back();
    if ((a == '"' && b == '"') || (a == '\'' && b == '\'') || (a == '`' && b == '`')) {
      t = trim(t.substr(1, t.size() - 2));
    }
  }
  return t;
}

std::size_t whitespace_token_count(std::string_view s) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : s) {
    bool ws = std::isspace(static_cast<unsigned char>(c));
    if (!ws && !in_token) ++n;
    in_token = !ws;
  }
  return n;
}

bool glob_match(std::string_view pattern, std::string_view text) {
  // iterative wildcard match, '*' only
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == text[t])) {
      ++p; ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

// ===== files =====

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::invalid_input, "cannot open file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write_file(const std::filesystem::path& p, std::string_view content) {
  std::filesystem::create_directories(p.parent_path());
  std::filesystem::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::invalid_input, "cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::invalid_input, "short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::invalid_input, "cannot open file: " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// ===== parallelism =====

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (workers == 0) workers = 1;
  if (workers > n) workers = n;
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace dgrc
