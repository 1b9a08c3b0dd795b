#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dgrc/types.hpp"

namespace dgrc {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.6;
  double top_p = 0.95;
  int top_k = 30;
  int max_tokens = 4096;
  // Part of the cache key: lets otherwise-identical requests (repeated
  // samples of one problem) keep distinct cached completions, and gives the
  // scripted mock something stable to match on.
  std::string request_tag;

  bool operator==(const ChatRequest&) const = default;
};

struct ScoreRequest {
  std::string model;
  std::string context;       // empty means score the continuation unconditionally
  std::string continuation;  // must be nonempty

  bool operator==(const ScoreRequest&) const = default;
};

struct Usage {
  std::uint64_t requests = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
};

enum class PayloadKind { completion, token_scores, embedding };

struct ProviderResult {
  PayloadKind kind = PayloadKind::completion;
  std::string text;                      // completion
  std::vector<TokenScore> token_scores;  // token_scores
  std::vector<double> embedding;         // embedding
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
  bool from_cache = false;
};

// One backend endpoint.  Implementations must be safe to call from many
// threads at once.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderResult chat(const ChatRequest& req) = 0;
  virtual ProviderResult score(const ScoreRequest& req) = 0;
  virtual ProviderResult embed(const std::string& model, const std::string& text) = 0;
  // Stable identity mixed into cache keys so two endpoints never share entries.
  virtual std::string endpoint_id() const = 0;
};

}  // namespace dgrc
