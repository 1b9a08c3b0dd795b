#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dgrc/cache.hpp"
#include "dgrc/provider.hpp"

namespace dgrc {

struct RetryPolicy {
  int attempts = 3;                 // total tries, not extra retries
  int initial_backoff_ms = 1000;    // doubles after each failed attempt
};

struct GatewayOptions {
  std::string model;
  int concurrency_limit = 8;
  RetryPolicy retry;
  std::optional<std::string> cache_dir;  // nullopt disables caching
  int embedding_dim = 64;
  // Defaults applied to chat requests that leave these unset.
  double temperature = 0.6;
  double top_p = 0.95;
  int top_k = 30;
  int max_tokens = 4096;
};

struct ScoreOutcome {
  std::vector<TokenScore> token_scores;
  double total_nll = 0.0;  // -sum of continuation log-likelihoods, >= 0
  bool from_cache = false;
};

// Front door for every model call a stage makes: consults the cache, holds
// requests to at most concurrency_limit in flight, and retries transient
// transport failures with exponential backoff.  Results are identical
// whether they came from the backend or the cache.
class Gateway {
 public:
  Gateway(std::shared_ptr<Provider> provider, GatewayOptions options);

  // Returns the completion text for a single-turn or multi-turn chat.
  std::string chat(const std::vector<ChatMessage>& messages, const std::string& request_tag);

  // Negative log-likelihood of continuation given context (context may be
  // empty for an unconditional score).  empty_continuation if there is
  // nothing to score.
  ScoreOutcome score_nll(const std::string& context, const std::string& continuation);

  // Embedding for nonempty text; validates the configured dimension.
  std::vector<double> embed(const std::string& text);

  Usage usage() const;
  const GatewayOptions& options() const { return options_; }

 private:
  ProviderResult with_retries_and_cache(const std::string& cache_key,
                                        const std::function<ProviderResult()>& issue);
  void acquire();
  void release();

  std::shared_ptr<Provider> provider_;
  GatewayOptions options_;
  std::optional<ResponseCache> cache_;

  std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;

  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> prompt_tokens_{0};
  std::atomic<std::uint64_t> completion_tokens_{0};
};

}  // namespace dgrc
