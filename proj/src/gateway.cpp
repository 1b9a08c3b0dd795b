#include "dgrc/gateway.hpp"

#include <chrono>
#include <thread>

#include "dgrc/errors.hpp"

namespace dgrc {

Gateway::Gateway(std::shared_ptr<Provider> provider, GatewayOptions options)
    : provider_(std::move(provider)), options_(std::move(options)) {
  if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
}

void Gateway::acquire() {
  std::unique_lock<std::mutex> lock(slot_mu_);
  slot_cv_.wait(lock, [&] { return in_flight_ < options_.concurrency_limit; });
  ++in_flight_;
}

void Gateway::release() {
  {
    std::lock_guard<std::mutex> lock(slot_mu_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

ProviderResult Gateway::with_retries_and_cache(const std::string& cache_key,
                                               const std::function<ProviderResult()>& issue) {
  if (cache_) {
    if (auto hit = cache_->load(cache_key)) {
      cache_hits_.fetch_add(1);
      return *hit;
    }
  }
  int backoff = options_.retry.initial_backoff_ms;
  for (int attempt = 1;; ++attempt) {
    acquire();
    struct Release {
      Gateway* g;
      ~Release() { g->release(); }
    } release_guard{this};
    try {
      requests_.fetch_add(1);
      ProviderResult r = issue();
      prompt_tokens_.fetch_add(r.prompt_tokens);
      completion_tokens_.fetch_add(r.completion_tokens);
      if (cache_) cache_->store(cache_key, r);
      return r;
    } catch (const Error& e) {
      // Only transient transport conditions are worth another attempt;
      // refusals and fixture misses will not get better by waiting.
      if (e.kind() != ErrorKind::transport_error || attempt >= options_.retry.attempts) {
        throw;
      }
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
    backoff *= 2;
  }
}

std::string Gateway::chat(const std::vector<ChatMessage>& messages,
                          const std::string& request_tag) {
  ChatRequest req;
  req.model = options_.model;
  req.messages = messages;
  req.temperature = options_.temperature;
  req.top_p = options_.top_p;
  req.top_k = options_.top_k;
  req.max_tokens = options_.max_tokens;
  req.request_tag = request_tag;
  std::string key = ResponseCache::chat_key(provider_->endpoint_id(), req);
  ProviderResult r = with_retries_and_cache(key, [&] { return provider_->chat(req); });
  return r.text;
}

ScoreOutcome Gateway::score_nll(const std::string& context, const std::string& continuation) {
  if (continuation.empty()) {
    throw Error(ErrorKind::empty_continuation, "nothing to score");
  }
  ScoreRequest req;
  req.model = options_.model;
  req.context = context;
  req.continuation = continuation;
  std::string key = ResponseCache::score_key(provider_->endpoint_id(), req);
  ProviderResult r = with_retries_and_cache(key, [&] { return provider_->score(req); });
  ScoreOutcome out;
  out.token_scores = r.token_scores;
  out.from_cache = r.from_cache;
  double total = 0.0;
  for (const auto& t : r.token_scores) {
    if (t.logprob > 0.0) {
      throw Error(ErrorKind::provider_refusal,
                  "backend returned a positive log-likelihood for token '" + t.token + "'");
    }
    total -= t.logprob;
  }
  out.total_nll = total;
  return out;
}

std::vector<double> Gateway::embed(const std::string& text) {
  if (text.empty()) {
    throw Error(ErrorKind::invalid_input, "cannot embed empty text");
  }
  std::string key = ResponseCache::embed_key(provider_->endpoint_id(), options_.model, text);
  ProviderResult r =
      with_retries_and_cache(key, [&] { return provider_->embed(options_.model, text); });
  if (static_cast<int>(r.embedding.size()) != options_.embedding_dim) {
    throw Error(ErrorKind::dimension_mismatch,
                "backend returned " + std::to_string(r.embedding.size()) +
                    " dimensions, expected " + std::to_string(options_.embedding_dim));
  }
  return r.embedding;
}

Usage Gateway::usage() const {
  Usage u;
  u.requests = requests_.load();
  u.cache_hits = cache_hits_.load();
  u.prompt_tokens = prompt_tokens_.load();
  u.completion_tokens = completion_tokens_.load();
  return u;
}

}  // namespace dgrc
