#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "dgrc/provider.hpp"

namespace dgrc {

// Deterministic stand-in embedding: dim values expanded from a seeded hash
// of the text, each in [-1, 1].  Identical text always maps to the identical
// vector; distinct texts to effectively independent ones.
std::vector<double> hash_embedding(const std::string& text, std::uint64_t seed, int dim);

// One scripted response.  kind selects the channel it can serve:
//   completion      -> chat        payload {"text": ...}
//   token_scores    -> score       payload [{"token","logprob"}...]
//   embedding       -> embed       payload [numbers]
//   transport_error -> any channel, raises transport_error when matched
//   refusal         -> any channel, raises provider_refusal when matched
// match_tag is compared against the channel's match key (chat: request_tag,
// score: "<context>|<continuation>", embed: input text); exact matches win
// over '*'-glob matches, earlier rules over later ones.
struct MockRule {
  std::string match_tag;
  std::string kind;
  nlohmann::json payload;
  int delay_ms = 0;
};

class MockProvider : public Provider {
 public:
  // fixture file: newline-delimited MockRule objects
  MockProvider(const std::filesystem::path& fixture_path, std::uint64_t seed, int embedding_dim);
  MockProvider(std::vector<MockRule> rules, std::uint64_t seed, int embedding_dim);

  ProviderResult chat(const ChatRequest& req) override;
  ProviderResult score(const ScoreRequest& req) override;
  ProviderResult embed(const std::string& model, const std::string& text) override;
  std::string endpoint_id() const override;

  // Observability for tests.
  int high_water_mark() const { return high_water_.load(); }
  std::vector<ChatRequest> chat_log() const;

 private:
  const MockRule* find_rule(const std::string& want_kind, const std::string& key) const;
  ProviderResult serve(const std::string& want_kind, const std::string& key,
                       const std::string& channel_desc);
  void enter();
  void leave();

  std::vector<MockRule> rules_;
  std::uint64_t seed_;
  int embedding_dim_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> high_water_{0};
  mutable std::mutex log_mu_;
  std::vector<ChatRequest> chat_log_;
};

}  // namespace dgrc
