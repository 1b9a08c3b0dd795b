#pragma once

#include <memory>
#include <string>

#include "dgrc/config.hpp"
#include "dgrc/provider.hpp"

namespace dgrc {

// Chat-completions wire protocol over HTTP.  Routes:
//   POST <base>/chat/completions   (sampling, judging, generation)
//   POST <base>/completions        (echo+logprobs token scoring)
//   POST <base>/embeddings
// 5xx and 429 surface as transport_error (retryable); other 4xx as
// provider_refusal.  A bearer token is attached when api_key_env names an
// environment variable that is set.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(const EndpointConfig& endpoint);
  ~HttpProvider() override;

  ProviderResult chat(const ChatRequest& req) override;
  ProviderResult score(const ScoreRequest& req) override;
  ProviderResult embed(const std::string& model, const std::string& text) override;
  std::string endpoint_id() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dgrc
