#include "dgrc/http_provider.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>

#include "dgrc/errors.hpp"

namespace dgrc {

using json = nlohmann::json;

struct HttpProvider::Impl {
  std::string base_url;     // scheme://host:port
  std::string path_prefix;  // e.g. "/v1", possibly empty
  std::string api_key;
  httplib::Client client;

  explicit Impl(const std::string& host_part) : client(host_part) {
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(300, 0);
  }

  json post(const std::string& route, const json& body) {
    httplib::Headers headers;
    if (!api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + api_key);
    }
    auto res = client.Post(path_prefix + route, headers, body.dump(), "application/json");
    if (!res) {
      throw Error(ErrorKind::transport_error,
                  "no response from " + base_url + route + " (" +
                      httplib::to_string(res.error()) + ")");
    }
    if (res->status >= 500 || res->status == 429) {
      throw Error(ErrorKind::transport_error,
                  "status " + std::to_string(res->status) + " from " + route);
    }
    if (res->status >= 400) {
      throw Error(ErrorKind::provider_refusal,
                  "status " + std::to_string(res->status) + " from " + route + ": " + res->body);
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception&) {
      throw Error(ErrorKind::provider_refusal, "non-JSON response body from " + route);
    }
  }
};

namespace {

void split_base_url(const std::string& url, std::string& host_part, std::string& prefix) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::invalid_config, "base_url must include a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    host_part = url;
    prefix = "";
  } else {
    host_part = url.substr(0, path_start);
    prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  }
}

}  // namespace

HttpProvider::HttpProvider(const EndpointConfig& endpoint) {
  if (endpoint.base_url.empty()) {
    throw Error(ErrorKind::invalid_config, "endpoint base_url is empty");
  }
  std::string host_part, prefix;
  split_base_url(endpoint.base_url, host_part, prefix);
  impl_ = std::make_unique<Impl>(host_part);
  impl_->base_url = host_part;
  impl_->path_prefix = prefix;
  if (!endpoint.api_key_env.empty()) {
    if (const char* v = std::getenv(endpoint.api_key_env.c_str())) impl_->api_key = v;
  }
}

HttpProvider::~HttpProvider() = default;

std::string HttpProvider::endpoint_id() const {
  return impl_->base_url + impl_->path_prefix;
}

ProviderResult HttpProvider::chat(const ChatRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  json body{{"model", req.model},
            {"messages", messages},
            {"temperature", req.temperature},
            {"top_p", req.top_p},
            {"top_k", req.top_k},
            {"max_tokens", req.max_tokens}};
  json doc = impl_->post("/chat/completions", body);
  ProviderResult out;
  out.kind = PayloadKind::completion;
  try {
    out.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::provider_refusal, "chat response missing choices[0].message.content");
  }
  if (doc.contains("usage")) {
    out.prompt_tokens = doc["usage"].value("prompt_tokens", 0ull);
    out.completion_tokens = doc["usage"].value("completion_tokens", 0ull);
  }
  return out;
}

ProviderResult HttpProvider::score(const ScoreRequest& req) {
  // Echo scoring: the backend returns per-token log-likelihoods for the
  // whole prompt; tokens whose text offset falls inside the continuation
  // are the ones being scored.
  json body{{"model", req.model},
            {"prompt", req.context + req.continuation},
            {"max_tokens", 0},
            {"echo", true},
            {"logprobs", 0},
            {"temperature", 0.0}};
  json doc = impl_->post("/completions", body);
  json lp;
  try {
    lp = doc.at("choices").at(0).at("logprobs");
  } catch (const json::exception&) {
    throw Error(ErrorKind::unsupported_capability,
                "backend did not return logprobs for echo scoring");
  }
  if (lp.is_null() || !lp.contains("tokens") || !lp.contains("token_logprobs") ||
      !lp.contains("text_offset")) {
    throw Error(ErrorKind::unsupported_capability,
                "backend did not return logprobs for echo scoring");
  }
  const auto& tokens = lp.at("tokens");
  const auto& probs = lp.at("token_logprobs");
  const auto& offsets = lp.at("text_offset");
  if (tokens.size() != probs.size() || tokens.size() != offsets.size()) {
    throw Error(ErrorKind::provider_refusal, "ragged logprobs arrays in score response");
  }
  ProviderResult out;
  out.kind = PayloadKind::token_scores;
  std::size_t ctx_len = req.context.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (offsets.at(i).get<std::size_t>() < ctx_len) continue;
    if (probs.at(i).is_null()) {
      throw Error(ErrorKind::unsupported_capability,
                  "backend returned no log-likelihood for a continuation token");
    }
    out.token_scores.push_back({tokens.at(i).get<std::string>(), probs.at(i).get<double>()});
  }
  return out;
}

ProviderResult HttpProvider::embed(const std::string& model, const std::string& text) {
  json body{{"model", model}, {"input", text}};
  json doc = impl_->post("/embeddings", body);
  ProviderResult out;
  out.kind = PayloadKind::embedding;
  try {
    out.embedding = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::provider_refusal, "embedding response missing data[0].embedding");
  }
  return out;
}

}  // namespace dgrc
