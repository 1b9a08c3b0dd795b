#include "dgrc/cache.hpp"

#include <nlohmann/json.hpp>

#include "dgrc/errors.hpp"
#include "dgrc/serialization.hpp"
#include "dgrc/util.hpp"

namespace dgrc {

using json = nlohmann::json;

std::string ResponseCache::chat_key(const std::string& endpoint, const ChatRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  json body{{"endpoint", endpoint},
            {"kind", "chat"},
            {"model", req.model},
            {"messages", messages},
            {"temperature", req.temperature},
            {"top_p", req.top_p},
            {"top_k", req.top_k},
            {"max_tokens", req.max_tokens},
            {"request_tag", req.request_tag}};
  return sha256_hex(body.dump());
}

std::string ResponseCache::score_key(const std::string& endpoint, const ScoreRequest& req) {
  json body{{"endpoint", endpoint},
            {"kind", "score"},
            {"model", req.model},
            {"context", req.context},
            {"continuation", req.continuation}};
  return sha256_hex(body.dump());
}

std::string ResponseCache::embed_key(const std::string& endpoint, const std::string& model,
                                     const std::string& text) {
  json body{{"endpoint", endpoint}, {"kind", "embed"}, {"model", model}, {"input", text}};
  return sha256_hex(body.dump());
}

std::filesystem::path ResponseCache::entry_path(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<ProviderResult> ResponseCache::load(const std::string& key) const {
  std::filesystem::path p = entry_path(key);
  if (!std::filesystem::exists(p)) return std::nullopt;
  json doc;
  try {
    doc = json::parse(read_file(p));
  } catch (const std::exception&) {
    throw Error(ErrorKind::cache_corruption, "unreadable cache entry: " + p.string());
  }
  ProviderResult out;
  try {
    std::string kind = doc.at("kind").get<std::string>();
    if (kind == "completion") {
      out.kind = PayloadKind::completion;
      out.text = doc.at("payload").get<std::string>();
    } else if (kind == "token_scores") {
      out.kind = PayloadKind::token_scores;
      for (const auto& t : doc.at("payload")) {
        out.token_scores.push_back(
            {t.at("token").get<std::string>(), t.at("logprob").get<double>()});
      }
    } else if (kind == "embedding") {
      out.kind = PayloadKind::embedding;
      out.embedding = doc.at("payload").get<std::vector<double>>();
    } else {
      throw Error(ErrorKind::cache_corruption, "unknown entry kind in " + p.string());
    }
  } catch (const json::exception&) {
    throw Error(ErrorKind::cache_corruption, "malformed cache entry: " + p.string());
  }
  out.prompt_tokens = doc.value("prompt_tokens", std::uint64_t{0});
  out.completion_tokens = doc.value("completion_tokens", std::uint64_t{0});
  out.from_cache = true;
  return out;
}

void ResponseCache::store(const std::string& key, const ProviderResult& result) const {
  json payload;
  std::string kind;
  switch (result.kind) {
    case PayloadKind::completion:
      kind = "completion";
      payload = result.text;
      break;
    case PayloadKind::token_scores: {
      kind = "token_scores";
      payload = json::array();
      for (const auto& t : result.token_scores) {
        payload.push_back({{"token", t.token}, {"logprob", t.logprob}});
      }
      break;
    }
    case PayloadKind::embedding:
      kind = "embedding";
      payload = result.embedding;
      break;
  }
  json doc{{"schema_version", kSchemaVersion},
           {"kind", kind},
           {"payload", payload},
           {"prompt_tokens", result.prompt_tokens},
           {"completion_tokens", result.completion_tokens}};
  atomic_write_file(entry_path(key), doc.dump());
}

}  // namespace dgrc
