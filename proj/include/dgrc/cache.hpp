#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "dgrc/provider.hpp"

namespace dgrc {

// Content-addressed response cache.  The key is the SHA-256 of a canonical
// JSON rendering of (endpoint, kind, full request body), so semantically
// equal requests always share an entry and differing requests never do.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  static std::string chat_key(const std::string& endpoint, const ChatRequest& req);
  static std::string score_key(const std::string& endpoint, const ScoreRequest& req);
  static std::string embed_key(const std::string& endpoint, const std::string& model,
                               const std::string& text);

  // nullopt on miss; cache_corruption when the entry exists but is unreadable.
  std::optional<ProviderResult> load(const std::string& key) const;
  void store(const std::string& key, const ProviderResult& result) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& key) const;

  std::filesystem::path dir_;
};

}  // namespace dgrc
