#include "dgrc/mock_provider.hpp"

#include <chrono>
#include <thread>

#include "dgrc/errors.hpp"
#include "dgrc/util.hpp"

namespace dgrc {

using json = nlohmann::json;

std::vector<double> hash_embedding(const std::string& text, std::uint64_t seed, int dim) {
  std::uint64_t h = sha256_prefix64(text);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    std::uint64_t state = seed ^ (h + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(i + 1));
    std::uint64_t r = splitmix64(state);
    // map to [-1, 1]
    v[static_cast<std::size_t>(i)] =
        static_cast<double>(r >> 11) * (2.0 / 9007199254740992.0) - 1.0;
  }
  return v;
}

namespace {

std::vector<MockRule> load_rules(const std::filesystem::path& fixture_path) {
  std::vector<MockRule> rules;
  for (const std::string& line : read_lines(fixture_path)) {
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::invalid_input,
                  "bad fixture line in " + fixture_path.string() + ": " + e.what());
    }
    MockRule r;
    r.match_tag = j.at("match_tag").get<std::string>();
    r.kind = j.at("kind").get<std::string>();
    if (j.contains("payload")) r.payload = j.at("payload");
    r.delay_ms = j.value("delay_ms", 0);
    rules.push_back(std::move(r));
  }
  return rules;
}

}  // namespace

MockProvider::MockProvider(const std::filesystem::path& fixture_path, std::uint64_t seed,
                           int embedding_dim)
    : MockProvider(load_rules(fixture_path), seed, embedding_dim) {}

MockProvider::MockProvider(std::vector<MockRule> rules, std::uint64_t seed, int embedding_dim)
    : rules_(std::move(rules)), seed_(seed), embedding_dim_(embedding_dim) {}

std::string MockProvider::endpoint_id() const {
  return "mock:seed=" + std::to_string(seed_);
}

const MockRule* MockProvider::find_rule(const std::string& want_kind,
                                        const std::string& key) const {
  auto eligible = [&](const MockRule& r) {
    return r.kind == want_kind || r.kind == "transport_error" || r.kind == "refusal";
  };
  for (const auto& r : rules_) {
    if (eligible(r) && r.match_tag == key) return &r;
  }
  for (const auto& r : rules_) {
    if (eligible(r) && r.match_tag.find('*') != std::string::npos && glob_match(r.match_tag, key)) {
      return &r;
    }
  }
  return nullptr;
}

void MockProvider::enter() {
  int now = in_flight_.fetch_add(1) + 1;
  int hw = high_water_.load();
  while (now > hw && !high_water_.compare_exchange_weak(hw, now)) {
  }
}

void MockProvider::leave() { in_flight_.fetch_sub(1); }

ProviderResult MockProvider::serve(const std::string& want_kind, const std::string& key,
                                   const std::string& channel_desc) {
  const MockRule* rule = find_rule(want_kind, key);
  if (!rule) {
    throw Error(ErrorKind::mock_fixture_miss, "no scripted " + channel_desc + " for: " + key);
  }
  if (rule->delay_ms > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(rule->delay_ms));
  }
  if (rule->kind == "transport_error") {
    std::string msg = rule->payload.is_object() ? rule->payload.value("message", "scripted")
                                                : std::string("scripted");
    throw Error(ErrorKind::transport_error, msg + " (" + key + ")");
  }
  if (rule->kind == "refusal") {
    std::string msg = rule->payload.is_object() ? rule->payload.value("message", "scripted")
                                                : std::string("scripted");
    throw Error(ErrorKind::provider_refusal, msg + " (" + key + ")");
  }

  ProviderResult out;
  if (rule->kind == "completion") {
    out.kind = PayloadKind::completion;
    if (rule->payload.is_string()) {
      out.text = rule->payload.get<std::string>();
    } else {
      out.text = rule->payload.at("text").get<std::string>();
    }
    out.completion_tokens = whitespace_token_count(out.text);
  } else if (rule->kind == "token_scores") {
    out.kind = PayloadKind::token_scores;
    for (const auto& t : rule->payload) {
      out.token_scores.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
    }
  } else if (rule->kind == "embedding") {
    out.kind = PayloadKind::embedding;
    out.embedding = rule->payload.get<std::vector<double>>();
    if (static_cast<int>(out.embedding.size()) != embedding_dim_) {
      throw Error(ErrorKind::dimension_mismatch,
                  "scripted embedding has " + std::to_string(out.embedding.size()) +
                      " dimensions, expected " + std::to_string(embedding_dim_));
    }
  } else {
    throw Error(ErrorKind::invalid_input, "unknown fixture kind: " + rule->kind);
  }
  return out;
}

ProviderResult MockProvider::chat(const ChatRequest& req) {
  enter();
  {
    std::lock_guard<std::mutex> lock(log_mu_);
    chat_log_.push_back(req);
  }
  struct Leave {
    MockProvider* p;
    ~Leave() { p->leave(); }
  } leave_guard{this};
  ProviderResult out = serve("completion", req.request_tag, "completion");
  std::uint64_t prompt = 0;
  for (const auto& m : req.messages) prompt += whitespace_token_count(m.content);
  out.prompt_tokens = prompt;
  return out;
}

ProviderResult MockProvider::score(const ScoreRequest& req) {
  enter();
  struct Leave {
    MockProvider* p;
    ~Leave() { p->leave(); }
  } leave_guard{this};
  return serve("token_scores", req.context + "|" + req.continuation, "token scores");
}

ProviderResult MockProvider::embed(const std::string& /*model*/, const std::string& text) {
  enter();
  struct Leave {
    MockProvider* p;
    ~Leave() { p->leave(); }
  } leave_guard{this};
  if (find_rule("embedding", text)) {
    return serve("embedding", text, "embedding");
  }
  ProviderResult out;
  out.kind = PayloadKind::embedding;
  out.embedding = hash_embedding(text, seed_, embedding_dim_);
  return out;
}

std::vector<ChatRequest> MockProvider::chat_log() const {
  std::lock_guard<std::mutex> lock(log_mu_);
  return chat_log_;
}

}  // namespace dgrc
