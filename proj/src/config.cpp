#include "dgrc/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <set>

#include "dgrc/errors.hpp"
#include "dgrc/util.hpp"

namespace dgrc {

using json = nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw Error(ErrorKind::invalid_config, msg);
}

void check_known_keys(const json& obj, const std::string& path,
                      const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) fail("unknown field: " + path + it.key());
  }
}

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail("bad value for " + path + key);
  }
}

void read_endpoint(const json& obj, const std::string& path, EndpointConfig& e) {
  if (!obj.is_object()) fail(path + " must be an object");
  check_known_keys(obj, path + ".", {"base_url", "model", "api_key_env"});
  read_field(obj, path + ".", "base_url", e.base_url);
  read_field(obj, path + ".", "model", e.model);
  read_field(obj, path + ".", "api_key_env", e.api_key_env);
}

}  // namespace

PipelineConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("config root must be an object");

  PipelineConfig c;
  check_known_keys(doc, "", {"K", "J", "tau_low", "tau_high", "tau_sim", "tau_llm", "sampling",
                             "seed", "concurrency_limit", "score_batch_size",
                             "grpo_per_option_target", "embedding_dim", "problems_path",
                             "prompts_dir", "providers"});
  read_field(doc, "", "K", c.K);
  read_field(doc, "", "J", c.J);
  read_field(doc, "", "tau_low", c.tau_low);
  read_field(doc, "", "tau_high", c.tau_high);
  read_field(doc, "", "tau_sim", c.tau_sim);
  read_field(doc, "", "tau_llm", c.tau_llm);
  read_field(doc, "", "seed", c.seed);
  read_field(doc, "", "concurrency_limit", c.concurrency_limit);
  read_field(doc, "", "score_batch_size", c.score_batch_size);
  read_field(doc, "", "grpo_per_option_target", c.grpo_per_option_target);
  read_field(doc, "", "embedding_dim", c.embedding_dim);
  read_field(doc, "", "problems_path", c.problems_path);
  read_field(doc, "", "prompts_dir", c.prompts_dir);

  if (doc.contains("sampling")) {
    const json& s = doc.at("sampling");
    if (!s.is_object()) fail("sampling must be an object");
    check_known_keys(s, "sampling.", {"temperature", "top_p", "top_k", "max_context_tokens"});
    read_field(s, "sampling.", "temperature", c.sampling.temperature);
    read_field(s, "sampling.", "top_p", c.sampling.top_p);
    read_field(s, "sampling.", "top_k", c.sampling.top_k);
    read_field(s, "sampling.", "max_context_tokens", c.sampling.max_context_tokens);
  }
  if (doc.contains("providers")) {
    const json& p = doc.at("providers");
    if (!p.is_object()) fail("providers must be an object");
    check_known_keys(p, "providers.", {"teacher", "student", "embedder", "judge"});
    if (p.contains("teacher")) read_endpoint(p.at("teacher"), "providers.teacher", c.providers.teacher);
    if (p.contains("student")) read_endpoint(p.at("student"), "providers.student", c.providers.student);
    if (p.contains("embedder")) read_endpoint(p.at("embedder"), "providers.embedder", c.providers.embedder);
    if (p.contains("judge")) read_endpoint(p.at("judge"), "providers.judge", c.providers.judge);
  }

  validate_config(c);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  return parse_config(read_file(path));
}

void validate_config(const PipelineConfig& c) {
  if (c.K < 1) fail("K >= 1 is required, got " + std::to_string(c.K));
  if (c.J < 1) fail("J >= 1 is required, got " + std::to_string(c.J));
  if (!(c.tau_low <= c.tau_high)) {
    fail("tau_low <= tau_high is required, got tau_low=" + std::to_string(c.tau_low) +
         " tau_high=" + std::to_string(c.tau_high));
  }
  if (!(c.tau_low >= 0.0)) fail("tau_low >= 0 is required");
  if (!(c.tau_sim > 0.0 && c.tau_sim <= 1.0)) fail("tau_sim must lie in (0, 1]");
  if (c.tau_llm < 0 || c.tau_llm > 14) fail("tau_llm must lie in [0, 14]");
  if (!(c.sampling.temperature >= 0.0)) fail("sampling.temperature >= 0 is required");
  if (!(c.sampling.top_p > 0.0 && c.sampling.top_p <= 1.0)) fail("sampling.top_p must lie in (0, 1]");
  if (c.sampling.top_k < 1) fail("sampling.top_k >= 1 is required");
  if (c.sampling.max_context_tokens < 1) fail("sampling.max_context_tokens >= 1 is required");
  if (c.concurrency_limit < 1) fail("concurrency_limit >= 1 is required");
  if (c.score_batch_size < 1) fail("score_batch_size >= 1 is required");
  if (c.grpo_per_option_target < 1) fail("grpo_per_option_target >= 1 is required");
  if (c.embedding_dim < 1) fail("embedding_dim >= 1 is required");
}

namespace {

json endpoint_json(const EndpointConfig& e) {
  return json{{"base_url", e.base_url}, {"model", e.model}, {"api_key_env", e.api_key_env}};
}

}  // namespace

std::string dump_config(const PipelineConfig& c) {
  json doc{
      {"K", c.K},
      {"J", c.J},
      {"tau_low", c.tau_low},
      {"tau_high", c.tau_high},
      {"tau_sim", c.tau_sim},
      {"tau_llm", c.tau_llm},
      {"sampling",
       {{"temperature", c.sampling.temperature},
        {"top_p", c.sampling.top_p},
        {"top_k", c.sampling.top_k},
        {"max_context_tokens", c.sampling.max_context_tokens}}},
      {"seed", c.seed},
      {"concurrency_limit", c.concurrency_limit},
      {"score_batch_size", c.score_batch_size},
      {"grpo_per_option_target", c.grpo_per_option_target},
      {"embedding_dim", c.embedding_dim},
      {"problems_path", c.problems_path},
      {"prompts_dir", c.prompts_dir},
      {"providers",
       {{"teacher", endpoint_json(c.providers.teacher)},
        {"student", endpoint_json(c.providers.student)},
        {"embedder", endpoint_json(c.providers.embedder)},
        {"judge", endpoint_json(c.providers.judge)}}},
  };
  return doc.dump();
}

std::string config_hash(const PipelineConfig& c) {
  // Semantic fields only; see header.
  json doc{
      {"K", c.K},
      {"J", c.J},
      {"tau_low", c.tau_low},
      {"tau_high", c.tau_high},
      {"tau_sim", c.tau_sim},
      {"tau_llm", c.tau_llm},
      {"temperature", c.sampling.temperature},
      {"top_p", c.sampling.top_p},
      {"top_k", c.sampling.top_k},
      {"max_context_tokens", c.sampling.max_context_tokens},
      {"seed", c.seed},
      {"score_batch_size", c.score_batch_size},
      {"grpo_per_option_target", c.grpo_per_option_target},
      {"embedding_dim", c.embedding_dim},
      {"models",
       {c.providers.teacher.model, c.providers.student.model, c.providers.embedder.model,
        c.providers.judge.model}},
  };
  return sha256_hex(doc.dump());
}

}  // namespace dgrc
