#pragma once

#include <cstdint>
#include <string>

namespace dgrc {

struct SamplingParams {
  double temperature = 0.6;
  double top_p = 0.95;
  int top_k = 30;
  int max_context_tokens = 4096;

  bool operator==(const SamplingParams&) const = default;
};

struct EndpointConfig {
  std::string base_url;     // empty is allowed until the endpoint is actually used
  std::string model;
  std::string api_key_env;  // environment variable holding the bearer token, if any

  bool operator==(const EndpointConfig&) const = default;
};

struct ProviderSet {
  EndpointConfig teacher;
  EndpointConfig student;
  EndpointConfig embedder{.base_url = "", .model = "all-MiniLM-L6-v2", .api_key_env = ""};
  EndpointConfig judge;

  bool operator==(const ProviderSet&) const = default;
};

struct PipelineConfig {
  int K = 1;  // teacher samples per problem
  int J = 8;  // student samples per problem

  double tau_low = 0.35;   // difficulty band, inclusive
  double tau_high = 1.0;   // inclusive
  double tau_sim = 0.85;   // duplicate threshold, cosine
  int tau_llm = 13;        // retain at score >= tau_llm

  SamplingParams sampling;

  std::uint64_t seed = 0;
  int concurrency_limit = 8;
  int score_batch_size = 16;
  int grpo_per_option_target = 15000;
  int embedding_dim = 64;

  std::string problems_path;
  std::string prompts_dir = "prompts";

  ProviderSet providers;

  bool operator==(const PipelineConfig&) const = default;
};

// Parses a JSON document; absent fields keep their defaults, unknown fields
// are rejected so a misspelled threshold cannot silently fall back.
PipelineConfig parse_config(const std::string& json_text);

PipelineConfig load_config(const std::string& path);

// Throws invalid_config with the offending field path in the message.
void validate_config(const PipelineConfig& c);

// Hash over the semantic fields only: knobs that change pipeline output.
// Execution details (concurrency, paths, key env names) stay out so that
// e.g. raising the worker count does not orphan existing stage outputs.
std::string config_hash(const PipelineConfig& c);

std::string dump_config(const PipelineConfig& c);  // canonical JSON

}  // namespace dgrc
