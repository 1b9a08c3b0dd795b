#include "dgrc/serialization.hpp"

#include <fstream>

#include "dgrc/errors.hpp"
#include "dgrc/util.hpp"

namespace dgrc {

using json = nlohmann::json;

void to_json(json& j, const McOption& v) {
  j = json{{"letter", v.letter}, {"text", v.text}};
}

void from_json(const json& j, McOption& v) {
  j.at("letter").get_to(v.letter);
  j.at("text").get_to(v.text);
}

void to_json(json& j, const ProblemRecord& v) {
  j = json{{"id", v.id},
           {"text", v.text},
           {"kind", to_string(v.kind)},
           {"domain_tag", v.domain_tag}};
  if (!v.options.empty()) j["options"] = v.options;
}

void from_json(const json& j, ProblemRecord& v) {
  j.at("id").get_to(v.id);
  j.at("text").get_to(v.text);
  v.kind = problem_kind_from_string(j.at("kind").get<std::string>());
  v.domain_tag = j.value("domain_tag", std::string());
  v.options.clear();
  if (j.contains("options")) j.at("options").get_to(v.options);
}

void to_json(json& j, const ParsedAnswer& v) {
  j = json{{"kind", to_string(v.kind)}, {"value", v.value}};
}

void from_json(const json& j, ParsedAnswer& v) {
  v.kind = answer_kind_from_string(j.at("kind").get<std::string>());
  j.at("value").get_to(v.value);
}

void to_json(json& j, const TokenScore& v) {
  j = json{{"token", v.token}, {"logprob", v.logprob}};
}

void from_json(const json& j, TokenScore& v) {
  j.at("token").get_to(v.token);
  j.at("logprob").get_to(v.logprob);
}

void to_json(json& j, const ModelResponse& v) {
  j = json{{"problem_id", v.problem_id},
           {"role", to_string(v.role)},
           {"sample_index", v.sample_index},
           {"raw_text", v.raw_text},
           {"reasoning_chain", v.reasoning_chain},
           {"final_answer", v.final_answer}};
}

void from_json(const json& j, ModelResponse& v) {
  j.at("problem_id").get_to(v.problem_id);
  v.role = role_from_string(j.at("role").get<std::string>());
  j.at("sample_index").get_to(v.sample_index);
  j.at("raw_text").get_to(v.raw_text);
  j.at("reasoning_chain").get_to(v.reasoning_chain);
  j.at("final_answer").get_to(v.final_answer);
}

void to_json(json& j, const DivergentPair& v) {
  j = json{{"problem_id", v.problem_id},
           {"teacher_sample", v.teacher_sample},
           {"student_sample", v.student_sample},
           {"verdict_tier", to_string(v.verdict_tier)}};
}

void from_json(const json& j, DivergentPair& v) {
  j.at("problem_id").get_to(v.problem_id);
  j.at("teacher_sample").get_to(v.teacher_sample);
  j.at("student_sample").get_to(v.student_sample);
  v.verdict_tier = verdict_tier_from_string(j.at("verdict_tier").get<std::string>());
}

void to_json(json& j, const DiagnosticEntry& v) {
  j = json{{"problem", v.problem},
           {"divergent_pairs", v.divergent_pairs},
           {"teacher_responses", v.teacher_responses}};
}

void from_json(const json& j, DiagnosticEntry& v) {
  j.at("problem").get_to(v.problem);
  j.at("divergent_pairs").get_to(v.divergent_pairs);
  j.at("teacher_responses").get_to(v.teacher_responses);
}

void to_json(json& j, const NoDivergenceEntry& v) {
  j = json{{"problem", v.problem}, {"teacher_response", v.teacher_response}};
}

void from_json(const json& j, NoDivergenceEntry& v) {
  j.at("problem").get_to(v.problem);
  j.at("teacher_response").get_to(v.teacher_response);
}

void to_json(json& j, const QuarantineEntry& v) {
  j = json{{"problem_id", v.problem_id},
           {"stage", v.stage},
           {"error_kind", v.error_kind},
           {"message", v.message}};
}

void from_json(const json& j, QuarantineEntry& v) {
  j.at("problem_id").get_to(v.problem_id);
  j.at("stage").get_to(v.stage);
  j.at("error_kind").get_to(v.error_kind);
  j.at("message").get_to(v.message);
}

void to_json(json& j, const FilterMetrics& v) {
  j = json::object();
  if (v.s_cond) j["s_cond"] = *v.s_cond;
  if (v.s_direct) j["s_direct"] = *v.s_direct;
  if (v.ifd) j["ifd"] = *v.ifd;
  if (v.max_similarity) j["max_similarity"] = *v.max_similarity;
  if (v.dimension_scores) j["dimension_scores"] = *v.dimension_scores;
  if (v.s_llm) j["s_llm"] = *v.s_llm;
}

void from_json(const json& j, FilterMetrics& v) {
  v = FilterMetrics{};
  if (j.contains("s_cond")) v.s_cond = j.at("s_cond").get<double>();
  if (j.contains("s_direct")) v.s_direct = j.at("s_direct").get<double>();
  if (j.contains("ifd")) v.ifd = j.at("ifd").get<double>();
  if (j.contains("max_similarity")) v.max_similarity = j.at("max_similarity").get<double>();
  if (j.contains("dimension_scores")) {
    v.dimension_scores = j.at("dimension_scores").get<std::array<int, 7>>();
  }
  if (j.contains("s_llm")) v.s_llm = j.at("s_llm").get<int>();
}

void to_json(json& j, const PairOrigin& v) {
  j = json{{"teacher_sample", v.teacher_sample}, {"student_sample", v.student_sample}};
}

void from_json(const json& j, PairOrigin& v) {
  j.at("teacher_sample").get_to(v.teacher_sample);
  j.at("student_sample").get_to(v.student_sample);
}

void to_json(json& j, const AtomicPair& v) {
  j = json{{"id", v.id},
           {"problem_id", v.problem_id},
           {"origin", v.origin},
           {"question", v.question},
           {"answer_reasoning", v.answer_reasoning},
           {"answer_final", v.answer_final},
           {"metrics", v.metrics},
           {"status", to_string(v.status)}};
  if (!v.note.empty()) j["note"] = v.note;
}

void from_json(const json& j, AtomicPair& v) {
  j.at("id").get_to(v.id);
  j.at("problem_id").get_to(v.problem_id);
  j.at("origin").get_to(v.origin);
  j.at("question").get_to(v.question);
  j.at("answer_reasoning").get_to(v.answer_reasoning);
  j.at("answer_final").get_to(v.answer_final);
  j.at("metrics").get_to(v.metrics);
  v.status = pair_status_from_string(j.at("status").get<std::string>());
  v.note = j.value("note", std::string());
}

void to_json(json& j, const Fact& v) {
  j = json{{"question", v.question}, {"final_answer", v.final_answer}};
}

void from_json(const json& j, Fact& v) {
  j.at("question").get_to(v.question);
  j.at("final_answer").get_to(v.final_answer);
}

void to_json(json& j, const VerificationSet& v) {
  j = json{{"problem_id", v.problem_id}, {"facts", v.facts}};
}

void from_json(const json& j, VerificationSet& v) {
  j.at("problem_id").get_to(v.problem_id);
  j.at("facts").get_to(v.facts);
}

void to_json(json& j, const VerifiedChain& v) {
  j = json{{"problem_id", v.problem_id},
           {"teacher_sample", v.teacher_sample},
           {"chain", v.chain},
           {"answer", v.answer},
           {"audit", v.audit}};
}

void from_json(const json& j, VerifiedChain& v) {
  j.at("problem_id").get_to(v.problem_id);
  j.at("teacher_sample").get_to(v.teacher_sample);
  j.at("chain").get_to(v.chain);
  j.at("answer").get_to(v.answer);
  j.at("audit").get_to(v.audit);
}

void to_json(json& j, const TrainingMeta& v) {
  j = json{{"problem_id", v.problem_id}, {"curriculum", v.curriculum}};
  if (!v.source.empty()) j["source"] = v.source;
}

void from_json(const json& j, TrainingMeta& v) {
  j.at("problem_id").get_to(v.problem_id);
  j.at("curriculum").get_to(v.curriculum);
  v.source = j.value("source", std::string());
}

void to_json(json& j, const TrainingRecord& v) {
  j = json{{"instruction", v.instruction}, {"output", v.output}, {"meta", v.meta}};
}

void from_json(const json& j, TrainingRecord& v) {
  j.at("instruction").get_to(v.instruction);
  j.at("output").get_to(v.output);
  j.at("meta").get_to(v.meta);
}

void to_json(json& j, const CurriculumStats& v) {
  j = json{{"n_unlabeled", v.n_unlabeled},
           {"n_divergent_problems", v.n_divergent_problems},
           {"n_no_divergence", v.n_no_divergence},
           {"n_quarantined", v.n_quarantined},
           {"n_divergent_pairs", v.n_divergent_pairs},
           {"n_raw_atomic", v.n_raw_atomic},
           {"n_filtered_atomic", v.n_filtered_atomic},
           {"n_verified_cots", v.n_verified_cots},
           {"n_total_cots", v.n_total_cots},
           {"avg_tokens_atomic", v.avg_tokens_atomic},
           {"avg_tokens_cot", v.avg_tokens_cot}};
}

void from_json(const json& j, CurriculumStats& v) {
  j.at("n_unlabeled").get_to(v.n_unlabeled);
  j.at("n_divergent_problems").get_to(v.n_divergent_problems);
  j.at("n_no_divergence").get_to(v.n_no_divergence);
  j.at("n_quarantined").get_to(v.n_quarantined);
  j.at("n_divergent_pairs").get_to(v.n_divergent_pairs);
  j.at("n_raw_atomic").get_to(v.n_raw_atomic);
  j.at("n_filtered_atomic").get_to(v.n_filtered_atomic);
  j.at("n_verified_cots").get_to(v.n_verified_cots);
  j.at("n_total_cots").get_to(v.n_total_cots);
  j.at("avg_tokens_atomic").get_to(v.avg_tokens_atomic);
  j.at("avg_tokens_cot").get_to(v.avg_tokens_cot);
}

std::string encode_line(const json& j) { return j.dump(); }

std::string store_header_line(const std::string& store_name, const std::string& cfg_hash) {
  json h{{"config_hash", cfg_hash}, {"schema_version", kSchemaVersion}, {"store", store_name}};
  return h.dump();
}

void write_jsonl(const std::filesystem::path& p, const std::string& store_name,
                 const std::string& cfg_hash, const std::vector<json>& records) {
  std::string body;
  if (!store_name.empty()) {
    body += store_header_line(store_name, cfg_hash);
    body += '\n';
  }
  for (const auto& r : records) {
    body += encode_line(r);
    body += '\n';
  }
  atomic_write_file(p, body);
}

JsonlStore read_jsonl(const std::filesystem::path& p, bool expect_header,
                      const std::string& expect_hash) {
  if (!std::filesystem::exists(p)) {
    throw Error(ErrorKind::missing_predecessor, "store not found: " + p.string());
  }
  JsonlStore out;
  std::vector<std::string> lines = read_lines(p);
  std::size_t start = 0;
  if (expect_header) {
    if (lines.empty()) {
      throw Error(ErrorKind::store_inconsistency, "store missing header: " + p.string());
    }
    json h;
    try {
      h = json::parse(lines[0]);
    } catch (const json::exception&) {
      throw Error(ErrorKind::store_inconsistency, "unreadable store header: " + p.string());
    }
    if (!h.contains("config_hash") || !h.contains("store")) {
      throw Error(ErrorKind::store_inconsistency, "malformed store header: " + p.string());
    }
    out.config_hash = h.at("config_hash").get<std::string>();
    if (!expect_hash.empty() && out.config_hash != expect_hash) {
      throw Error(ErrorKind::config_hash_mismatch,
                  p.string() + " was produced under config " + out.config_hash.substr(0, 12) +
                      ", current config is " + expect_hash.substr(0, 12));
    }
    start = 1;
  }
  for (std::size_t i = start; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      out.records.push_back(json::parse(lines[i]));
    } catch (const json::exception&) {
      throw Error(ErrorKind::store_inconsistency,
                  "unreadable record at " + p.string() + ":" + std::to_string(i + 1));
    }
  }
  return out;
}

}  // namespace dgrc
