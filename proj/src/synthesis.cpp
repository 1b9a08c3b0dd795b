#include "dgrc/synthesis.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

#include "dgrc/answer_kit.hpp"
#include "dgrc/errors.hpp"
#include "dgrc/util.hpp"

namespace dgrc {

namespace {

using nlohmann::json;

// One lenient pass shared by list and object parsing: strip fences, try as
// is, then retry on the outermost open..close span.  Returns the parsed
// value or nullopt; shape checks are the caller's job.
std::optional<json> parse_with_recovery(const std::string& completion, char open, char close) {
  std::string t = strip_fences_and_quotes(completion);
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (attempt == 1) {
      auto lo = t.find(open);
      auto hi = t.rfind(close);
      if (lo == std::string::npos || hi == std::string::npos || hi <= lo) break;
      t = t.substr(lo, hi - lo + 1);
    }
    json parsed = json::parse(t, nullptr, false);
    if (!parsed.is_discarded()) return parsed;
  }
  return std::nullopt;
}

std::string clip(const std::string& s) {
  return s.size() > 200 ? s.substr(0, 200) + "..." : s;
}

}  // namespace

// ===== atomic question generation =====

std::vector<std::string> parse_question_list(const std::string& completion) {
  auto parsed = parse_with_recovery(completion, '[', ']');
  if (!parsed || !parsed->is_array()) {
    throw Error(ErrorKind::parse_error, "expected a JSON list of questions, got: " +
                                            clip(completion));
  }
  std::vector<std::string> out;
  for (const auto& item : *parsed) {
    if (!item.is_string()) {
      throw Error(ErrorKind::parse_error,
                  "question list holds a non-string item: " + clip(completion));
    }
    std::string q = trim(item.get<std::string>());
    if (!q.empty()) out.push_back(q);
  }
  return out;
}

std::vector<std::string> generate_atomic_questions(const ProblemRecord& problem,
                                                   const DivergentPair& pair,
                                                   const std::string& teacher_chain,
                                                   const std::string& student_chain,
                                                   Gateway& teacher, const PromptLibrary& prompts) {
  if (teacher_chain.empty() || student_chain.empty()) {
    throw Error(ErrorKind::invalid_input,
                "both reasoning chains are required for " + problem.id);
  }
  std::string prompt =
      prompts.fill_atomic_generation(problem_prompt(problem), teacher_chain, student_chain);
  std::string tag = "atomicgen|" + problem.id + "|t" + std::to_string(pair.teacher_sample) + "|s" +
                    std::to_string(pair.student_sample);
  std::string completion = teacher.chat({{"user", prompt}}, tag);
  return parse_question_list(completion);
}

// ===== de novo answering =====

AtomicAnswer answer_atomic(const std::string& question, const std::string& request_tag,
                           Gateway& teacher) {
  if (question.empty()) throw Error(ErrorKind::invalid_input, "empty atomic question");
  std::string user = question + "\n" + kAtomicAnswerSuffix;
  std::string text = teacher.chat({{"user", user}}, request_tag);
  SplitResponse split = split_think_answer(text);
  if (!split.has_answer_tags) {
    throw Error(ErrorKind::format_error, "atomic answer lacks <answer> tags: " + clip(text));
  }
  return {split.reasoning, split.answer_span};
}

std::string atomic_output_text(const AtomicPair& pair) {
  return "<think>" + pair.answer_reasoning + "</think><answer>" + pair.answer_final + "</answer>";
}

// ===== verification =====

VerificationSet build_verification_set(const std::string& problem_id,
                                       const std::vector<AtomicPair>& accepted_pairs) {
  std::vector<const AtomicPair*> ordered;
  ordered.reserve(accepted_pairs.size());
  for (const auto& p : accepted_pairs) {
    if (p.problem_id != problem_id) {
      throw Error(ErrorKind::invalid_input,
                  "pair " + p.id + " does not belong to problem " + problem_id);
    }
    if (p.status != PairStatus::accepted) {
      throw Error(ErrorKind::invalid_input, "pair " + p.id + " is not accepted");
    }
    ordered.push_back(&p);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const AtomicPair* a, const AtomicPair* b) { return a->id < b->id; });
  VerificationSet vset;
  vset.problem_id = problem_id;
  for (const auto* p : ordered) vset.facts.push_back({p->question, p->answer_final});
  return vset;
}

ChainVerdict verify_chain(const ProblemRecord& problem, const ModelResponse& chain,
                          const VerificationSet& vset, Gateway& teacher,
                          const PromptLibrary& prompts) {
  if (vset.problem_id != problem.id) {
    throw Error(ErrorKind::invalid_input, "verification set belongs to " + vset.problem_id);
  }
  if (vset.facts.empty()) return {true, false};  // nothing to violate
  std::string prompt =
      prompts.fill_cot_verification(problem_prompt(problem), chain.reasoning_chain, vset.facts);
  std::string tag = "verify|" + problem.id + "|t" + std::to_string(chain.sample_index);
  std::string completion = teacher.chat({{"user", prompt}}, tag);
  return {parse_judge_verdict(completion), true};
}

VerifiedChain select_verified_chain(std::uint64_t seed, const std::string& problem_id,
                                    std::vector<VerifiedChain> candidates) {
  if (candidates.empty()) {
    throw Error(ErrorKind::no_verified_chain, "no chain survived for " + problem_id);
  }
  for (const auto& c : candidates) {
    if (c.problem_id != problem_id) {
      throw Error(ErrorKind::invalid_input, "candidate chain belongs to " + c.problem_id);
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const VerifiedChain& a, const VerifiedChain& b) {
              return a.teacher_sample < b.teacher_sample;
            });
  auto rng = seeded_rng(seed, "select|" + problem_id);
  return candidates[rng.below(candidates.size())];
}

// ===== peer correction =====

PeerCorrection peer_correct(const ProblemRecord& problem, const std::string& original_chain,
                            const std::string& original_prediction, const VerificationSet& facts,
                            Gateway& model, const PromptLibrary& prompts) {
  if (facts.facts.empty()) {
    throw Error(ErrorKind::invalid_input, "peer correction needs a nonempty fact set");
  }
  std::string prompt = prompts.fill_check_rewrite(problem_prompt(problem), original_chain,
                                                  original_prediction, facts.facts);
  std::string completion = model.chat({{"user", prompt}}, "rewrite|" + problem.id);

  if (trim(strip_fences_and_quotes(completion)) == "<No>") return {};

  auto parsed = parse_with_recovery(completion, '{', '}');
  if (parsed && parsed->is_object() && parsed->contains("Corrected_CoT") &&
      parsed->contains("Corrected_Prediction") && (*parsed)["Corrected_CoT"].is_string() &&
      (*parsed)["Corrected_Prediction"].is_string()) {
    PeerCorrection out;
    out.changed = true;
    out.corrected_chain = (*parsed)["Corrected_CoT"].get<std::string>();
    out.corrected_prediction = (*parsed)["Corrected_Prediction"].get<std::string>();
    return out;
  }
  throw Error(ErrorKind::parse_error,
              "expected <No> or {Corrected_CoT, Corrected_Prediction}, got: " + clip(completion));
}

}  // namespace dgrc
