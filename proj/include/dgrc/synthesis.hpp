#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgrc/gateway.hpp"
#include "dgrc/prompts.hpp"
#include "dgrc/types.hpp"

namespace dgrc {

// ===== atomic question generation =====

// Asks the teacher to contrast the two reasoning chains behind one divergent
// pair and emit the points of disagreement as a JSON list of self-contained
// questions.  The completion is parsed leniently once: strip markup fences,
// then fall back to the outermost bracketed substring; anything still not a
// list of strings raises parse_error.  Items empty after trimming are
// dropped.
std::vector<std::string> generate_atomic_questions(const ProblemRecord& problem,
                                                   const DivergentPair& pair,
                                                   const std::string& teacher_chain,
                                                   const std::string& student_chain,
                                                   Gateway& teacher, const PromptLibrary& prompts);

// Parse half of the above, exposed for tests.
std::vector<std::string> parse_question_list(const std::string& completion);

// ===== de novo answering =====

struct AtomicAnswer {
  std::string reasoning;
  std::string final_answer;
};

// Answers one atomic question in a fresh single-message conversation: the
// question plus the answer-format suffix, no problem text, no chains.
// Missing think/answer tags raise format_error (callers keep the pair as
// raw-with-defect).
AtomicAnswer answer_atomic(const std::string& question, const std::string& request_tag,
                           Gateway& teacher);

// The exact output text a pair trains on (and is quality-scored as): the
// tagged reasoning followed by the tagged final answer.
std::string atomic_output_text(const AtomicPair& pair);

// ===== verification =====

// Facts are (question, final answer) only — reasoning never leaks in.
// Pairs must all be accepted and belong to problem_id; order follows the
// lexicographic pair id, so the set is independent of filter scheduling.
VerificationSet build_verification_set(const std::string& problem_id,
                                       const std::vector<AtomicPair>& accepted_pairs);

struct ChainVerdict {
  bool consistent = false;
  bool audited = false;  // false only for the empty-fact-set bypass
};

// Audits one candidate chain against the problem's atomic facts.  An empty
// fact set cannot reject anything: the chain passes unaudited.
ChainVerdict verify_chain(const ProblemRecord& problem, const ModelResponse& chain,
                          const VerificationSet& vset, Gateway& teacher,
                          const PromptLibrary& prompts);

// Uniform choice among the surviving chains, a pure function of (seed,
// problem_id, candidates sorted by teacher_sample).  Raises
// no_verified_chain when nothing survived.
VerifiedChain select_verified_chain(std::uint64_t seed, const std::string& problem_id,
                                    std::vector<VerifiedChain> candidates);

// ===== peer correction =====

struct PeerCorrection {
  bool changed = false;
  std::string corrected_chain;       // set when changed
  std::string corrected_prediction;  // set when changed
};

// Re-audits an original chain against freshly minted facts.  "<No>" means
// the chain stands; otherwise the completion must be a two-field object
// {Corrected_CoT, Corrected_Prediction}.  Anything else raises parse_error.
PeerCorrection peer_correct(const ProblemRecord& problem, const std::string& original_chain,
                            const std::string& original_prediction, const VerificationSet& facts,
                            Gateway& model, const PromptLibrary& prompts);

}  // namespace dgrc
