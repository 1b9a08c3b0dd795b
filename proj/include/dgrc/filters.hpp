#pragma once

#include <array>
#include <string>
#include <vector>

#include "dgrc/gateway.hpp"
#include "dgrc/prompts.hpp"
#include "dgrc/types.hpp"

namespace dgrc {

// ===== difficulty ratio =====

struct IfdScores {
  double s_cond = 0.0;    // -log P(answer | question)
  double s_direct = 0.0;  // -log P(answer), empty context
  double ifd = 0.0;       // s_cond / s_direct
};

// Scores the pair's full tagged answer text twice — once conditioned on the
// bare question, once unconditionally — and forms the ratio.  A zero
// unconditional score makes the ratio meaningless: degenerate_score.
IfdScores ifd_score(const std::string& question, const std::string& answer_text, Gateway& scorer);

// Stage-facing wrapper: scores one answered pair and records the raw scores
// on its metrics.  A degenerate (zero) unconditional score marks the pair
// ifd_rejected instead of throwing, so the funnel can keep the evidence.
void apply_ifd(AtomicPair& pair, Gateway& scorer);

struct FilterSplit {
  std::vector<AtomicPair> retained;
  std::vector<AtomicPair> rejected;
};

// Inclusive band keep: tau_low <= ifd <= tau_high stays in the funnel.
// Pairs already marked ifd_rejected (degenerate score) pass straight to the
// rejected side; everything else must carry an ifd value.
FilterSplit ifd_filter(std::vector<AtomicPair> pairs, double tau_low, double tau_high);

// ===== similarity dedup =====

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// The text a pair is embedded as: question, one space, final answer.
std::string embedding_text(const AtomicPair& pair);

// Near-duplicate removal within one source problem.  Greedy: while any
// surviving duo has cosine >= tau_sim, take the highest-similarity duo
// (ties by lexicographic id pair) and drop the member whose ifd sits
// further from 1 (ties drop the larger id).  Each pair's max_similarity
// metric records its highest cosine against the other pairs of the initial
// set; it stays unset when the pair arrived alone.
FilterSplit similarity_dedup(std::vector<AtomicPair> pairs, double tau_sim, Gateway& embedder);

// ===== judge scoring =====

inline constexpr std::array<const char*, 7> kScoreDimensions = {
    "Clarity",   "Completeness",       "Structure",  "Credibility",
    "Knowledge Richness", "Logicality", "Instruction Following"};

// One scoring call for one batch.  The completion must be a JSON array with
// exactly one object per pair, each holding all seven dimension keys with
// values in {0,1,2}: wrong length (or no array at all) raises
// alignment_error, bad keys or values raise score_range_error.
std::vector<std::array<int, 7>> llm_quality_score(const std::vector<AtomicPair>& batch,
                                                  const std::string& request_tag, Gateway& teacher,
                                                  const PromptLibrary& prompts);

// Batches one problem's pairs (preserving order) into calls of at most
// batch_size, tagged "quality|<problem_id>|b<i>".  A failed batch is split
// in half and each half retried once under tags "….0" / "….1"; pairs in a
// half that fails again are marked score_rejected with the error kind in
// their note.  Successfully scored pairs carry dimension_scores and s_llm.
std::vector<AtomicPair> score_pairs(std::vector<AtomicPair> pairs, const std::string& problem_id,
                                    int batch_size, Gateway& teacher,
                                    const PromptLibrary& prompts);

// Status split on the score sum: s_llm >= tau_llm is accepted (equality
// retained), below is score_rejected.  Pairs that arrived score_rejected
// (scoring failure) pass through unchanged.
FilterSplit apply_quality_threshold(std::vector<AtomicPair> pairs, int tau_llm);

// ===== independent answer audit =====

struct AuditResult {
  bool valid = false;
  std::string reasoning;
};

// Asks the judge to grade one accepted fact from its own knowledge.  The
// completion must be a {"reasoning", "verdict"} object with verdict exactly
// "Valid" or "Invalid"; anything else raises parse_error.
AuditResult audit_atomic(const AtomicPair& pair, Gateway& judge, const PromptLibrary& prompts);

}  // namespace dgrc
