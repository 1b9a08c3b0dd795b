#pragma once

#include <string>
#include <vector>

#include "dgrc/answer_kit.hpp"
#include "dgrc/gateway.hpp"
#include "dgrc/types.hpp"

namespace dgrc {

// The full user message a candidate model sees for a problem: the prompt
// block plus the evaluation instruction suffix on its own line.
std::string sampling_instruction(const ProblemRecord& problem);

// Samples n completions for the problem from one role's model, one request
// per sample, tagged "sample|<role>|<problem_id>|<index>" so scripted
// fixtures and the cache can address each draw.  Any failed sample aborts
// the whole problem (callers quarantine it); there is no partial output.
std::vector<ModelResponse> sample_responses(const ProblemRecord& problem, Role role, int n,
                                            Gateway& gateway);

// Compares every (teacher, student) response pair and returns exactly the
// conflicting ones, sorted by (teacher_sample, student_sample).  Judge-tier
// errors are rethrown with the pair coordinates attached.
std::vector<DivergentPair> detect_divergence(const std::vector<ModelResponse>& teacher,
                                             const std::vector<ModelResponse>& student,
                                             const ProblemRecord& problem,
                                             const JudgeContext& judge);

// Splits one problem's comparison outcome into a diagnostic entry (some pair
// diverged) or a no-divergence entry (every pair agreed; the first teacher
// response represents the problem in the chain curriculum).
struct DivergenceOutcome {
  std::optional<DiagnosticEntry> diagnostic;
  std::optional<NoDivergenceEntry> no_divergence;
};

DivergenceOutcome partition_outcome(const ProblemRecord& problem,
                                    const std::vector<ModelResponse>& teacher,
                                    const std::vector<DivergentPair>& pairs);

}  // namespace dgrc
