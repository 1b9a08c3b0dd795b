#include "dgrc/divergence.hpp"

#include "dgrc/errors.hpp"
#include "dgrc/prompts.hpp"

namespace dgrc {

std::string sampling_instruction(const ProblemRecord& problem) {
  return problem_prompt(problem) + "\n" + kEvalAnswerSuffix;
}

std::vector<ModelResponse> sample_responses(const ProblemRecord& problem, Role role, int n,
                                            Gateway& gateway) {
  if (n < 1) throw Error(ErrorKind::invalid_input, "sample count must be >= 1");
  std::string instruction = sampling_instruction(problem);
  std::vector<ModelResponse> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::string tag =
        "sample|" + std::string(to_string(role)) + "|" + problem.id + "|" + std::to_string(i);
    std::string text = gateway.chat({{"user", instruction}}, tag);
    out.push_back(make_model_response(problem.id, role, i, text, problem));
  }
  return out;
}

std::vector<DivergentPair> detect_divergence(const std::vector<ModelResponse>& teacher,
                                             const std::vector<ModelResponse>& student,
                                             const ProblemRecord& problem,
                                             const JudgeContext& judge) {
  if (teacher.empty() || student.empty()) {
    throw Error(ErrorKind::invalid_input, "divergence detection needs responses from both roles");
  }
  for (const auto& r : teacher) {
    if (r.problem_id != problem.id) {
      throw Error(ErrorKind::invalid_input, "teacher response for foreign problem " + r.problem_id);
    }
  }
  for (const auto& r : student) {
    if (r.problem_id != problem.id) {
      throw Error(ErrorKind::invalid_input, "student response for foreign problem " + r.problem_id);
    }
  }

  std::vector<DivergentPair> pairs;
  for (std::size_t k = 0; k < teacher.size(); ++k) {
    for (std::size_t j = 0; j < student.size(); ++j) {
      EquivalenceVerdict verdict;
      try {
        verdict = check_conflict(teacher[k].final_answer, student[j].final_answer, problem, judge);
      } catch (const Error& e) {
        throw Error(e.kind(), "pair (t" + std::to_string(k) + ", s" + std::to_string(j) +
                                  ") of problem " + problem.id + ": " + e.message());
      }
      if (!verdict.consistent) {
        pairs.push_back({problem.id, static_cast<int>(k), static_cast<int>(j), verdict.tier});
      }
    }
  }
  // Row-major construction already orders by (teacher_sample, student_sample).
  return pairs;
}

DivergenceOutcome partition_outcome(const ProblemRecord& problem,
                                    const std::vector<ModelResponse>& teacher,
                                    const std::vector<DivergentPair>& pairs) {
  DivergenceOutcome out;
  if (!pairs.empty()) {
    out.diagnostic = DiagnosticEntry{problem, pairs, teacher};
  } else {
    if (teacher.empty()) {
      throw Error(ErrorKind::invalid_input, "no teacher response to carry for " + problem.id);
    }
    out.no_divergence = NoDivergenceEntry{problem, teacher.front()};
  }
  return out;
}

}  // namespace dgrc
