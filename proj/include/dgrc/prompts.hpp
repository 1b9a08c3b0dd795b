#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dgrc/types.hpp"

namespace dgrc {

// Instruction suffix appended (with a single newline) to every atomic
// question before it is answered de novo, and echoed in the atomic
// curriculum's instructions.
inline constexpr const char* kAtomicAnswerSuffix =
    "Please think carefully and then give the answer. The output format is as follows: "
    "<think> your thinking process </think><answer> your answer </answer>";

// Instruction suffix appended (with a single newline) to a problem prompt
// when sampling candidate responses, and echoed in the reasoning-chain
// curriculum's instructions.
inline constexpr const char* kEvalAnswerSuffix =
    "Please think step-by-step and then give the final result. The output format is as follows: "
    "<think> your thinking process </think><answer> The final answer should be a single capital "
    "letter. </answer>";

// The six template files, loaded once from the prompts directory.  Fill
// helpers substitute every declared {Placeholder} in a single pass, so
// substituted values are never rescanned for further placeholders.
class PromptLibrary {
 public:
  explicit PromptLibrary(const std::filesystem::path& dir);

  const std::string& conflict_judge() const { return conflict_judge_; }
  const std::string& atomic_generation() const { return atomic_generation_; }
  const std::string& cot_verification() const { return cot_verification_; }
  const std::string& quality_scoring() const { return quality_scoring_; }
  const std::string& answer_audit() const { return answer_audit_; }
  const std::string& check_rewrite() const { return check_rewrite_; }

  std::string fill_conflict_judge(const std::string& question, const std::string& answer_a,
                                  const std::string& answer_b) const;
  std::string fill_atomic_generation(const std::string& question, const std::string& reasoning_a,
                                     const std::string& reasoning_b) const;
  std::string fill_cot_verification(const std::string& question, const std::string& chain,
                                    const std::vector<Fact>& facts) const;
  // The scoring template documents its own input format; the numbered batch
  // block is appended after the template body.
  std::string fill_quality_scoring(const std::vector<std::pair<std::string, std::string>>& qa_pairs)
      const;
  std::string fill_answer_audit(const std::string& question, const std::string& answer) const;
  std::string fill_check_rewrite(const std::string& question, const std::string& chain,
                                 const std::string& prediction,
                                 const std::vector<Fact>& facts) const;

  static std::string substitute(const std::string& tmpl,
                                const std::map<std::string, std::string>& values);

 private:
  std::string conflict_judge_;
  std::string atomic_generation_;
  std::string cot_verification_;
  std::string quality_scoring_;
  std::string answer_audit_;
  std::string check_rewrite_;
};

}  // namespace dgrc
