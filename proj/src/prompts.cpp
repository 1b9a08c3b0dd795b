#include "dgrc/prompts.hpp"

#include <sstream>

#include "dgrc/errors.hpp"
#include "dgrc/util.hpp"

namespace dgrc {

namespace {

std::string load_template(const std::filesystem::path& dir, const char* name) {
  std::filesystem::path p = dir / name;
  if (!std::filesystem::exists(p)) {
    throw Error(ErrorKind::invalid_config, "missing prompt template: " + p.string());
  }
  return read_file(p);
}

// Numbered fact list, the shape the verification template's Atomic Facts
// slot expects.
std::string fact_block(const std::vector<Fact>& facts) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    ss << "Q" << (i + 1) << ": " << facts[i].question << "\n";
    ss << "A" << (i + 1) << ": " << facts[i].final_answer;
    if (i + 1 < facts.size()) ss << "\n";
  }
  return ss.str();
}

}  // namespace

PromptLibrary::PromptLibrary(const std::filesystem::path& dir)
    : conflict_judge_(load_template(dir, "answer_conflict_judge.txt")),
      atomic_generation_(load_template(dir, "atomic_question_generation.txt")),
      cot_verification_(load_template(dir, "cot_verification.txt")),
      quality_scoring_(load_template(dir, "qa_quality_scoring.txt")),
      answer_audit_(load_template(dir, "atomic_answer_audit.txt")),
      check_rewrite_(load_template(dir, "chain_check_rewrite.txt")) {}

std::string PromptLibrary::substitute(const std::string& tmpl,
                                      const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    std::size_t open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    std::size_t close = tmpl.find('}', open + 1);
    if (close == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    std::string token = tmpl.substr(open + 1, close - open - 1);
    auto it = values.find(token);
    if (it != values.end()) {
      out.append(tmpl, pos, open - pos);
      out.append(it->second);
      pos = close + 1;
    } else {
      out.append(tmpl, pos, open + 1 - pos);
      pos = open + 1;
    }
  }
  return out;
}

std::string PromptLibrary::fill_conflict_judge(const std::string& question,
                                               const std::string& answer_a,
                                               const std::string& answer_b) const {
  return substitute(conflict_judge_, {{"Your_Question_Here", question},
                                      {"Your_Answer_A_Here", answer_a},
                                      {"Your_Answer_B_Here", answer_b}});
}

std::string PromptLibrary::fill_atomic_generation(const std::string& question,
                                                  const std::string& reasoning_a,
                                                  const std::string& reasoning_b) const {
  return substitute(atomic_generation_, {{"Your_Original_Question_Here", question},
                                         {"Reasoning_Process_A_Here", reasoning_a},
                                         {"Reasoning_Process_B_Here", reasoning_b}});
}

std::string PromptLibrary::fill_cot_verification(const std::string& question,
                                                 const std::string& chain,
                                                 const std::vector<Fact>& facts) const {
  return substitute(cot_verification_, {{"Your_Original_Question_Here", question},
                                        {"Reasoning_Chain_to_Verify_Here", chain},
                                        {"List_of_Atomic_Q&As", fact_block(facts)}});
}

std::string PromptLibrary::fill_quality_scoring(
    const std::vector<std::pair<std::string, std::string>>& qa_pairs) const {
  std::ostringstream ss;
  ss << quality_scoring_;
  if (!quality_scoring_.empty() && quality_scoring_.back() != '\n') ss << "\n";
  ss << "\n";
  for (std::size_t i = 0; i < qa_pairs.size(); ++i) {
    ss << "## Q&A Pair " << (i + 1) << ":\n";
    ss << "Question: " << qa_pairs[i].first << "\n";
    ss << "Answer: " << qa_pairs[i].second << "\n";
  }
  return ss.str();
}

std::string PromptLibrary::fill_answer_audit(const std::string& question,
                                             const std::string& answer) const {
  return substitute(answer_audit_, {{"atomic_question", question}, {"atomic_answer", answer}});
}

std::string PromptLibrary::fill_check_rewrite(const std::string& question,
                                              const std::string& chain,
                                              const std::string& prediction,
                                              const std::vector<Fact>& facts) const {
  std::ostringstream data;
  data << "[Question Start] " << question << " [Question End]\n";
  data << "[Original CoT Start] " << chain << " [Original CoT End]\n";
  data << "[Original Prediction Start] " << prediction << " [Original Prediction End]";
  for (std::size_t i = 0; i < facts.size(); ++i) {
    data << "\n[Context Question " << (i + 1) << " Start] " << facts[i].question
         << " [Context Question " << (i + 1) << " End]";
    data << "\n[Context Answer " << (i + 1) << " Start] " << facts[i].final_answer
         << " [Context Answer " << (i + 1) << " End]";
  }
  return substitute(check_rewrite_, {{"prompt", data.str()}});
}

}  // namespace dgrc
