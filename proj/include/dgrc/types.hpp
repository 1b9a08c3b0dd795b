#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dgrc {

// ===== problems =====

enum class ProblemKind { multiple_choice, mathematical, free_form };

struct McOption {
  std::string letter;  // single uppercase letter
  std::string text;

  bool operator==(const McOption&) const = default;
};

struct ProblemRecord {
  std::string id;
  std::string text;
  ProblemKind kind = ProblemKind::free_form;
  std::vector<McOption> options;  // multiple_choice only
  std::string domain_tag;

  bool operator==(const ProblemRecord&) const = default;
};

// Throws invalid_input unless: id and text nonempty; multiple_choice has at
// least two options with distinct single-letter labels; other kinds have none.
void validate_problem(const ProblemRecord& p);

// The text block a model is shown: problem text plus, for multiple choice,
// one "L. option" line per option.  Shared by sampling and dataset emission
// so train-time instructions match generation-time ones byte for byte.
std::string problem_prompt(const ProblemRecord& p);

// ===== answers =====

enum class AnswerKind { choice_letter, math_expression, free_text, unparseable };

struct ParsedAnswer {
  AnswerKind kind = AnswerKind::unparseable;
  std::string value;

  bool operator==(const ParsedAnswer&) const = default;
};

// ===== model responses =====

enum class Role { teacher, student };

struct TokenScore {
  std::string token;
  double logprob = 0.0;  // natural-log likelihood, <= 0

  bool operator==(const TokenScore&) const = default;
};

struct ModelResponse {
  std::string problem_id;
  Role role = Role::teacher;
  int sample_index = 0;
  std::string raw_text;
  std::string reasoning_chain;  // derived from raw_text
  ParsedAnswer final_answer;    // derived from raw_text

  bool operator==(const ModelResponse&) const = default;
};

// ===== divergence =====

enum class VerdictTier { letter, math, judge };

struct DivergentPair {
  std::string problem_id;
  int teacher_sample = 0;
  int student_sample = 0;
  VerdictTier verdict_tier = VerdictTier::letter;

  bool operator==(const DivergentPair&) const = default;
};

struct DiagnosticEntry {
  ProblemRecord problem;
  std::vector<DivergentPair> divergent_pairs;  // nonempty, sorted (t, s)
  std::vector<ModelResponse> teacher_responses;

  bool operator==(const DiagnosticEntry&) const = default;
};

// A problem whose every teacher/student pair agreed; its chain augments the
// chain curriculum directly.
struct NoDivergenceEntry {
  ProblemRecord problem;
  ModelResponse teacher_response;

  bool operator==(const NoDivergenceEntry&) const = default;
};

// A problem withdrawn from the run because some call for it failed; it is
// counted but contributes to no curriculum.
struct QuarantineEntry {
  std::string problem_id;
  std::string stage;
  std::string error_kind;
  std::string message;

  bool operator==(const QuarantineEntry&) const = default;
};

// ===== atomic pairs and the filter trail =====

enum class PairStatus { raw, ifd_rejected, sim_rejected, score_rejected, accepted };

// One optional slot per funnel stage; a value is set exactly when its stage
// ran for the pair.  ifd is always s_cond / s_direct when both are present.
struct FilterMetrics {
  std::optional<double> s_cond;
  std::optional<double> s_direct;
  std::optional<double> ifd;
  std::optional<double> max_similarity;            // [-1, 1]
  std::optional<std::array<int, 7>> dimension_scores;  // each in {0,1,2}
  std::optional<int> s_llm;                        // sum, 0..14

  bool operator==(const FilterMetrics&) const = default;
};

struct PairOrigin {
  int teacher_sample = 0;
  int student_sample = 0;

  bool operator==(const PairOrigin&) const = default;
};

struct AtomicPair {
  std::string id;          // "<problem_id>:t<k>:s<j>:q<nnn>"
  std::string problem_id;
  PairOrigin origin;
  std::string question;
  std::string answer_reasoning;
  std::string answer_final;
  FilterMetrics metrics;
  PairStatus status = PairStatus::raw;
  std::string note;  // defect or rejection detail; empty when none

  bool operator==(const AtomicPair&) const = default;
};

std::string make_pair_id(const std::string& problem_id, int teacher_sample, int student_sample,
                         int question_index);

// ===== verification =====

struct Fact {
  std::string question;
  std::string final_answer;  // no reasoning text, by construction

  bool operator==(const Fact&) const = default;
};

struct VerificationSet {
  std::string problem_id;
  std::vector<Fact> facts;

  bool operator==(const VerificationSet&) const = default;
};

struct VerifiedChain {
  std::string problem_id;
  int teacher_sample = 0;
  std::string chain;  // raw response text, tags included
  ParsedAnswer answer;
  std::string audit;  // "consistent" when checked against facts, "unaudited" when the set was empty

  bool operator==(const VerifiedChain&) const = default;
};

// ===== training records =====

struct TrainingMeta {
  std::string problem_id;
  std::string curriculum;  // "atomic" | "cot"
  std::string source;      // cot only: "verified" | "no_divergence"

  bool operator==(const TrainingMeta&) const = default;
};

struct TrainingRecord {
  std::string instruction;
  std::string output;
  TrainingMeta meta;

  bool operator==(const TrainingRecord&) const = default;
};

// ===== statistics =====

struct CurriculumStats {
  std::int64_t n_unlabeled = 0;
  std::int64_t n_divergent_problems = 0;
  std::int64_t n_no_divergence = 0;
  std::int64_t n_quarantined = 0;
  std::int64_t n_divergent_pairs = 0;
  std::int64_t n_raw_atomic = 0;
  std::int64_t n_filtered_atomic = 0;
  std::int64_t n_verified_cots = 0;
  std::int64_t n_total_cots = 0;
  double avg_tokens_atomic = 0.0;
  double avg_tokens_cot = 0.0;

  bool operator==(const CurriculumStats&) const = default;
};

// ===== enum <-> string =====

const char* to_string(ProblemKind k);
const char* to_string(AnswerKind k);
const char* to_string(Role r);
const char* to_string(VerdictTier t);
const char* to_string(PairStatus s);

ProblemKind problem_kind_from_string(const std::string& s);
AnswerKind answer_kind_from_string(const std::string& s);
Role role_from_string(const std::string& s);
VerdictTier verdict_tier_from_string(const std::string& s);
PairStatus pair_status_from_string(const std::string& s);

}  // namespace dgrc
