#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dgrc/gateway.hpp"
#include "dgrc/prompts.hpp"
#include "dgrc/types.hpp"

namespace dgrc {

// ===== response splitting and answer extraction =====

struct SplitResponse {
  std::string reasoning;    // <think> span, or the text before the answer span
  std::string answer_span;  // trimmed content of the last complete <answer> span
  bool has_answer_tags = false;
};

SplitResponse split_think_answer(const std::string& raw_text);

// Content of the last balanced \boxed{...}; empty when there is none.
std::string extract_last_boxed(const std::string& text);

// Final answer per problem kind:
//   multiple_choice: first standalone option letter in the answer span
//   mathematical:    content of the last boxed marker; an unboxed nonempty
//                    span is kept as free text so the pair can still be
//                    compared downstream (judge tier) instead of being lost
//   free_form:       the whole trimmed span
// Missing tags, or no candidate in the span, yield kind=unparseable.
ParsedAnswer extract_final_answer(const std::string& raw_text, ProblemKind kind,
                                  const std::vector<McOption>& options);

ModelResponse make_model_response(const std::string& problem_id, Role role, int sample_index,
                                  const std::string& raw_text, const ProblemRecord& problem);

// ===== exact math equivalence =====

// Canonical value of a math answer string.  Grammar: integers, decimals,
// signs, \frac{a}{b}, a/b, percentages (x% = x/100), and products of those
// joined by '*', '\cdot', or '\times'.
//   rational: reduced p/q with q > 0, whenever the value fits 64 bits
//   decimal:  sign + significant digits + exponent, for plain decimal
//             literals whose exact rational lift would overflow
//   symbolic: whitespace-normalized text, for anything out of grammar
struct MathExpr {
  enum class Form { rational, decimal, symbolic };
  Form form = Form::symbolic;
  std::int64_t num = 0;
  std::int64_t den = 1;
  bool dec_negative = false;
  std::string dec_digits;  // no leading/trailing zeros
  int dec_exponent = 0;    // value = digits * 10^exponent
  std::string symbolic;
};

MathExpr parse_math_expr(const std::string& text);

// Exact equality of canonical values.  Decimals are lifted to rationals,
// never compared with an epsilon; a rational against an overflow decimal is
// settled by exact long division.
bool math_equivalent(const std::string& a, const std::string& b);

// ===== judge protocol =====

// Strict verdict parse: exact CONSISTENT / INCONSISTENT after trimming
// whitespace, code fences and surrounding quotes.  Anything else raises
// judge_protocol_error carrying the offending text.
bool parse_judge_verdict(const std::string& completion);

// Judge-tier verdicts memoized per unordered answer-value pair, so repeated
// answer texts inside one problem cost a single call.
using JudgeMemo = std::map<std::pair<std::string, std::string>, bool>;

struct JudgeContext {
  Gateway* gateway = nullptr;
  const PromptLibrary* prompts = nullptr;
  JudgeMemo* memo = nullptr;
};

struct EquivalenceVerdict {
  bool consistent = false;
  VerdictTier tier = VerdictTier::letter;
  std::string detail;
};

// Tiered conflict check.  Letter tier when both sides are choice letters,
// math tier when both are math expressions, judge tier otherwise.  Any
// unparseable side is inconsistent outright (detail "unparseable").  The
// judge always sees the teacher answer as A and the student answer as B.
EquivalenceVerdict check_conflict(const ParsedAnswer& teacher_answer,
                                  const ParsedAnswer& student_answer,
                                  const ProblemRecord& problem, const JudgeContext& judge);

}  // namespace dgrc
