#include "dgrc/types.hpp"

#include <set>
#include <sstream>

#include "dgrc/errors.hpp"

namespace dgrc {

void validate_problem(const ProblemRecord& p) {
  if (p.id.empty()) throw Error(ErrorKind::invalid_input, "problem id must be nonempty");
  if (p.text.empty()) {
    throw Error(ErrorKind::invalid_input, "problem " + p.id + ": text must be nonempty");
  }
  if (p.kind == ProblemKind::multiple_choice) {
    if (p.options.size() < 2) {
      throw Error(ErrorKind::invalid_input,
                  "problem " + p.id + ": multiple_choice needs at least 2 options");
    }
    std::set<std::string> seen;
    for (const auto& o : p.options) {
      if (o.letter.size() != 1 || o.letter[0] < 'A' || o.letter[0] > 'Z') {
        throw Error(ErrorKind::invalid_input,
                    "problem " + p.id + ": option letter must be a single uppercase letter");
      }
      if (!seen.insert(o.letter).second) {
        throw Error(ErrorKind::invalid_input,
                    "problem " + p.id + ": duplicate option letter " + o.letter);
      }
    }
  } else if (!p.options.empty()) {
    throw Error(ErrorKind::invalid_input,
                "problem " + p.id + ": options are only valid for multiple_choice");
  }
}

std::string problem_prompt(const ProblemRecord& p) {
  std::string out = p.text;
  for (const auto& o : p.options) {
    out += "\n";
    out += o.letter;
    out += ". ";
    out += o.text;
  }
  return out;
}

std::string make_pair_id(const std::string& problem_id, int teacher_sample, int student_sample,
                         int question_index) {
  std::ostringstream ss;
  ss << problem_id << ":t" << teacher_sample << ":s" << student_sample << ":q";
  std::string q = std::to_string(question_index);
  for (std::size_t i = q.size(); i < 3; ++i) ss << '0';
  ss << q;
  return ss.str();
}

// ===== enum <-> string =====

const char* to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::multiple_choice: return "multiple_choice";
    case ProblemKind::mathematical: return "mathematical";
    case ProblemKind::free_form: return "free_form";
  }
  return "free_form";
}

const char* to_string(AnswerKind k) {
  switch (k) {
    case AnswerKind::choice_letter: return "choice_letter";
    case AnswerKind::math_expression: return "math_expression";
    case AnswerKind::free_text: return "free_text";
    case AnswerKind::unparseable: return "unparseable";
  }
  return "unparseable";
}

const char* to_string(Role r) {
  return r == Role::teacher ? "teacher" : "student";
}

const char* to_string(VerdictTier t) {
  switch (t) {
    case VerdictTier::letter: return "letter";
    case VerdictTier::math: return "math";
    case VerdictTier::judge: return "judge";
  }
  return "letter";
}

const char* to_string(PairStatus s) {
  switch (s) {
    case PairStatus::raw: return "raw";
    case PairStatus::ifd_rejected: return "ifd_rejected";
    case PairStatus::sim_rejected: return "sim_rejected";
    case PairStatus::score_rejected: return "score_rejected";
    case PairStatus::accepted: return "accepted";
  }
  return "raw";
}

namespace {
[[noreturn]] void bad_enum(const char* what, const std::string& s) {
  throw Error(ErrorKind::invalid_input, std::string("unknown ") + what + ": " + s);
}
}  // namespace

ProblemKind problem_kind_from_string(const std::string& s) {
  if (s == "multiple_choice") return ProblemKind::multiple_choice;
  if (s == "mathematical") return ProblemKind::mathematical;
  if (s == "free_form") return ProblemKind::free_form;
  bad_enum("problem kind", s);
}

AnswerKind answer_kind_from_string(const std::string& s) {
  if (s == "choice_letter") return AnswerKind::choice_letter;
  if (s == "math_expression") return AnswerKind::math_expression;
  if (s == "free_text") return AnswerKind::free_text;
  if (s == "unparseable") return AnswerKind::unparseable;
  bad_enum("answer kind", s);
}

Role role_from_string(const std::string& s) {
  if (s == "teacher") return Role::teacher;
  if (s == "student") return Role::student;
  bad_enum("role", s);
}

VerdictTier verdict_tier_from_string(const std::string& s) {
  if (s == "letter") return VerdictTier::letter;
  if (s == "math") return VerdictTier::math;
  if (s == "judge") return VerdictTier::judge;
  bad_enum("verdict tier", s);
}

PairStatus pair_status_from_string(const std::string& s) {
  if (s == "raw") return PairStatus::raw;
  if (s == "ifd_rejected") return PairStatus::ifd_rejected;
  if (s == "sim_rejected") return PairStatus::sim_rejected;
  if (s == "score_rejected") return PairStatus::score_rejected;
  if (s == "accepted") return PairStatus::accepted;
  bad_enum("pair status", s);
}

}  // namespace dgrc
