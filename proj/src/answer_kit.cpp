#include "dgrc/answer_kit.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "dgrc/errors.hpp"
#include "dgrc/util.hpp"

namespace dgrc {

// ===== response splitting =====

namespace {

// Last complete <open>...</close> span; npos-pair when absent.
std::pair<std::size_t, std::size_t> last_span(const std::string& text, const std::string& open,
                                              const std::string& close) {
  std::size_t close_pos = text.rfind(close);
  if (close_pos == std::string::npos) return {std::string::npos, std::string::npos};
  std::size_t open_pos = text.rfind(open, close_pos);
  if (open_pos == std::string::npos) return {std::string::npos, std::string::npos};
  return {open_pos, close_pos};
}

}  // namespace

SplitResponse split_think_answer(const std::string& raw_text) {
  SplitResponse out;
  auto [a_open, a_close] = last_span(raw_text, "<answer>", "</answer>");
  if (a_open != std::string::npos) {
    out.has_answer_tags = true;
    std::size_t content = a_open + 8;  // len("<answer>")
    out.answer_span = trim(raw_text.substr(content, a_close - content));
  }
  auto [t_open, t_close] = last_span(raw_text, "<think>", "</think>");
  if (t_open != std::string::npos) {
    std::size_t content = t_open + 7;  // len("<think>")
    out.reasoning = trim(raw_text.substr(content, t_close - content));
  } else if (out.has_answer_tags) {
    out.reasoning = trim(raw_text.substr(0, a_open));
  } else {
    out.reasoning = trim(raw_text);
  }
  return out;
}

std::string extract_last_boxed(const std::string& text) {
  const std::string marker = "\\boxed{";
  std::size_t pos = text.rfind(marker);
  if (pos == std::string::npos) return "";
  std::size_t i = pos + marker.size();
  int depth = 1;
  std::size_t start = i;
  while (i < text.size()) {
    if (text[i] == '{') {
      ++depth;
    } else if (text[i] == '}') {
      if (--depth == 0) return trim(text.substr(start, i - start));
    }
    ++i;
  }
  return "";  // unbalanced
}

ParsedAnswer extract_final_answer(const std::string& raw_text, ProblemKind kind,
                                  const std::vector<McOption>& options) {
  SplitResponse split = split_think_answer(raw_text);
  if (!split.has_answer_tags) return {AnswerKind::unparseable, ""};
  const std::string& span = split.answer_span;

  if (kind == ProblemKind::multiple_choice) {
    std::string letters;
    for (const auto& o : options) letters += o.letter;
    if (letters.empty()) letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    for (std::size_t i = 0; i < span.size(); ++i) {
      char c = span[i];
      if (letters.find(c) == std::string::npos) continue;
      bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(span[i - 1]));
      bool right_ok = i + 1 == span.size() || !std::isalnum(static_cast<unsigned char>(span[i + 1]));
      if (left_ok && right_ok) return {AnswerKind::choice_letter, std::string(1, c)};
    }
    return {AnswerKind::unparseable, ""};
  }

  if (kind == ProblemKind::mathematical) {
    std::string boxed = extract_last_boxed(span);
    if (!boxed.empty()) return {AnswerKind::math_expression, boxed};
    // A bare value without the boxed marker still carries information;
    // keep it as free text so the conflict check can route it to the judge.
    if (!span.empty()) return {AnswerKind::free_text, span};
    return {AnswerKind::unparseable, ""};
  }

  if (span.empty()) return {AnswerKind::unparseable, ""};
  return {AnswerKind::free_text, span};
}

ModelResponse make_model_response(const std::string& problem_id, Role role, int sample_index,
                                  const std::string& raw_text, const ProblemRecord& problem) {
  ModelResponse r;
  r.problem_id = problem_id;
  r.role = role;
  r.sample_index = sample_index;
  r.raw_text = raw_text;
  SplitResponse split = split_think_answer(raw_text);
  r.reasoning_chain = split.reasoning;
  r.final_answer = extract_final_answer(raw_text, problem.kind, problem.options);
  return r;
}

// ===== exact math equivalence =====

namespace {

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

bool mul_overflows(std::int64_t a, std::int64_t b, std::int64_t& out) {
  __int128 r = static_cast<__int128>(a) * b;
  if (r > INT64_MAX || r < INT64_MIN) return true;
  out = static_cast<std::int64_t>(r);
  return false;
}

Rational reduce(Rational r) {
  if (r.den < 0) {
    r.num = -r.num;
    r.den = -r.den;
  }
  std::int64_t g = std::gcd(r.num < 0 ? -r.num : r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  if (r.num == 0) r.den = 1;
  return r;
}

// a * b with reduction; false on 64-bit overflow.
bool rat_mul(const Rational& a, const Rational& b, Rational& out) {
  Rational x = reduce({a.num, b.den});
  Rational y = reduce({b.num, a.den});
  Rational r;
  if (mul_overflows(x.num, y.num, r.num)) return false;
  if (mul_overflows(x.den, y.den, r.den)) return false;
  out = reduce(r);
  return true;
}

bool rat_div(const Rational& a, const Rational& b, Rational& out) {
  if (b.num == 0) return false;
  return rat_mul(a, {b.den, b.num}, out);
}

struct Parser {
  const std::string& s;
  std::size_t pos = 0;

  explicit Parser(const std::string& text) : s(text) {}

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  bool eat_word(const char* w) {
    skip_ws();
    std::size_t n = std::char_traits<char>::length(w);
    if (s.compare(pos, n, w) == 0) {
      pos += n;
      return true;
    }
    return false;
  }

  // digits '.' digits style literal; overflow_decimal set when the exact
  // lift does not fit 64 bits
  bool parse_number(Rational& out, bool& overflow_decimal, std::string& int_digits,
                    std::string& frac_digits) {
    skip_ws();
    std::size_t start = pos;
    int_digits.clear();
    frac_digits.clear();
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      int_digits.push_back(s[pos++]);
    }
    bool has_dot = pos < s.size() && s[pos] == '.';
    if (has_dot) {
      ++pos;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        frac_digits.push_back(s[pos++]);
      }
    }
    if (int_digits.empty() && frac_digits.empty()) {
      pos = start;
      return false;
    }
    // canonical: trailing fraction zeros carry no value
    while (!frac_digits.empty() && frac_digits.back() == '0') frac_digits.pop_back();
    overflow_decimal = false;
    std::int64_t value = 0;
    for (char c : int_digits) {
      if (mul_overflows(value, 10, value) || value > INT64_MAX - (c - '0')) {
        overflow_decimal = true;
        return true;
      }
      value += c - '0';
    }
    std::int64_t num = value, den = 1;
    for (char c : frac_digits) {
      if (mul_overflows(num, 10, num) || mul_overflows(den, 10, den) ||
          num > INT64_MAX - (c - '0')) {
        overflow_decimal = true;
        return true;
      }
      num += c - '0';
    }
    out = reduce({num, den});
    return true;
  }

  int parse_sign() {
    int sign = 1;
    for (;;) {
      skip_ws();
      if (pos < s.size() && s[pos] == '-') {
        sign = -sign;
        ++pos;
      } else if (pos < s.size() && s[pos] == '+') {
        ++pos;
      } else {
        return sign;
      }
    }
  }
};

struct ParsedValue {
  bool ok = false;
  bool overflow = false;  // plain decimal literal too wide for 64 bits
  Rational value;
  bool negative = false;
  std::string int_digits, frac_digits;
};

// signed number, with optional nested \frac / a/b handled by caller
ParsedValue parse_signed_number(Parser& p) {
  ParsedValue v;
  int sign = p.parse_sign();
  bool overflow = false;
  Rational r;
  if (!p.parse_number(r, overflow, v.int_digits, v.frac_digits)) return v;
  v.ok = true;
  v.overflow = overflow;
  v.negative = sign < 0;
  if (!overflow) {
    r.num *= sign;
    v.value = r;
  }
  return v;
}

// term := sign ( \frac{num}{num} | number ( '/' signed-number )? ) '%'?
ParsedValue parse_term(Parser& p) {
  ParsedValue out;
  int sign = p.parse_sign();
  Rational r;

  p.skip_ws();
  if (p.eat_word("\\frac")) {
    if (!p.eat('{')) return out;
    ParsedValue a = parse_signed_number(p);
    if (!a.ok || a.overflow || !p.eat('}')) return out;
    if (!p.eat('{')) return out;
    ParsedValue b = parse_signed_number(p);
    if (!b.ok || b.overflow || !p.eat('}')) return out;
    if (!rat_div(a.value, b.value, r)) return out;
  } else {
    ParsedValue a = parse_signed_number(p);
    if (!a.ok) return out;
    if (a.overflow) {
      // Only a lone bare literal may survive as a canonical decimal.
      out.ok = true;
      out.overflow = true;
      out.negative = (sign < 0) != a.negative;
      out.int_digits = a.int_digits;
      out.frac_digits = a.frac_digits;
      return out;
    }
    r = a.value;
    p.skip_ws();
    if (p.pos < p.s.size() && p.s[p.pos] == '/') {
      ++p.pos;
      ParsedValue b = parse_signed_number(p);
      if (!b.ok || b.overflow) return out;
      if (!rat_div(r, b.value, r)) return out;
    }
  }

  p.skip_ws();
  if (p.pos < p.s.size() && p.s[p.pos] == '%') {
    ++p.pos;
    if (!rat_div(r, {100, 1}, r)) return out;
  }
  if (sign < 0) r.num = -r.num;
  out.ok = true;
  out.value = r;
  return out;
}

std::string normalize_symbolic(const std::string& text) {
  std::string out;
  bool in_token = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_token = false;
    } else {
      if (!in_token && !out.empty()) out.push_back(' ');
      out.push_back(c);
      in_token = true;
    }
  }
  return out;
}

MathExpr symbolic_expr(const std::string& text) {
  MathExpr e;
  e.form = MathExpr::Form::symbolic;
  e.symbolic = normalize_symbolic(text);
  return e;
}

// Canonical decimal from a literal's digit strings: value = digits * 10^exp
// with no leading or trailing zeros in digits.
MathExpr decimal_expr(bool negative, const std::string& int_digits,
                      const std::string& frac_digits) {
  std::string digits = int_digits + frac_digits;
  int exponent = -static_cast<int>(frac_digits.size());
  std::size_t lead = 0;
  while (lead < digits.size() && digits[lead] == '0') ++lead;
  digits = digits.substr(lead);
  while (!digits.empty() && digits.back() == '0') {
    digits.pop_back();
    ++exponent;
  }
  MathExpr e;
  if (digits.empty()) {  // literal zero; always fits as a rational
    e.form = MathExpr::Form::rational;
    e.num = 0;
    e.den = 1;
    return e;
  }
  e.form = MathExpr::Form::decimal;
  e.dec_negative = negative;
  e.dec_digits = digits;
  e.dec_exponent = exponent;
  return e;
}

}  // namespace

MathExpr parse_math_expr(const std::string& text) {
  std::string t = trim(text);
  if (t.empty()) return symbolic_expr(t);

  Parser p(t);
  ParsedValue acc = parse_term(p);
  if (!acc.ok) return symbolic_expr(t);

  if (acc.overflow) {
    // an overflowing literal is canonical only when it is the whole input
    p.skip_ws();
    if (p.pos != t.size()) return symbolic_expr(t);
    return decimal_expr(acc.negative, acc.int_digits, acc.frac_digits);
  }

  Rational value = acc.value;
  for (;;) {
    p.skip_ws();
    if (p.pos == t.size()) break;
    bool mult = false;
    if (p.eat('*')) {
      mult = true;
    } else if (p.eat_word("\\cdot") || p.eat_word("\\times")) {
      mult = true;
    }
    if (!mult) return symbolic_expr(t);
    ParsedValue rhs = parse_term(p);
    if (!rhs.ok || rhs.overflow) return symbolic_expr(t);
    if (!rat_mul(value, rhs.value, value)) return symbolic_expr(t);
  }

  MathExpr e;
  e.form = MathExpr::Form::rational;
  e.num = value.num;
  e.den = value.den;
  return e;
}

namespace {

// Exact finite decimal expansion of p/q by long division; nullopt when the
// expansion does not terminate.  Returns (negative, digits, exponent) in
// the same canonical shape as decimal_expr.
struct CanonDecimal {
  bool negative;
  std::string digits;
  int exponent;
};

std::optional<CanonDecimal> rational_as_decimal(std::int64_t num, std::int64_t den) {
  bool negative = num < 0;
  unsigned long long n = negative ? -static_cast<unsigned long long>(num) : num;
  unsigned long long d = den;
  // terminates iff den = 2^a * 5^b
  unsigned long long probe = d;
  while (probe % 2 == 0) probe /= 2;
  while (probe % 5 == 0) probe /= 5;
  if (probe != 1) return std::nullopt;

  std::string digits;
  int exponent = 0;
  unsigned long long whole = n / d;
  unsigned long long rem = n % d;
  digits = std::to_string(whole);
  while (rem != 0) {
    // rem/d is the remaining fraction; reducing it leaves the digit stream
    // intact, and the 128-bit product keeps rem*10 exact for any 64-bit d.
    while (rem % 2 == 0 && d % 2 == 0) {
      rem /= 2;
      d /= 2;
    }
    while (rem % 5 == 0 && d % 5 == 0) {
      rem /= 5;
      d /= 5;
    }
    if (rem == 0) break;
    unsigned __int128 r10 = static_cast<unsigned __int128>(rem) * 10;
    digits.push_back(static_cast<char>('0' + static_cast<unsigned long long>(r10 / d)));
    rem = static_cast<unsigned long long>(r10 % d);
    --exponent;
  }
  std::size_t lead = 0;
  while (lead + 1 < digits.size() && digits[lead] == '0') ++lead;
  digits = digits.substr(lead);
  while (!digits.empty() && digits.back() == '0') {
    digits.pop_back();
    ++exponent;
  }
  if (digits.empty()) return CanonDecimal{false, "", 0};  // zero
  return CanonDecimal{negative, digits, exponent};
}

}  // namespace

bool math_equivalent(const std::string& a, const std::string& b) {
  MathExpr ea = parse_math_expr(a);
  MathExpr eb = parse_math_expr(b);
  using Form = MathExpr::Form;

  if (ea.form == Form::rational && eb.form == Form::rational) {
    return ea.num == eb.num && ea.den == eb.den;  // both reduced
  }
  if (ea.form == Form::decimal && eb.form == Form::decimal) {
    return ea.dec_negative == eb.dec_negative && ea.dec_digits == eb.dec_digits &&
           ea.dec_exponent == eb.dec_exponent;
  }
  if (ea.form == Form::symbolic || eb.form == Form::symbolic) {
    if (ea.form != eb.form) return false;
    return ea.symbolic == eb.symbolic;
  }
  // rational vs overflow decimal: settle exactly via long division
  const MathExpr& rat = ea.form == Form::rational ? ea : eb;
  const MathExpr& dec = ea.form == Form::rational ? eb : ea;
  auto expansion = rational_as_decimal(rat.num, rat.den);
  if (!expansion) return false;
  if (expansion->digits.empty()) return false;  // zero never overflows
  return expansion->negative == dec.dec_negative && expansion->digits == dec.dec_digits &&
         expansion->exponent == dec.dec_exponent;
}

// ===== judge protocol =====

bool parse_judge_verdict(const std::string& completion) {
  std::string t = strip_fences_and_quotes(completion);
  if (t == "CONSISTENT") return true;
  if (t == "INCONSISTENT") return false;
  std::string shown = completion.size() > 200 ? completion.substr(0, 200) + "..." : completion;
  throw Error(ErrorKind::judge_protocol_error, "expected CONSISTENT or INCONSISTENT, got: " + shown);
}

EquivalenceVerdict check_conflict(const ParsedAnswer& teacher_answer,
                                  const ParsedAnswer& student_answer,
                                  const ProblemRecord& problem, const JudgeContext& judge) {
  if (teacher_answer.kind == AnswerKind::unparseable ||
      student_answer.kind == AnswerKind::unparseable) {
    return {false, VerdictTier::letter, "unparseable"};
  }
  if (teacher_answer.kind == AnswerKind::choice_letter &&
      student_answer.kind == AnswerKind::choice_letter) {
    bool same = teacher_answer.value == student_answer.value;
    return {same, VerdictTier::letter, same ? "same letter" : "different letters"};
  }
  if (teacher_answer.kind == AnswerKind::math_expression &&
      student_answer.kind == AnswerKind::math_expression) {
    bool same = math_equivalent(teacher_answer.value, student_answer.value);
    return {same, VerdictTier::math, same ? "equivalent values" : "distinct values"};
  }

  if (!judge.gateway || !judge.prompts) {
    throw Error(ErrorKind::invalid_input,
                "judge tier required for problem " + problem.id + " but no judge is configured");
  }
  auto memo_key = std::make_pair(std::min(teacher_answer.value, student_answer.value),
                                 std::max(teacher_answer.value, student_answer.value));
  if (judge.memo) {
    auto it = judge.memo->find(memo_key);
    if (it != judge.memo->end()) {
      return {it->second, VerdictTier::judge, "memoized judge verdict"};
    }
  }
  std::string prompt = judge.prompts->fill_conflict_judge(
      problem_prompt(problem), teacher_answer.value, student_answer.value);
  std::string tag = "conflict|" + problem.id + "|" +
                    sha256_hex(teacher_answer.value).substr(0, 12) + "|" +
                    sha256_hex(student_answer.value).substr(0, 12);
  std::string completion = judge.gateway->chat({{"user", prompt}}, tag);
  bool consistent = parse_judge_verdict(completion);
  if (judge.memo) (*judge.memo)[memo_key] = consistent;
  return {consistent, VerdictTier::judge, "judge verdict"};
}

}  // namespace dgrc
