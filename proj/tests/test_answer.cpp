#include <doctest.h>

#include <memory>
#include <string>
#include <vector>

#include "dgrc/answer_kit.hpp"
#include "dgrc/errors.hpp"
#include "dgrc/gateway.hpp"
#include "dgrc/mock_provider.hpp"
#include "dgrc/prompts.hpp"
#include "dgrc/util.hpp"
#include "test_support.hpp"

using namespace dgrc;
using namespace dgrc::test;

namespace {

const std::vector<McOption> kAbcd = mc_problem("p").options;

ParsedAnswer mc_answer(const std::string& span) {
  return extract_final_answer("<answer>" + span + "</answer>", ProblemKind::multiple_choice, kAbcd);
}

ParsedAnswer math_answer(const std::string& span) {
  return extract_final_answer("<answer>" + span + "</answer>", ProblemKind::mathematical, {});
}

}  // namespace

TEST_CASE("splitting takes the last complete answer span") {
  SplitResponse r = split_think_answer("<think>steps</think><answer> B </answer>");
  CHECK(r.has_answer_tags);
  CHECK(r.answer_span == "B");
  CHECK(r.reasoning == "steps");

  r = split_think_answer("<answer>first</answer> more <answer>second</answer>");
  CHECK(r.answer_span == "second");

  // an opening tag with no closing tag is not a span
  r = split_think_answer("<answer>dangling");
  CHECK_FALSE(r.has_answer_tags);
  CHECK(r.answer_span.empty());

  r = split_think_answer("stray close</answer>");
  CHECK_FALSE(r.has_answer_tags);
}

TEST_CASE("reasoning falls back from think span to leading text") {
  // no think tags: everything before the answer span is the reasoning
  SplitResponse r = split_think_answer("  worked it out  <answer>C</answer>");
  CHECK(r.reasoning == "worked it out");
  CHECK(r.answer_span == "C");

  // neither tag: the whole trimmed text is the reasoning
  r = split_think_answer("  just prose  ");
  CHECK_FALSE(r.has_answer_tags);
  CHECK(r.reasoning == "just prose");
  CHECK(r.answer_span.empty());

  // think after answer still counts; last think span wins
  r = split_think_answer("<think>a</think><think>b</think><answer>D</answer>");
  CHECK(r.reasoning == "b");
}

TEST_CASE("boxed extraction matches braces and takes the last marker") {
  CHECK(extract_last_boxed("so \\boxed{42}") == "42");
  CHECK(extract_last_boxed("\\boxed{ 42 }") == "42");
  CHECK(extract_last_boxed("\\boxed{\\frac{1}{2}}") == "\\frac{1}{2}");
  CHECK(extract_last_boxed("\\boxed{a{b{c}}d}") == "a{b{c}}d");
  CHECK(extract_last_boxed("\\boxed{1} then \\boxed{2}") == "2");
  CHECK(extract_last_boxed("no marker") == "");
  CHECK(extract_last_boxed("\\boxed{never closed") == "");
  CHECK(extract_last_boxed("\\boxed{}") == "");
}

TEST_CASE("multiple choice extraction finds the first standalone option letter") {
  CHECK(mc_answer("B") == ParsedAnswer{AnswerKind::choice_letter, "B"});
  CHECK(mc_answer("(C)") == ParsedAnswer{AnswerKind::choice_letter, "C"});
  CHECK(mc_answer("The correct choice is D.") == ParsedAnswer{AnswerKind::choice_letter, "D"});
  // letters embedded in words do not count
  CHECK(mc_answer("CAB") == ParsedAnswer{AnswerKind::unparseable, ""});
  CHECK(mc_answer("Answer: A, not B") == ParsedAnswer{AnswerKind::choice_letter, "A"});
  // lowercase letters are not option letters
  CHECK(mc_answer("b") == ParsedAnswer{AnswerKind::unparseable, ""});
  // letters outside the option set are ignored
  CHECK(mc_answer("E or F") == ParsedAnswer{AnswerKind::unparseable, ""});
  CHECK(mc_answer("") == ParsedAnswer{AnswerKind::unparseable, ""});

  // without declared options any capital letter qualifies
  ParsedAnswer fallback =
      extract_final_answer("<answer>Z!</answer>", ProblemKind::multiple_choice, {});
  CHECK(fallback == ParsedAnswer{AnswerKind::choice_letter, "Z"});

  // missing tags are unparseable even when a letter is present
  ParsedAnswer untagged = extract_final_answer("B", ProblemKind::multiple_choice, kAbcd);
  CHECK(untagged == ParsedAnswer{AnswerKind::unparseable, ""});
}

TEST_CASE("mathematical extraction prefers boxed and keeps bare spans as free text") {
  CHECK(math_answer("the value is \\boxed{\\frac{3}{4}}") ==
        ParsedAnswer{AnswerKind::math_expression, "\\frac{3}{4}"});
  CHECK(math_answer("\\boxed{1} no wait \\boxed{2}") ==
        ParsedAnswer{AnswerKind::math_expression, "2"});
  // unboxed spans survive as free text for the judge tier
  CHECK(math_answer("roughly one half") == ParsedAnswer{AnswerKind::free_text, "roughly one half"});
  CHECK(math_answer("") == ParsedAnswer{AnswerKind::unparseable, ""});
  CHECK(extract_final_answer("\\boxed{5}", ProblemKind::mathematical, {}) ==
        ParsedAnswer{AnswerKind::unparseable, ""});
}

TEST_CASE("free form extraction keeps the whole span") {
  ParsedAnswer a = extract_final_answer("<answer> Paris, France </answer>", ProblemKind::free_form, {});
  CHECK(a == ParsedAnswer{AnswerKind::free_text, "Paris, France"});
  CHECK(extract_final_answer("<answer></answer>", ProblemKind::free_form, {}) ==
        ParsedAnswer{AnswerKind::unparseable, ""});
}

TEST_CASE("model response wiring") {
  ProblemRecord problem = mc_problem("p7");
  ModelResponse r =
      make_model_response("p7", Role::student, 3, tagged("because reasons", "C"), problem);
  CHECK(r.problem_id == "p7");
  CHECK(r.role == Role::student);
  CHECK(r.sample_index == 3);
  CHECK(r.raw_text == tagged("because reasons", "C"));
  CHECK(r.reasoning_chain == "because reasons");
  CHECK(r.final_answer == ParsedAnswer{AnswerKind::choice_letter, "C"});
}

TEST_CASE("math parser produces canonical forms") {
  MathExpr e = parse_math_expr("2/4");
  CHECK(e.form == MathExpr::Form::rational);
  CHECK(e.num == 1);
  CHECK(e.den == 2);

  e = parse_math_expr("0.5");
  CHECK(e.form == MathExpr::Form::rational);
  CHECK(e.num == 1);
  CHECK(e.den == 2);

  e = parse_math_expr("-6/4");
  CHECK(e.num == -3);
  CHECK(e.den == 2);

  e = parse_math_expr("0.000");
  CHECK(e.form == MathExpr::Form::rational);
  CHECK(e.num == 0);
  CHECK(e.den == 1);

  e = parse_math_expr("9223372036854775807");  // largest 64-bit value stays rational
  CHECK(e.form == MathExpr::Form::rational);
  CHECK(e.num == 9223372036854775807LL);

  e = parse_math_expr("12345678901234567890");
  CHECK(e.form == MathExpr::Form::decimal);
  CHECK_FALSE(e.dec_negative);
  CHECK(e.dec_digits == "1234567890123456789");
  CHECK(e.dec_exponent == 1);

  e = parse_math_expr("-0.00120");
  CHECK(e.form == MathExpr::Form::rational);
  CHECK(e.num == -3);
  CHECK(e.den == 2500);

  e = parse_math_expr("x + 1");
  CHECK(e.form == MathExpr::Form::symbolic);
  CHECK(e.symbolic == "x + 1");

  e = parse_math_expr("1/0");  // undefined value drops to symbolic text
  CHECK(e.form == MathExpr::Form::symbolic);
  CHECK(e.symbolic == "1/0");
}

TEST_CASE("math equivalence battery") {
  auto same = [](const std::string& a, const std::string& b) { return math_equivalent(a, b); };

  CHECK(same("\\frac{1}{2}", "0.5"));
  CHECK(same("1/2", "0.5"));
  CHECK(same("1/2", "2/4"));
  CHECK(same("50%", "0.5"));
  CHECK(same("50%", "\\frac{1}{2}"));
  CHECK(same("200%", "2"));
  CHECK(same("0.1%", "1/1000"));
  CHECK(same("5%", "0.05"));
  CHECK(same("1.50", "3/2"));
  CHECK(same(".5", "0.5"));
  CHECK(same("5.", "5"));
  CHECK(same("-0", "0"));
  CHECK(same("-0.0", "0"));
  CHECK(same("--3", "3"));
  CHECK(same("+3", "3"));
  CHECK(same("-\\frac{1}{2}", "-0.5"));
  CHECK(same("\\frac{-1}{2}", "-0.5"));
  CHECK(same("\\frac{1}{-2}", "-0.5"));
  CHECK(same("\\frac{-1}{-2}", "0.5"));
  CHECK(same("\\frac {3}{4}", "0.75"));
  CHECK(same("1 / 2", "0.5"));
  CHECK(same("2*3", "6"));
  CHECK(same("2 \\cdot 3", "6"));
  CHECK(same("2 \\times 3", "6"));
  CHECK(same("2 * 2 * 2", "8"));
  CHECK(same("1/2 * 50%", "0.25"));
  CHECK(same("50% \\times 10", "5"));
  CHECK(same("\\frac{1}{2}%", "1/200"));
  CHECK(same("3/64", "0.046875"));

  CHECK_FALSE(same("1/2", "0.51"));
  CHECK_FALSE(same("1/3", "0.333"));
  CHECK_FALSE(same("-1/2", "1/2"));
  CHECK_FALSE(same("50%", "50"));
  CHECK_FALSE(same("2*3", "7"));
  CHECK_FALSE(same("x", "y"));
  CHECK_FALSE(same("x", "1"));
  CHECK_FALSE(same("", "0"));
  CHECK(same("", ""));
}

TEST_CASE("overflow decimals survive only as lone literals") {
  // identical value under trailing-zero normalization
  CHECK(math_equivalent("12345678901234567890", "12345678901234567890.0"));
  CHECK(math_equivalent("-12345678901234567890", "-12345678901234567890.000"));
  CHECK_FALSE(math_equivalent("12345678901234567890", "-12345678901234567890"));
  CHECK_FALSE(math_equivalent("12345678901234567890", "12345678901234567891"));
  // same significant digits, different magnitude
  CHECK_FALSE(math_equivalent("12345678901234567890", "1234567890123456789000"));

  // trailing garbage or arithmetic around an overflowing literal is symbolic
  MathExpr e = parse_math_expr("12345678901234567890 x");
  CHECK(e.form == MathExpr::Form::symbolic);
  e = parse_math_expr("12345678901234567890 * 2");
  CHECK(e.form == MathExpr::Form::symbolic);
  e = parse_math_expr("12345678901234567890%");
  CHECK(e.form == MathExpr::Form::symbolic);

  // a product whose value leaves 64 bits is symbolic, never approximate
  e = parse_math_expr("9223372036854775807 * 2");
  CHECK(e.form == MathExpr::Form::symbolic);
}

TEST_CASE("long division settles rational against overflow decimal") {
  // 1/2^40 expands to 28 significant digits whose integer lift leaves
  // 64 bits, so the decimal side parses as an overflow literal.
  const std::string expansion = "0.0000000000009094947017729282379150390625";
  MathExpr dec = parse_math_expr(expansion);
  REQUIRE(dec.form == MathExpr::Form::decimal);
  CHECK(dec.dec_digits == "9094947017729282379150390625");
  CHECK(dec.dec_exponent == -40);

  CHECK(math_equivalent("1/1099511627776", expansion));
  CHECK(math_equivalent(expansion, "1/1099511627776"));
  CHECK(math_equivalent("-1/1099511627776", "-" + expansion));
  // last digit off by one
  CHECK_FALSE(math_equivalent("1/1099511627776", "0.0000000000009094947017729282379150390624"));
  // non-terminating expansions can never match a finite literal
  CHECK_FALSE(math_equivalent("1/3", "0.33333333333333333333"));
  CHECK_FALSE(math_equivalent("0", "12345678901234567890"));
}

TEST_CASE("symbolic comparison normalizes whitespace runs between tokens") {
  CHECK(math_equivalent("x  +  1", "x + 1"));
  CHECK(math_equivalent(" x + 1 ", "x + 1"));
  CHECK(math_equivalent("x\t+\n1", "x + 1"));
  // token boundaries are preserved, not erased
  CHECK_FALSE(math_equivalent("x+1", "x + 1"));
  CHECK_FALSE(math_equivalent("1/0", "2/0"));
  CHECK(math_equivalent("1/0", "1/0"));
  // different canonical forms never match symbolic text
  CHECK_FALSE(math_equivalent("x", "0.5"));
  CHECK_FALSE(math_equivalent("x", "12345678901234567890"));
}

TEST_CASE("cross multiplication agrees with fraction equivalence") {
  DeterministicRng rng(20260821);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    std::int64_t a = rng.range(-50, 50);
    std::int64_t b = rng.range(1, 40);
    std::int64_t c, d;
    if (i % 5 == 0) {  // plant scaled-equal pairs; chance alone yields few
      std::int64_t m = rng.range(1, 3);
      c = a * m;
      d = b * m;
    } else {
      c = rng.range(-50, 50);
      d = rng.range(1, 40);
    }
    std::string lhs = std::to_string(a) + "/" + std::to_string(b);
    std::string rhs = std::to_string(c) + "/" + std::to_string(d);
    bool expected = a * d == c * b;
    CHECK(math_equivalent(lhs, rhs) == expected);
    // the LaTeX fraction spelling is the same value
    std::string latex = "\\frac{" + std::to_string(c) + "}{" + std::to_string(d) + "}";
    CHECK(math_equivalent(lhs, latex) == expected);
    if (expected) ++checked;
  }
  CHECK(checked >= 400);  // the planted pairs all registered as equal
}

TEST_CASE("decimal literals agree with their fraction form") {
  DeterministicRng rng(777);
  for (int i = 0; i < 500; ++i) {
    std::int64_t whole = rng.range(0, 999);
    int frac_len = static_cast<int>(rng.below(5));
    std::int64_t scale = 1;
    std::int64_t frac = 0;
    std::string text = std::to_string(whole);
    if (frac_len > 0) {
      text += ".";
      for (int k = 0; k < frac_len; ++k) {
        int digit = static_cast<int>(rng.below(10));
        text += static_cast<char>('0' + digit);
        frac = frac * 10 + digit;
        scale *= 10;
      }
    }
    std::int64_t num = whole * scale + frac;
    std::string fraction = std::to_string(num) + "/" + std::to_string(scale);
    CHECK(math_equivalent(text, fraction));
    CHECK_FALSE(math_equivalent(text, std::to_string(num + 1) + "/" + std::to_string(scale)));
  }
}

TEST_CASE("equivalence is reflexive and symmetric") {
  const std::vector<std::string> pool = {
      "1/2",  "0.5",   "50%", "-3",     "\\frac{2}{3}", "2*3", "x + 1", "x+1",
      "1/0",  "",      "0",   "0.1234", "12345678901234567890", "1/1099511627776",
      "7/11", "sqrt2", "2",   "200%",   "0.0000000000009094947017729282379150390625"};
  for (const auto& x : pool) {
    CHECK(math_equivalent(x, x));
    for (const auto& y : pool) {
      CHECK(math_equivalent(x, y) == math_equivalent(y, x));
    }
  }
}

TEST_CASE("judge verdict parsing is strict") {
  CHECK(parse_judge_verdict("CONSISTENT"));
  CHECK_FALSE(parse_judge_verdict("INCONSISTENT"));
  CHECK(parse_judge_verdict("  CONSISTENT \n"));
  CHECK(parse_judge_verdict("```\nCONSISTENT\n```"));
  CHECK_FALSE(parse_judge_verdict("\"INCONSISTENT\""));

  CHECK_THROWS_WITH_AS(parse_judge_verdict("Consistent"),
                       doctest::Contains("expected CONSISTENT"), Error);
  CHECK_THROWS_AS(parse_judge_verdict("CONSISTENT because both say 0.5"), Error);
  try {
    parse_judge_verdict("CONSISTENT?");
    FAIL("expected a protocol error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::judge_protocol_error);
  }
  // oversized junk is truncated in the error text
  try {
    parse_judge_verdict(std::string(400, 'z'));
    FAIL("expected a protocol error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("...") != std::string::npos);
    CHECK(std::string(e.what()).size() < 300);
  }
}

TEST_CASE("conflict tiers resolve letters and math without a judge") {
  ProblemRecord problem = mc_problem("p1");
  JudgeContext no_judge;  // letter and math tiers must not need one

  EquivalenceVerdict v = check_conflict({AnswerKind::choice_letter, "B"},
                                        {AnswerKind::choice_letter, "B"}, problem, no_judge);
  CHECK(v.consistent);
  CHECK(v.tier == VerdictTier::letter);
  CHECK(v.detail == "same letter");

  v = check_conflict({AnswerKind::choice_letter, "B"}, {AnswerKind::choice_letter, "C"}, problem,
                     no_judge);
  CHECK_FALSE(v.consistent);
  CHECK(v.detail == "different letters");

  v = check_conflict({AnswerKind::math_expression, "\\frac{1}{2}"},
                     {AnswerKind::math_expression, "0.5"}, problem, no_judge);
  CHECK(v.consistent);
  CHECK(v.tier == VerdictTier::math);
  CHECK(v.detail == "equivalent values");

  v = check_conflict({AnswerKind::math_expression, "1/3"}, {AnswerKind::math_expression, "0.5"},
                     problem, no_judge);
  CHECK_FALSE(v.consistent);
  CHECK(v.tier == VerdictTier::math);
  CHECK(v.detail == "distinct values");

  // an unparseable side is an outright conflict on any problem kind
  v = check_conflict({AnswerKind::unparseable, ""}, {AnswerKind::choice_letter, "A"}, problem,
                     no_judge);
  CHECK_FALSE(v.consistent);
  CHECK(v.tier == VerdictTier::letter);
  CHECK(v.detail == "unparseable");
  v = check_conflict({AnswerKind::free_text, "fine"}, {AnswerKind::unparseable, ""}, problem,
                     no_judge);
  CHECK(v.detail == "unparseable");
}

TEST_CASE("judge tier shows the teacher answer first and memoizes verdicts") {
  ProblemRecord problem = math_problem("m1", "What is half of one?");
  std::string tag = "conflict|m1|" + sha256_hex("0.5").substr(0, 12) + "|" +
                    sha256_hex("one half").substr(0, 12);
  auto provider = std::make_shared<MockProvider>(
      std::vector<MockRule>{completion_rule(tag, "CONSISTENT")}, 1, 8);
  GatewayOptions opts;
  opts.model = "judge-model";
  Gateway gw(provider, opts);
  PromptLibrary prompts(std::string(DGRC_REPO_DIR) + "/prompts");
  JudgeMemo memo;
  JudgeContext judge{&gw, &prompts, &memo};

  ParsedAnswer teacher{AnswerKind::math_expression, "0.5"};
  ParsedAnswer student{AnswerKind::free_text, "one half"};
  EquivalenceVerdict v = check_conflict(teacher, student, problem, judge);
  CHECK(v.consistent);
  CHECK(v.tier == VerdictTier::judge);
  CHECK(v.detail == "judge verdict");

  // the prompt names the teacher value as A and the student value as B
  auto log = provider->chat_log();
  REQUIRE(log.size() == 1);
  REQUIRE(log[0].messages.size() == 1);
  const std::string& prompt = log[0].messages[0].content;
  std::size_t a_pos = prompt.find("Answer A:\n0.5");
  std::size_t b_pos = prompt.find("Answer B:\none half");
  CHECK(a_pos != std::string::npos);
  CHECK(b_pos != std::string::npos);
  CHECK(a_pos < b_pos);
  CHECK(prompt.find("What is half of one?") != std::string::npos);
  CHECK(log[0].request_tag == tag);

  // repeat and swapped-order lookups are both served from the memo
  v = check_conflict(teacher, student, problem, judge);
  CHECK(v.consistent);
  CHECK(v.detail == "memoized judge verdict");
  v = check_conflict({AnswerKind::free_text, "one half"}, {AnswerKind::math_expression, "0.5"},
                     problem, judge);
  CHECK(v.consistent);
  CHECK(v.detail == "memoized judge verdict");
  CHECK(provider->chat_log().size() == 1);
  CHECK(gw.usage().requests == 1);

  // a pre-seeded memo short-circuits without any call
  memo[{std::min<std::string>("no", "yes"), std::max<std::string>("no", "yes")}] = false;
  v = check_conflict({AnswerKind::free_text, "yes"}, {AnswerKind::free_text, "no"}, problem, judge);
  CHECK_FALSE(v.consistent);
  CHECK(v.detail == "memoized judge verdict");
  CHECK(provider->chat_log().size() == 1);
}

TEST_CASE("identical free text still goes through the judge") {
  ProblemRecord problem = free_problem("f1");
  std::string tag = "conflict|f1|" + sha256_hex("Paris").substr(0, 12) + "|" +
                    sha256_hex("Paris").substr(0, 12);
  auto provider = std::make_shared<MockProvider>(
      std::vector<MockRule>{completion_rule(tag, "CONSISTENT")}, 1, 8);
  GatewayOptions opts;
  opts.model = "judge-model";
  Gateway gw(provider, opts);
  PromptLibrary prompts(std::string(DGRC_REPO_DIR) + "/prompts");
  JudgeContext judge{&gw, &prompts, nullptr};  // memo is optional

  ParsedAnswer side{AnswerKind::free_text, "Paris"};
  EquivalenceVerdict v = check_conflict(side, side, problem, judge);
  CHECK(v.consistent);
  CHECK(v.tier == VerdictTier::judge);
  CHECK(provider->chat_log().size() == 1);
  // without a memo a repeat costs another call
  check_conflict(side, side, problem, judge);
  CHECK(provider->chat_log().size() == 2);
}

TEST_CASE("judge tier without a configured judge is an input error") {
  ProblemRecord problem = free_problem("f2");
  JudgeContext no_judge;
  try {
    check_conflict({AnswerKind::free_text, "a"}, {AnswerKind::free_text, "b"}, problem, no_judge);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_input);
    CHECK(std::string(e.what()).find("f2") != std::string::npos);
  }
}

TEST_CASE("judge protocol failures surface with their kind") {
  ProblemRecord problem = free_problem("f3");
  auto provider = std::make_shared<MockProvider>(
      std::vector<MockRule>{completion_rule("*", "probably the same, yes")}, 1, 8);
  GatewayOptions opts;
  opts.model = "judge-model";
  Gateway gw(provider, opts);
  PromptLibrary prompts(std::string(DGRC_REPO_DIR) + "/prompts");
  JudgeMemo memo;
  JudgeContext judge{&gw, &prompts, &memo};
  try {
    check_conflict({AnswerKind::free_text, "a"}, {AnswerKind::free_text, "b"}, problem, judge);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::judge_protocol_error);
  }
  CHECK(memo.empty());  // failed verdicts are not memoized
}
