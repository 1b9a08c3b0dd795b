#include <doctest.h>

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dgrc/answer_kit.hpp"
#include "dgrc/errors.hpp"
#include "dgrc/gateway.hpp"
#include "dgrc/mock_provider.hpp"
#include "dgrc/prompts.hpp"
#include "dgrc/synthesis.hpp"
#include "test_support.hpp"

using namespace dgrc;
using namespace dgrc::test;

namespace {

struct Rig {
  std::shared_ptr<MockProvider> provider;
  Gateway gateway;
  PromptLibrary prompts;

  explicit Rig(std::vector<MockRule> rules)
      : provider(std::make_shared<MockProvider>(std::move(rules), 1, 8)),
        gateway(provider,
                [] {
                  GatewayOptions o;
                  o.model = "m";
                  return o;
                }()),
        prompts(std::string(DGRC_REPO_DIR) + "/prompts") {}
};

AtomicPair accepted_pair(const std::string& problem_id, int k, int j, int q,
                         const std::string& question, const std::string& final_answer) {
  AtomicPair p;
  p.id = make_pair_id(problem_id, k, j, q);
  p.problem_id = problem_id;
  p.origin = {k, j};
  p.question = question;
  p.answer_reasoning = "because";
  p.answer_final = final_answer;
  p.status = PairStatus::accepted;
  return p;
}

VerifiedChain chain(const std::string& problem_id, int k) {
  VerifiedChain c;
  c.problem_id = problem_id;
  c.teacher_sample = k;
  c.chain = tagged("steps " + std::to_string(k), "A");
  c.answer = {AnswerKind::choice_letter, "A"};
  c.audit = "consistent";
  return c;
}

}  // namespace

TEST_CASE("question list parsing recovers from fences and prose") {
  CHECK(parse_question_list(R"(["a", "b"])") == std::vector<std::string>{"a", "b"});
  CHECK(parse_question_list("```json\n[\"a\"]\n```") == std::vector<std::string>{"a"});
  CHECK(parse_question_list("Here you go: [\"a\", \"b\"] enjoy!") ==
        std::vector<std::string>{"a", "b"});
  // blank entries vanish, kept entries are trimmed
  CHECK(parse_question_list(R"([" a ", "", "   "])") == std::vector<std::string>{"a"});
  CHECK(parse_question_list("[]").empty());
  // brackets inside strings survive the direct parse
  CHECK(parse_question_list(R"(["what is [x]?"])") == std::vector<std::string>{"what is [x]?"});

  CHECK_THROWS_AS(parse_question_list(R"({"q": 1})"), Error);
  CHECK_THROWS_AS(parse_question_list(R"(["a", 2])"), Error);
  try {
    parse_question_list("no questions here, sorry");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse_error);
  }
}

TEST_CASE("question generation contrasts the two chains under one tag") {
  Rig rig({completion_rule("atomicgen|g1|t0|s2", R"(["Q one?", "Q two?"])")});
  ProblemRecord p = mc_problem("g1");
  DivergentPair pair{"g1", 0, 2, VerdictTier::letter};

  std::vector<std::string> qs = generate_atomic_questions(p, pair, "teacher chain here",
                                                          "student chain here", rig.gateway,
                                                          rig.prompts);
  CHECK(qs == std::vector<std::string>{"Q one?", "Q two?"});

  auto log = rig.provider->chat_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0].request_tag == "atomicgen|g1|t0|s2");
  REQUIRE(log[0].messages.size() == 1);
  const std::string& prompt = log[0].messages[0].content;
  CHECK(prompt.find(problem_prompt(p)) != std::string::npos);
  std::size_t t_pos = prompt.find("teacher chain here");
  std::size_t s_pos = prompt.find("student chain here");
  CHECK(t_pos != std::string::npos);
  CHECK(s_pos != std::string::npos);
  CHECK(t_pos < s_pos);  // reasoning A is the teacher's

  CHECK_THROWS_AS(
      generate_atomic_questions(p, pair, "", "student", rig.gateway, rig.prompts), Error);
  CHECK_THROWS_AS(
      generate_atomic_questions(p, pair, "teacher", "", rig.gateway, rig.prompts), Error);
}

TEST_CASE("unusable generation completions raise parse errors") {
  Rig rig({completion_rule("*", "I could not find any disagreements.")});
  ProblemRecord p = mc_problem("g2");
  try {
    generate_atomic_questions(p, {"g2", 0, 0, VerdictTier::letter}, "t", "s", rig.gateway,
                              rig.prompts);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse_error);
  }
}

TEST_CASE("atomic answering is a fresh single-message conversation") {
  Rig rig({completion_rule("atomicans|x1:t0:s0:q000", tagged("short derivation", "42"))});
  AtomicAnswer a = answer_atomic("What is six times seven?", "atomicans|x1:t0:s0:q000",
                                 rig.gateway);
  CHECK(a.reasoning == "short derivation");
  CHECK(a.final_answer == "42");

  auto log = rig.provider->chat_log();
  REQUIRE(log.size() == 1);
  REQUIRE(log[0].messages.size() == 1);
  CHECK(log[0].messages[0].role == "user");
  // exactly the question plus the format suffix: no problem, no chains
  CHECK(log[0].messages[0].content ==
        "What is six times seven?\n" + std::string(kAtomicAnswerSuffix));

  CHECK_THROWS_AS(answer_atomic("", "tag", rig.gateway), Error);
}

TEST_CASE("answers without tags are format defects") {
  Rig rig({completion_rule("*", "the answer is 42, plainly")});
  try {
    answer_atomic("Q?", "atomicans|t", rig.gateway);
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::format_error);
  }
}

TEST_CASE("pair output text is the tagged reasoning and answer") {
  AtomicPair p = accepted_pair("x1", 0, 0, 0, "Q?", "42");
  p.answer_reasoning = "R";
  p.answer_final = "F";
  CHECK(atomic_output_text(p) == "<think>R</think><answer>F</answer>");
}

TEST_CASE("verification sets order facts by pair id and hold no reasoning") {
  std::vector<AtomicPair> pairs = {accepted_pair("v1", 1, 0, 0, "q-c", "3"),
                                   accepted_pair("v1", 0, 2, 1, "q-b", "2"),
                                   accepted_pair("v1", 0, 2, 0, "q-a", "1")};
  VerificationSet vset = build_verification_set("v1", pairs);
  CHECK(vset.problem_id == "v1");
  std::vector<Fact> expected = {{"q-a", "1"}, {"q-b", "2"}, {"q-c", "3"}};
  CHECK(vset.facts == expected);

  // numeric question indices sort by their zero-padded spelling
  std::vector<AtomicPair> wide;
  for (int q : {10, 2, 0}) wide.push_back(accepted_pair("v1", 0, 0, q, "q" + std::to_string(q), "x"));
  VerificationSet ordered = build_verification_set("v1", wide);
  CHECK(ordered.facts[0].question == "q0");
  CHECK(ordered.facts[1].question == "q2");
  CHECK(ordered.facts[2].question == "q10");

  CHECK(build_verification_set("v1", {}).facts.empty());

  std::vector<AtomicPair> foreign = {accepted_pair("other", 0, 0, 0, "q", "a")};
  CHECK_THROWS_AS(build_verification_set("v1", foreign), Error);
  std::vector<AtomicPair> unfinished = {accepted_pair("v1", 0, 0, 0, "q", "a")};
  unfinished[0].status = PairStatus::raw;
  CHECK_THROWS_AS(build_verification_set("v1", unfinished), Error);
}

TEST_CASE("chain verification consults the auditor only when facts exist") {
  ProblemRecord p = mc_problem("c1");
  ModelResponse r = make_model_response("c1", Role::teacher, 2, tagged("my steps", "A"), p);

  // empty fact set: passes unaudited, provably without any model call
  Rig silent({});
  VerificationSet empty{"c1", {}};
  ChainVerdict v = verify_chain(p, r, empty, silent.gateway, silent.prompts);
  CHECK(v.consistent);
  CHECK_FALSE(v.audited);
  CHECK(silent.provider->chat_log().empty());

  Rig rig({completion_rule("verify|c1|t2", "INCONSISTENT")});
  VerificationSet vset{"c1", {{"Is water wet?", "yes"}}};
  v = verify_chain(p, r, vset, rig.gateway, rig.prompts);
  CHECK_FALSE(v.consistent);
  CHECK(v.audited);
  auto log = rig.provider->chat_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0].request_tag == "verify|c1|t2");
  const std::string& prompt = log[0].messages[0].content;
  CHECK(prompt.find("my steps") != std::string::npos);
  CHECK(prompt.find("Q1: Is water wet?") != std::string::npos);
  CHECK(prompt.find("A1: yes") != std::string::npos);

  VerificationSet foreign{"c9", {{"q", "a"}}};
  CHECK_THROWS_AS(verify_chain(p, r, foreign, rig.gateway, rig.prompts), Error);

  Rig vague({completion_rule("*", "mostly fine I think")});
  try {
    verify_chain(p, r, vset, vague.gateway, vague.prompts);
    FAIL("expected a protocol error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::judge_protocol_error);
  }
}

TEST_CASE("chain selection is a pure function of seed, problem, and candidate set") {
  std::vector<VerifiedChain> candidates = {chain("s1", 2), chain("s1", 0), chain("s1", 1)};
  VerifiedChain pick = select_verified_chain(7, "s1", candidates);
  // order of presentation must not matter
  std::vector<VerifiedChain> shuffled = {candidates[1], candidates[2], candidates[0]};
  CHECK(select_verified_chain(7, "s1", shuffled) == pick);
  CHECK(select_verified_chain(7, "s1", candidates) == pick);

  // a lone candidate is always the answer
  CHECK(select_verified_chain(7, "s1", {chain("s1", 5)}).teacher_sample == 5);

  // across many problems every slot gets picked eventually
  std::set<int> seen;
  for (int i = 0; i < 40; ++i) {
    std::vector<VerifiedChain> c = {chain("p" + std::to_string(i), 0),
                                    chain("p" + std::to_string(i), 1),
                                    chain("p" + std::to_string(i), 2)};
    seen.insert(select_verified_chain(7, "p" + std::to_string(i), c).teacher_sample);
  }
  CHECK(seen == std::set<int>{0, 1, 2});

  try {
    select_verified_chain(7, "s1", {});
    FAIL("expected no surviving chain");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::no_verified_chain);
  }
  CHECK_THROWS_AS(select_verified_chain(7, "s1", {chain("s2", 0)}), Error);
}

TEST_CASE("peer correction accepts a standing chain or a two-field rewrite") {
  ProblemRecord p = mc_problem("r1");
  VerificationSet facts{"r1", {{"Is B second?", "yes"}}};

  Rig stands({completion_rule("rewrite|r1", "  <No>  ")});
  PeerCorrection out = peer_correct(p, "old chain", "A", facts, stands.gateway, stands.prompts);
  CHECK_FALSE(out.changed);
  CHECK(out.corrected_chain.empty());
  CHECK(out.corrected_prediction.empty());
  auto log = stands.provider->chat_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0].request_tag == "rewrite|r1");
  CHECK(log[0].messages[0].content.find("old chain") != std::string::npos);

  Rig rewrites({completion_rule(
      "rewrite|r1", "```json\n{\"Corrected_CoT\": \"new chain\", \"Corrected_Prediction\": \"B\"}\n```")});
  out = peer_correct(p, "old chain", "A", facts, rewrites.gateway, rewrites.prompts);
  CHECK(out.changed);
  CHECK(out.corrected_chain == "new chain");
  CHECK(out.corrected_prediction == "B");

  // prose around the object is recovered like question lists are
  Rig noisy({completion_rule(
      "rewrite|r1", "Sure! {\"Corrected_CoT\": \"c\", \"Corrected_Prediction\": \"B\"} done.")});
  out = peer_correct(p, "old", "A", facts, noisy.gateway, noisy.prompts);
  CHECK(out.changed);
  CHECK(out.corrected_prediction == "B");
}

TEST_CASE("peer correction rejects malformed outputs and empty fact sets") {
  ProblemRecord p = mc_problem("r2");
  VerificationSet facts{"r2", {{"q", "a"}}};

  Rig partial({completion_rule("*", R"({"Corrected_CoT": "only half"})")});
  try {
    peer_correct(p, "chain", "A", facts, partial.gateway, partial.prompts);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse_error);
  }

  Rig wrong_type({completion_rule(
      "*", R"({"Corrected_CoT": "c", "Corrected_Prediction": 2})")});
  CHECK_THROWS_AS(peer_correct(p, "chain", "A", facts, wrong_type.gateway, wrong_type.prompts),
                  Error);

  Rig unused({});
  VerificationSet empty{"r2", {}};
  try {
    peer_correct(p, "chain", "A", empty, unused.gateway, unused.prompts);
    FAIL("expected an input error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_input);
  }
}
