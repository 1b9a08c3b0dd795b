#include <doctest.h>

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <set>
#include <thread>

#include "dgrc/cache.hpp"
#include "dgrc/config.hpp"
#include "dgrc/errors.hpp"
#include "dgrc/serialization.hpp"
#include "dgrc/types.hpp"
#include "dgrc/util.hpp"
#include "test_support.hpp"

using namespace dgrc;
using dgrc::test::TempDir;
using nlohmann::json;

// ===== text helpers =====

TEST_CASE("trim strips surrounding whitespace only") {
  CHECK(trim("  a b  ") == "a b");
  CHECK(trim("\t\n x \r\n") == "x");
  CHECK(trim("") == "");
  CHECK(trim("   ") == "");
  CHECK(trim("abc") == "abc");
}

TEST_CASE("starts_with and ends_with") {
  CHECK(starts_with("abcdef", "abc"));
  CHECK_FALSE(starts_with("ab", "abc"));
  CHECK(ends_with("abcdef", "def"));
  CHECK_FALSE(ends_with("ef", "def"));
  CHECK(starts_with("x", ""));
  CHECK(ends_with("x", ""));
}

TEST_CASE("strip_fences_and_quotes unwraps cosmetic wrapping") {
  CHECK(strip_fences_and_quotes("plain") == "plain");
  CHECK(strip_fences_and_quotes("```\nplain\n```") == "plain");
  CHECK(strip_fences_and_quotes("```json\n[1, 2]\n```") == "[1, 2]");
  CHECK(strip_fences_and_quotes("\"quoted\"") == "quoted");
  CHECK(strip_fences_and_quotes("'quoted'") == "quoted");
  // fence first, then one quote layer
  CHECK(strip_fences_and_quotes("```\n\"both\"\n```") == "both");
  // unbalanced quote stays
  CHECK(strip_fences_and_quotes("\"open") == "\"open");
}

TEST_CASE("whitespace_token_count counts maximal nonspace runs") {
  CHECK(whitespace_token_count("") == 0);
  CHECK(whitespace_token_count("   ") == 0);
  CHECK(whitespace_token_count("a") == 1);
  CHECK(whitespace_token_count("a b") == 2);
  CHECK(whitespace_token_count("  a \t b \n c  ") == 3);
  CHECK(whitespace_token_count("one,two three") == 2);
}

TEST_CASE("glob_match supports star wildcards") {
  CHECK(glob_match("abc", "abc"));
  CHECK_FALSE(glob_match("abc", "abd"));
  CHECK(glob_match("*", "anything"));
  CHECK(glob_match("*", ""));
  CHECK(glob_match("a*c", "abbbc"));
  CHECK(glob_match("a*c", "ac"));
  CHECK_FALSE(glob_match("a*c", "ab"));
  CHECK(glob_match("sample|*|p1|*", "sample|teacher|p1|3"));
  CHECK_FALSE(glob_match("sample|*|p1|*", "sample|teacher|p2|3"));
  CHECK(glob_match("a*b*c", "aXbYc"));
}

// ===== hashing and rng =====

TEST_CASE("sha256_hex matches the published test vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("sha256_prefix64 is the big-endian first eight digest bytes") {
  CHECK(sha256_prefix64("") == 0xe3b0c44298fc1c14ull);
  CHECK(sha256_prefix64("abc") == 0xba7816bf8f01cfeaull);
}

TEST_CASE("splitmix64 reproduces the reference stream") {
  std::uint64_t state = 1234567;
  CHECK(splitmix64(state) == 6457827717110365317ull);
  CHECK(splitmix64(state) == 3203168211198807973ull);
  CHECK(splitmix64(state) == 9817491932198370423ull);
  CHECK(splitmix64(state) == 4593380528125082431ull);
  CHECK(splitmix64(state) == 16408922859458223821ull);
  std::uint64_t zero = 0;
  CHECK(splitmix64(zero) == 0xe220a8397b1dcdafull);
}

TEST_CASE("DeterministicRng below stays in range and is reproducible") {
  DeterministicRng a(99), b(99);
  for (int i = 0; i < 200; ++i) {
    std::uint64_t v = a.below(7);
    CHECK(v < 7);
    CHECK(v == b.below(7));
  }
  DeterministicRng c(99);
  for (int i = 0; i < 50; ++i) CHECK(c.below(1) == 0);
}

TEST_CASE("DeterministicRng range covers both endpoints") {
  DeterministicRng r(5);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 500; ++i) {
    std::int64_t v = r.range(-2, 2);
    CHECK(v >= -2);
    CHECK(v <= 2);
    seen.insert(v);
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("DeterministicRng unit lies in the half-open interval") {
  DeterministicRng r(17);
  for (int i = 0; i < 200; ++i) {
    double u = r.unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("seeded_rng streams depend on both seed and label") {
  auto a1 = seeded_rng(42, "select|p1");
  auto a2 = seeded_rng(42, "select|p1");
  auto b = seeded_rng(42, "select|p2");
  auto c = seeded_rng(43, "select|p1");
  std::uint64_t v1 = a1.next();
  CHECK(v1 == a2.next());
  CHECK(v1 != b.next());
  CHECK(v1 != c.next());
}

// ===== files =====

TEST_CASE("atomic_write_file writes, overwrites, and leaves no temp file") {
  TempDir td;
  auto p = td / "f.txt";
  atomic_write_file(p, "one");
  CHECK(read_file(p) == "one");
  atomic_write_file(p, "two");
  CHECK(read_file(p) == "two");
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(td.path())) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
}

TEST_CASE("read_lines splits on newlines, with or without a trailing one") {
  TempDir td;
  auto p = td / "lines.txt";
  atomic_write_file(p, "a\nb\nc\n");
  auto lines = read_lines(p);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "a");
  CHECK(lines[2] == "c");
  atomic_write_file(p, "a\nb");
  CHECK(read_lines(p).size() == 2);
  atomic_write_file(p, "");
  CHECK(read_lines(p).empty());
}

TEST_CASE("parallel_for visits every index exactly once") {
  std::vector<std::atomic<int>> hits(257);
  for (auto& h : hits) h = 0;
  parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i].fetch_add(1); });
  for (const auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("parallel_for handles edge worker counts") {
  std::atomic<int> n{0};
  parallel_for(0, 4, [&](std::size_t) { n.fetch_add(1); });
  CHECK(n.load() == 0);
  parallel_for(3, 100, [&](std::size_t) { n.fetch_add(1); });
  CHECK(n.load() == 3);
  parallel_for(5, 1, [&](std::size_t) { n.fetch_add(1); });
  CHECK(n.load() == 8);
}

TEST_CASE("parallel_for rethrows a work-item exception") {
  CHECK_THROWS_AS(parallel_for(16, 4,
                               [&](std::size_t i) {
                                 if (i == 7) throw Error(ErrorKind::invalid_input, "boom");
                               }),
                  Error);
}

// ===== config =====

TEST_CASE("config defaults carry the published constants") {
  PipelineConfig c = parse_config("{}");
  CHECK(c.K == 1);
  CHECK(c.J == 8);
  CHECK(c.tau_low == doctest::Approx(0.35));
  CHECK(c.tau_high == doctest::Approx(1.0));
  CHECK(c.tau_sim == doctest::Approx(0.85));
  CHECK(c.tau_llm == 13);
  CHECK(c.sampling.temperature == doctest::Approx(0.6));
  CHECK(c.sampling.top_p == doctest::Approx(0.95));
  CHECK(c.sampling.top_k == 30);
  CHECK(c.sampling.max_context_tokens == 4096);
  CHECK(c.score_batch_size == 16);
  CHECK(c.grpo_per_option_target == 15000);
  CHECK(c.providers.embedder.model == "all-MiniLM-L6-v2");
}

TEST_CASE("config rejects unknown and ill-typed fields") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"tau_lo": 0.3})"),
                       doctest::Contains("unknown field: tau_lo"), Error);
  CHECK_THROWS_WITH_AS(parse_config(R"({"sampling": {"temp": 1}})"),
                       doctest::Contains("sampling.temp"), Error);
  CHECK_THROWS_WITH_AS(parse_config(R"({"providers": {"teachr": {}}})"),
                       doctest::Contains("providers.teachr"), Error);
  CHECK_THROWS_WITH_AS(parse_config(R"({"K": "one"})"), doctest::Contains("bad value for K"),
                       Error);
  CHECK_THROWS_AS(parse_config("not json"), Error);
  CHECK_THROWS_AS(parse_config("[1,2]"), Error);
}

TEST_CASE("config validation names the offending field") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"K": 0})"), doctest::Contains("K >= 1"), Error);
  CHECK_THROWS_WITH_AS(parse_config(R"({"tau_low": 0.6, "tau_high": 0.5})"),
                       doctest::Contains("tau_low <= tau_high"), Error);
  CHECK_THROWS_WITH_AS(parse_config(R"({"tau_llm": 15})"), doctest::Contains("tau_llm"), Error);
  CHECK_THROWS_WITH_AS(parse_config(R"({"sampling": {"top_p": 0.0}})"),
                       doctest::Contains("top_p"), Error);
  CHECK_THROWS_WITH_AS(parse_config(R"({"concurrency_limit": 0})"),
                       doctest::Contains("concurrency_limit"), Error);
  try {
    parse_config(R"({"J": -1})");
    FAIL("expected invalid_config");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_config);
  }
}

TEST_CASE("dump_config round-trips losslessly") {
  PipelineConfig c = parse_config(R"({"seed": 7, "K": 2, "providers": {"teacher": {"model": "m",
    "base_url": "http://h:1/v1"}}, "problems_path": "x.jsonl"})");
  PipelineConfig back = parse_config(dump_config(c));
  CHECK(back == c);
  CHECK(dump_config(back) == dump_config(c));
}

TEST_CASE("config_hash tracks semantic knobs only") {
  PipelineConfig base = parse_config("{}");
  std::string h = config_hash(base);
  CHECK(h.size() == 64);

  PipelineConfig same = base;
  same.concurrency_limit = 99;
  same.problems_path = "elsewhere.jsonl";
  same.prompts_dir = "other_prompts";
  same.providers.teacher.base_url = "http://changed:1";
  same.providers.teacher.api_key_env = "OTHER_KEY";
  CHECK(config_hash(same) == h);

  PipelineConfig diff = base;
  diff.seed = 1;
  CHECK(config_hash(diff) != h);
  diff = base;
  diff.tau_llm = 12;
  CHECK(config_hash(diff) != h);
  diff = base;
  diff.J = 7;
  CHECK(config_hash(diff) != h);
  diff = base;
  diff.providers.teacher.model = "other-model";
  CHECK(config_hash(diff) != h);
  diff = base;
  diff.sampling.temperature = 0.7;
  CHECK(config_hash(diff) != h);
  diff = base;
  diff.grpo_per_option_target = 10;
  CHECK(config_hash(diff) != h);
}

// ===== serialization =====

TEST_CASE("encode_line is canonical: sorted keys, stable under round trip") {
  json j{{"zeta", 1}, {"alpha", 2}};
  std::string line = encode_line(j);
  CHECK(line.find("alpha") < line.find("zeta"));
  CHECK(encode_line(json::parse(line)) == line);
}

TEST_CASE("problem records round-trip through JSON for every kind") {
  for (const ProblemRecord& p : {test::mc_problem("a"), test::math_problem("b"),
                                 test::free_problem("c")}) {
    json j = p;
    ProblemRecord back = j.get<ProblemRecord>();
    CHECK(back == p);
    CHECK(encode_line(json(back)) == encode_line(j));
  }
}

TEST_CASE("model responses and divergence records round-trip") {
  ModelResponse r;
  r.problem_id = "p1";
  r.role = Role::student;
  r.sample_index = 3;
  r.raw_text = "<think>x</think><answer>B</answer>";
  r.reasoning_chain = "x";
  r.final_answer = {AnswerKind::choice_letter, "B"};
  json j = r;
  CHECK(j.get<ModelResponse>() == r);

  DivergentPair dp{"p1", 0, 3, VerdictTier::math};
  CHECK(json(dp).get<DivergentPair>() == dp);

  DiagnosticEntry de{test::mc_problem("p1"), {dp}, {r}};
  json jd = de;
  DiagnosticEntry de2 = jd.get<DiagnosticEntry>();
  CHECK(de2.problem == de.problem);
  CHECK(de2.divergent_pairs == de.divergent_pairs);
  CHECK(de2.teacher_responses == de.teacher_responses);

  NoDivergenceEntry nd{test::mc_problem("p2"), r};
  json jn = nd;
  NoDivergenceEntry nd2 = jn.get<NoDivergenceEntry>();
  CHECK(nd2.problem == nd.problem);
  CHECK(nd2.teacher_response == nd.teacher_response);

  QuarantineEntry q{"p3", "detect", "provider_refusal", "nope"};
  CHECK(json(q).get<QuarantineEntry>() == q);
}

TEST_CASE("atomic pairs omit absent metrics and round-trip present ones") {
  AtomicPair p;
  p.id = "p1:t0:s2:q001";
  p.problem_id = "p1";
  p.origin = {0, 2};
  p.question = "Why?";
  p.status = PairStatus::raw;
  json bare = p;
  CHECK_FALSE(bare.at("metrics").contains("ifd"));
  CHECK(bare.get<AtomicPair>() == p);

  p.metrics.s_cond = 3.0;
  p.metrics.s_direct = 6.0;
  p.metrics.ifd = 0.5;
  p.metrics.max_similarity = 0.12;
  p.metrics.dimension_scores = std::array<int, 7>{2, 2, 2, 1, 2, 2, 2};
  p.metrics.s_llm = 13;
  p.status = PairStatus::accepted;
  p.answer_reasoning = "R";
  p.answer_final = "F";
  json full = p;
  CHECK(full.get<AtomicPair>() == p);
  CHECK(encode_line(json(full.get<AtomicPair>())) == encode_line(full));
}

TEST_CASE("verified chains and training records round-trip") {
  VerifiedChain v{"p1", 0, "<think>r</think><answer>A</answer>",
                  {AnswerKind::choice_letter, "A"}, "consistent"};
  CHECK(json(v).get<VerifiedChain>() == v);

  TrainingRecord t;
  t.instruction = "Q\nsuffix";
  t.output = "<think>r</think><answer>A</answer>";
  t.meta = {"p1", "cot", "verified"};
  CHECK(json(t).get<TrainingRecord>() == t);

  CurriculumStats s;
  s.n_unlabeled = 10;
  s.n_divergent_pairs = 7;
  s.avg_tokens_cot = 5.5;
  CHECK(json(s).get<CurriculumStats>() == s);
}

TEST_CASE("jsonl stores carry a header and reject mismatched configs") {
  TempDir td;
  auto p = td / "store.jsonl";
  std::vector<json> recs = {json{{"v", 1}}, json{{"v", 2}}};
  write_jsonl(p, "demo", "hash_a", recs);

  auto lines = read_lines(p);
  REQUIRE(lines.size() == 3);
  json header = json::parse(lines[0]);
  CHECK(header.at("store") == "demo");
  CHECK(header.at("config_hash") == "hash_a");
  CHECK(header.at("schema_version") == kSchemaVersion);

  JsonlStore s = read_jsonl(p, true, "hash_a");
  CHECK(s.config_hash == "hash_a");
  REQUIRE(s.records.size() == 2);
  CHECK(s.records[1].at("v") == 2);

  try {
    read_jsonl(p, true, "hash_b");
    FAIL("expected config_hash_mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config_hash_mismatch);
  }
}

TEST_CASE("jsonl stores support headerless dataset files") {
  TempDir td;
  auto p = td / "data.jsonl";
  write_jsonl(p, "", "", {json{{"v", 1}}});
  CHECK(read_lines(p).size() == 1);
  JsonlStore s = read_jsonl(p, false);
  REQUIRE(s.records.size() == 1);
  CHECK(s.config_hash.empty());
}

TEST_CASE("reading a missing store raises missing_predecessor") {
  TempDir td;
  try {
    read_jsonl(td / "absent.jsonl", true);
    FAIL("expected missing_predecessor");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::missing_predecessor);
  }
}

TEST_CASE("corrupt store contents raise store_inconsistency") {
  TempDir td;
  auto p = td / "bad.jsonl";
  atomic_write_file(p, "");
  CHECK_THROWS_AS(read_jsonl(p, true), Error);
  atomic_write_file(p, "{\"not\": \"a header\"}\n");
  try {
    read_jsonl(p, true);
    FAIL("expected store_inconsistency");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::store_inconsistency);
  }
  write_jsonl(p, "demo", "h", {});
  std::string content = read_file(p);
  atomic_write_file(p, content + "this is not json\n");
  try {
    read_jsonl(p, true, "h");
    FAIL("expected store_inconsistency");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::store_inconsistency);
  }
}

// ===== response cache =====

TEST_CASE("cache keys separate endpoints, channels, and requests") {
  ChatRequest a;
  a.model = "m";
  a.messages = {{"user", "hi"}};
  a.request_tag = "tag1";
  ChatRequest b = a;
  b.request_tag = "tag2";
  CHECK(ResponseCache::chat_key("ep1", a) != ResponseCache::chat_key("ep1", b));
  CHECK(ResponseCache::chat_key("ep1", a) != ResponseCache::chat_key("ep2", a));
  CHECK(ResponseCache::chat_key("ep1", a) == ResponseCache::chat_key("ep1", a));

  ScoreRequest s1{"m", "ctx", "cont"};
  ScoreRequest s2{"m", "", "ctxcont"};
  CHECK(ResponseCache::score_key("ep", s1) != ResponseCache::score_key("ep", s2));
  CHECK(ResponseCache::embed_key("ep", "m", "a") != ResponseCache::embed_key("ep", "m", "b"));
}

TEST_CASE("cache stores and reloads a result marked from_cache") {
  TempDir td;
  ResponseCache cache(td / "cache");
  ProviderResult r;
  r.kind = PayloadKind::completion;
  r.text = "hello";
  r.completion_tokens = 1;
  std::string key = sha256_hex("some-key");
  CHECK_FALSE(cache.load(key).has_value());
  cache.store(key, r);
  auto back = cache.load(key);
  REQUIRE(back.has_value());
  CHECK(back->text == "hello");
  CHECK(back->from_cache);
  CHECK(back->completion_tokens == 1);
}

TEST_CASE("cache round-trips token scores and embeddings") {
  TempDir td;
  ResponseCache cache(td / "cache");
  ProviderResult scores;
  scores.kind = PayloadKind::token_scores;
  scores.token_scores = {{"a", -0.5}, {"b", -1.25}};
  cache.store("k1", scores);
  auto s = cache.load("k1");
  REQUIRE(s.has_value());
  REQUIRE(s->token_scores.size() == 2);
  CHECK(s->token_scores[1].logprob == doctest::Approx(-1.25));

  ProviderResult emb;
  emb.kind = PayloadKind::embedding;
  emb.embedding = {0.1, -0.2, 0.3};
  cache.store("k2", emb);
  auto e = cache.load("k2");
  REQUIRE(e.has_value());
  CHECK(e->embedding == std::vector<double>{0.1, -0.2, 0.3});
}

TEST_CASE("corrupt cache entries raise cache_corruption") {
  TempDir td;
  ResponseCache cache(td / "cache");
  ProviderResult r;
  r.text = "x";
  cache.store("kk", r);
  // find the entry file and scribble on it
  for (const auto& e : std::filesystem::recursive_directory_iterator(cache.dir())) {
    if (e.is_regular_file()) atomic_write_file(e.path(), "garbage");
  }
  try {
    cache.load("kk");
    FAIL("expected cache_corruption");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::cache_corruption);
  }
}
