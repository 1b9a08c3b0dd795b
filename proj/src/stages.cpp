#include "dgrc/stages.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <map>
#include <mutex>
#include <set>

#include "dgrc/answer_kit.hpp"
#include "dgrc/divergence.hpp"
#include "dgrc/errors.hpp"
#include "dgrc/filters.hpp"
#include "dgrc/forge.hpp"
#include "dgrc/http_provider.hpp"
#include "dgrc/mock_provider.hpp"
#include "dgrc/serialization.hpp"
#include "dgrc/synthesis.hpp"
#include "dgrc/util.hpp"

namespace dgrc {

namespace fs = std::filesystem;
using nlohmann::json;

// ===== problems =====

std::vector<ProblemRecord> load_problems(const fs::path& p) {
  if (!fs::exists(p)) {
    throw Error(ErrorKind::invalid_input, "problems file not found: " + p.string());
  }
  std::vector<ProblemRecord> out;
  std::set<std::string> seen;
  for (const auto& line : read_lines(p)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorKind::invalid_input, "problems file holds a non-JSON line");
    }
    ProblemRecord rec = j.get<ProblemRecord>();
    validate_problem(rec);
    if (!seen.insert(rec.id).second) {
      throw Error(ErrorKind::invalid_input, "duplicate problem id: " + rec.id);
    }
    out.push_back(std::move(rec));
  }
  std::sort(out.begin(), out.end(),
            [](const ProblemRecord& a, const ProblemRecord& b) { return a.id < b.id; });
  return out;
}

namespace {

// ===== shared stage plumbing =====

struct GatewaySet {
  std::shared_ptr<Provider> shared_mock;  // mock mode only
  std::unique_ptr<Gateway> teacher;
  std::unique_ptr<Gateway> student;
  std::unique_ptr<Gateway> embedder;
  std::unique_ptr<Gateway> judge;
};

GatewayOptions gateway_options(const StageContext& ctx, const std::string& model) {
  GatewayOptions o;
  o.model = model;
  o.concurrency_limit = ctx.config.concurrency_limit;
  o.cache_dir = ctx.cache_dir ? *ctx.cache_dir : ctx.paths.default_cache_dir().string();
  o.embedding_dim = ctx.config.embedding_dim;
  o.temperature = ctx.config.sampling.temperature;
  o.top_p = ctx.config.sampling.top_p;
  o.top_k = ctx.config.sampling.top_k;
  o.max_tokens = ctx.config.sampling.max_context_tokens;
  return o;
}

GatewaySet make_gateways(const StageContext& ctx) {
  GatewaySet g;
  const ProviderSet& ps = ctx.config.providers;
  // An unset judge endpoint means the teacher model judges.
  const EndpointConfig& judge_ep = ps.judge.model.empty() ? ps.teacher : ps.judge;

  if (ctx.mock_fixtures) {
    g.shared_mock = std::make_shared<MockProvider>(fs::path(*ctx.mock_fixtures), ctx.config.seed,
                                                   ctx.config.embedding_dim);
    g.teacher = std::make_unique<Gateway>(g.shared_mock, gateway_options(ctx, ps.teacher.model));
    g.student = std::make_unique<Gateway>(g.shared_mock, gateway_options(ctx, ps.student.model));
    g.embedder = std::make_unique<Gateway>(g.shared_mock, gateway_options(ctx, ps.embedder.model));
    g.judge = std::make_unique<Gateway>(g.shared_mock, gateway_options(ctx, judge_ep.model));
    return g;
  }
  auto need = [](const EndpointConfig& e, const char* role) {
    if (e.base_url.empty() || e.model.empty()) {
      throw Error(ErrorKind::invalid_config,
                  std::string("providers.") + role + " needs base_url and model (or pass a "
                  "scripted-fixture file)");
    }
  };
  need(ps.teacher, "teacher");
  need(ps.student, "student");
  need(ps.embedder, "embedder");
  need(judge_ep, "judge");
  g.teacher = std::make_unique<Gateway>(std::make_shared<HttpProvider>(ps.teacher),
                                        gateway_options(ctx, ps.teacher.model));
  g.student = std::make_unique<Gateway>(std::make_shared<HttpProvider>(ps.student),
                                        gateway_options(ctx, ps.student.model));
  g.embedder = std::make_unique<Gateway>(std::make_shared<HttpProvider>(ps.embedder),
                                         gateway_options(ctx, ps.embedder.model));
  g.judge = std::make_unique<Gateway>(std::make_shared<HttpProvider>(judge_ep),
                                      gateway_options(ctx, judge_ep.model));
  return g;
}

// Per-problem partial results: one JSON file per problem (named by the id's
// digest so arbitrary ids stay filesystem-safe), each stamped with the
// config hash.  A fresh (non-resume) run clears leftovers; a resumed run
// picks up every surviving bundle.  The DGRC_ABORT_AFTER_BUNDLES hook kills
// the process mid-stage after N newly stored bundles, for resume testing.
class BundleDir {
 public:
  BundleDir(fs::path dir, std::string cfg_hash, bool resume)
      : dir_(std::move(dir)), hash_(std::move(cfg_hash)) {
    if (!resume) fs::remove_all(dir_);
    fs::create_directories(dir_);
    for (const auto& entry : fs::directory_iterator(dir_)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
      json j = json::parse(read_file(entry.path()), nullptr, false);
      if (j.is_discarded() || !j.contains("config_hash") || !j.contains("problem_id")) {
        throw Error(ErrorKind::store_inconsistency,
                    "unreadable partial result: " + entry.path().string());
      }
      if (j.at("config_hash").get<std::string>() != hash_) {
        throw Error(ErrorKind::config_hash_mismatch,
                    "partial result from a different config: " + entry.path().string());
      }
      // The key must be read before the assignment: json's by-value operator=
      // may move from j while the subscript expression is still unevaluated.
      std::string pid = j.at("problem_id").get<std::string>();
      existing_[std::move(pid)] = std::move(j);
    }
    if (const char* env = std::getenv("DGRC_ABORT_AFTER_BUNDLES")) {
      abort_after_ = std::atoi(env);
    }
  }

  bool has(const std::string& pid) const { return existing_.count(pid) > 0; }
  const json& loaded(const std::string& pid) const { return existing_.at(pid); }

  void store(const std::string& pid, json payload) {
    payload["problem_id"] = pid;
    payload["config_hash"] = hash_;
    std::lock_guard<std::mutex> lock(mu_);
    atomic_write_file(dir_ / (sha256_hex(pid) + ".json"), encode_line(payload) + "\n");
    existing_[pid] = std::move(payload);
    ++stored_;
    if (abort_after_ >= 0 && stored_ >= abort_after_) {
      std::cerr << "aborting after " << stored_ << " partial results (test hook)\n";
      std::cerr.flush();
      std::_Exit(9);
    }
  }

  void clear() { fs::remove_all(dir_); }

 private:
  fs::path dir_;
  std::string hash_;
  std::map<std::string, json> existing_;
  std::mutex mu_;
  int stored_ = 0;
  int abort_after_ = -1;
};

bool all_exist(const std::vector<fs::path>& paths) {
  return std::all_of(paths.begin(), paths.end(), [](const fs::path& p) { return fs::exists(p); });
}

bool skip_complete_stage(const StageContext& ctx, const std::string& name,
                         const std::vector<fs::path>& finals) {
  if (ctx.resume && all_exist(finals)) {
    std::cout << name << ": outputs already present, skipping\n";
    return true;
  }
  return false;
}

void write_summary(const fs::path& p, json j, const std::string& cfg_hash) {
  j["config_hash"] = cfg_hash;
  atomic_write_file(p, encode_line(j) + "\n");
}

json read_summary(const fs::path& p, const std::string& expect_hash) {
  if (!fs::exists(p)) {
    throw Error(ErrorKind::missing_predecessor, "summary not found: " + p.string());
  }
  json j = json::parse(read_file(p), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("config_hash")) {
    throw Error(ErrorKind::store_inconsistency, "unreadable summary: " + p.string());
  }
  if (!expect_hash.empty() && j.at("config_hash").get<std::string>() != expect_hash) {
    throw Error(ErrorKind::config_hash_mismatch,
                p.string() + " comes from a different config than the current one");
  }
  return j;
}

template <typename T>
std::vector<T> read_store(const fs::path& p, const std::string& expect_hash) {
  JsonlStore store = read_jsonl(p, true, expect_hash);
  std::vector<T> out;
  out.reserve(store.records.size());
  for (const auto& j : store.records) out.push_back(j.template get<T>());
  return out;
}

template <typename T>
std::vector<json> to_records(const std::vector<T>& values) {
  std::vector<json> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(json(v));
  return out;
}

fs::path resolve_problems_path(const StageContext& ctx) {
  std::string p = ctx.problems_path ? *ctx.problems_path : ctx.config.problems_path;
  if (p.empty()) {
    throw Error(ErrorKind::invalid_config,
                "no problems file: set problems_path in the config or pass --problems");
  }
  return p;
}

std::map<std::string, ProblemRecord> problems_by_id(const std::vector<DiagnosticEntry>& diag,
                                                    const std::vector<NoDivergenceEntry>& nodiv) {
  std::map<std::string, ProblemRecord> out;
  for (const auto& d : diag) out[d.problem.id] = d.problem;
  for (const auto& n : nodiv) out[n.problem.id] = n.problem;
  return out;
}

void sort_pairs(std::vector<AtomicPair>& pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const AtomicPair& a, const AtomicPair& b) {
    return std::tie(a.problem_id, a.id) < std::tie(b.problem_id, b.id);
  });
}

std::map<std::string, std::vector<AtomicPair>> group_by_problem(std::vector<AtomicPair> pairs) {
  std::map<std::string, std::vector<AtomicPair>> out;
  for (auto& p : pairs) out[p.problem_id].push_back(std::move(p));
  return out;
}

}  // namespace

// ===== detect =====

void stage_detect(const StageContext& ctx) {
  const RunPaths& rp = ctx.paths;
  if (skip_complete_stage(ctx, "detect",
                          {rp.samples(), rp.diag(), rp.nodiv(), rp.quarantine(),
                           rp.divergence_summary()})) {
    return;
  }
  std::vector<ProblemRecord> problems = load_problems(resolve_problems_path(ctx));
  GatewaySet gw = make_gateways(ctx);
  PromptLibrary prompts{fs::path(ctx.config.prompts_dir)};
  BundleDir bundles(rp.partial_dir("detect"), ctx.cfg_hash, ctx.resume);

  atomic_write_file(rp.config(), encode_line(json{{"config", json::parse(dump_config(ctx.config))},
                                                  {"config_hash", ctx.cfg_hash}}) +
                                     "\n");

  parallel_for(problems.size(), ctx.config.concurrency_limit, [&](std::size_t i) {
    const ProblemRecord& problem = problems[i];
    if (bundles.has(problem.id)) return;
    json payload;
    try {
      auto teacher = sample_responses(problem, Role::teacher, ctx.config.K, *gw.teacher);
      auto student = sample_responses(problem, Role::student, ctx.config.J, *gw.student);
      JudgeMemo memo;
      JudgeContext jctx{gw.judge.get(), &prompts, &memo};
      auto pairs = detect_divergence(teacher, student, problem, jctx);
      payload = json{{"problem", problem},
                     {"teacher", teacher},
                     {"student", student},
                     {"pairs", pairs}};
    } catch (const Error& e) {
      payload = json{{"problem", problem},
                     {"quarantine", QuarantineEntry{problem.id, "detect",
                                                   to_string(e.kind()), e.message()}}};
    }
    bundles.store(problem.id, payload);
  });

  std::vector<json> samples, diags, nodivs, quars;
  std::int64_t n_pairs = 0;
  for (const auto& problem : problems) {
    const json& b = bundles.loaded(problem.id);
    if (b.contains("quarantine")) {
      quars.push_back(b.at("quarantine"));
      continue;
    }
    auto teacher = b.at("teacher").get<std::vector<ModelResponse>>();
    auto student = b.at("student").get<std::vector<ModelResponse>>();
    auto pairs = b.at("pairs").get<std::vector<DivergentPair>>();
    for (const auto& r : teacher) samples.push_back(json(r));
    for (const auto& r : student) samples.push_back(json(r));
    n_pairs += static_cast<std::int64_t>(pairs.size());
    DivergenceOutcome outcome = partition_outcome(problem, teacher, pairs);
    if (outcome.diagnostic) diags.push_back(json(*outcome.diagnostic));
    if (outcome.no_divergence) nodivs.push_back(json(*outcome.no_divergence));
  }

  write_jsonl(rp.samples(), "responses", ctx.cfg_hash, samples);
  write_jsonl(rp.diag(), "diag", ctx.cfg_hash, diags);
  write_jsonl(rp.nodiv(), "nodiv", ctx.cfg_hash, nodivs);
  write_jsonl(rp.quarantine(), "quarantine", ctx.cfg_hash, quars);
  write_summary(rp.divergence_summary(),
                json{{"n_problems", problems.size()},
                     {"n_diag", diags.size()},
                     {"n_nodiv", nodivs.size()},
                     {"n_quarantined", quars.size()},
                     {"n_divergent_pairs", n_pairs}},
                ctx.cfg_hash);
  bundles.clear();
  std::cout << "detect: " << diags.size() << " diagnostic, " << nodivs.size()
            << " no-divergence, " << quars.size() << " quarantined (" << problems.size()
            << " problems)\n";
}

// ===== synth-atomic =====

void stage_synth_atomic(const StageContext& ctx) {
  const RunPaths& rp = ctx.paths;
  if (skip_complete_stage(ctx, "synth-atomic",
                          {rp.atomic_raw(), rp.atomic_answered(), rp.synth_summary()})) {
    return;
  }
  auto diag = read_store<DiagnosticEntry>(rp.diag(), ctx.cfg_hash);
  auto samples = read_store<ModelResponse>(rp.samples(), ctx.cfg_hash);
  GatewaySet gw = make_gateways(ctx);
  PromptLibrary prompts{fs::path(ctx.config.prompts_dir)};
  BundleDir bundles(rp.partial_dir("synth"), ctx.cfg_hash, ctx.resume);

  std::map<std::string, std::map<int, const ModelResponse*>> student_by_problem;
  for (const auto& r : samples) {
    if (r.role == Role::student) student_by_problem[r.problem_id][r.sample_index] = &r;
  }

  parallel_for(diag.size(), ctx.config.concurrency_limit, [&](std::size_t i) {
    const DiagnosticEntry& entry = diag[i];
    const std::string& pid = entry.problem.id;
    if (bundles.has(pid)) return;
    std::vector<AtomicPair> pairs;
    std::vector<json> failures;
    for (const DivergentPair& dp : entry.divergent_pairs) {
      if (dp.teacher_sample < 0 ||
          dp.teacher_sample >= static_cast<int>(entry.teacher_responses.size())) {
        throw Error(ErrorKind::store_inconsistency,
                    "pair references missing teacher sample for " + pid);
      }
      auto sit = student_by_problem.find(pid);
      if (sit == student_by_problem.end() || !sit->second.count(dp.student_sample)) {
        throw Error(ErrorKind::store_inconsistency,
                    "pair references missing student sample for " + pid);
      }
      const std::string& chain_t = entry.teacher_responses[dp.teacher_sample].reasoning_chain;
      const std::string& chain_s = sit->second.at(dp.student_sample)->reasoning_chain;
      std::vector<std::string> questions;
      try {
        questions =
            generate_atomic_questions(entry.problem, dp, chain_t, chain_s, *gw.teacher, prompts);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::parse_error) throw;
        failures.push_back(json{{"teacher_sample", dp.teacher_sample},
                                {"student_sample", dp.student_sample},
                                {"message", e.message()}});
        continue;
      }
      for (std::size_t q = 0; q < questions.size(); ++q) {
        AtomicPair pair;
        pair.id = make_pair_id(pid, dp.teacher_sample, dp.student_sample, static_cast<int>(q));
        pair.problem_id = pid;
        pair.origin = {dp.teacher_sample, dp.student_sample};
        pair.question = questions[q];
        pair.status = PairStatus::raw;
        try {
          AtomicAnswer ans = answer_atomic(pair.question, "atomicans|" + pair.id, *gw.teacher);
          pair.answer_reasoning = ans.reasoning;
          pair.answer_final = ans.final_answer;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::format_error) throw;
          pair.note = "defect: " + e.message();
        }
        pairs.push_back(std::move(pair));
      }
    }
    bundles.store(pid, json{{"pairs", pairs}, {"generation_failures", failures}});
  });

  std::vector<AtomicPair> answered;
  std::int64_t n_genfail = 0, n_pairs_seen = 0, n_defect = 0;
  std::vector<json> failure_log;
  for (const auto& entry : diag) {
    const json& b = bundles.loaded(entry.problem.id);
    auto pairs = b.at("pairs").get<std::vector<AtomicPair>>();
    n_pairs_seen += static_cast<std::int64_t>(entry.divergent_pairs.size());
    for (const auto& f : b.at("generation_failures")) {
      json g = f;
      g["problem_id"] = entry.problem.id;
      failure_log.push_back(std::move(g));
      ++n_genfail;
    }
    for (auto& p : pairs) {
      if (!p.note.empty()) ++n_defect;
      answered.push_back(std::move(p));
    }
  }
  sort_pairs(answered);

  std::vector<AtomicPair> raw = answered;
  for (auto& p : raw) {
    p.answer_reasoning.clear();
    p.answer_final.clear();
    p.note.clear();
  }
  write_jsonl(rp.atomic_raw(), "atomic_raw", ctx.cfg_hash, to_records(raw));
  write_jsonl(rp.atomic_answered(), "atomic_answered", ctx.cfg_hash, to_records(answered));
  write_summary(rp.synth_summary(),
                json{{"n_problems", diag.size()},
                     {"n_divergent_pairs", n_pairs_seen},
                     {"n_questions", answered.size()},
                     {"n_defects", n_defect},
                     {"n_generation_failures", n_genfail},
                     {"generation_failures", failure_log}},
                ctx.cfg_hash);
  bundles.clear();
  std::cout << "synth-atomic: " << answered.size() << " questions from " << n_pairs_seen
            << " divergent pairs (" << n_defect << " answer defects, " << n_genfail
            << " generation failures)\n";
}

// ===== filter =====

void stage_filter(const StageContext& ctx) {
  const RunPaths& rp = ctx.paths;
  if (skip_complete_stage(ctx, "filter", {rp.atomic_filtered(), rp.filter_summary()})) return;
  auto answered = read_store<AtomicPair>(rp.atomic_answered(), ctx.cfg_hash);
  GatewaySet gw = make_gateways(ctx);
  PromptLibrary prompts{fs::path(ctx.config.prompts_dir)};
  BundleDir bundles(rp.partial_dir("filter"), ctx.cfg_hash, ctx.resume);

  auto grouped = group_by_problem(std::move(answered));
  std::vector<std::string> pids;
  pids.reserve(grouped.size());
  for (const auto& [pid, _] : grouped) pids.push_back(pid);

  parallel_for(pids.size(), ctx.config.concurrency_limit, [&](std::size_t i) {
    const std::string& pid = pids[i];
    if (bundles.has(pid)) return;
    std::vector<AtomicPair> clean, out;
    for (auto& p : grouped.at(pid)) {
      if (p.note.empty()) {
        clean.push_back(std::move(p));
      } else {
        out.push_back(std::move(p));  // answer defects never enter the funnel
      }
    }
    for (auto& p : clean) apply_ifd(p, *gw.student);
    FilterSplit band = ifd_filter(std::move(clean), ctx.config.tau_low, ctx.config.tau_high);
    FilterSplit dedup = similarity_dedup(std::move(band.retained), ctx.config.tau_sim,
                                         *gw.embedder);
    std::vector<AtomicPair> scored = score_pairs(std::move(dedup.retained), pid,
                                                 ctx.config.score_batch_size, *gw.judge, prompts);
    FilterSplit final_split = apply_quality_threshold(std::move(scored), ctx.config.tau_llm);
    auto take = [&out](std::vector<AtomicPair>& v) {
      for (auto& p : v) out.push_back(std::move(p));
    };
    take(band.rejected);
    take(dedup.rejected);
    take(final_split.rejected);
    take(final_split.retained);
    sort_pairs(out);
    bundles.store(pid, json{{"pairs", out}});
  });

  std::vector<AtomicPair> all;
  for (const auto& pid : pids) {
    auto pairs = bundles.loaded(pid).at("pairs").get<std::vector<AtomicPair>>();
    for (auto& p : pairs) all.push_back(std::move(p));
  }
  sort_pairs(all);

  std::int64_t n_defect = 0, n_ifd = 0, n_sim = 0, n_score = 0, n_accepted = 0;
  for (const auto& p : all) {
    switch (p.status) {
      case PairStatus::raw:
        ++n_defect;
        break;
      case PairStatus::ifd_rejected:
        ++n_ifd;
        break;
      case PairStatus::sim_rejected:
        ++n_sim;
        break;
      case PairStatus::score_rejected:
        ++n_score;
        break;
      case PairStatus::accepted:
        ++n_accepted;
        break;
    }
  }
  write_jsonl(rp.atomic_filtered(), "atomic_filtered", ctx.cfg_hash, to_records(all));
  write_summary(rp.filter_summary(),
                json{{"n_input", all.size()},
                     {"n_defect", n_defect},
                     {"n_ifd_rejected", n_ifd},
                     {"n_sim_rejected", n_sim},
                     {"n_score_rejected", n_score},
                     {"n_accepted", n_accepted}},
                ctx.cfg_hash);
  bundles.clear();
  std::cout << "filter: " << n_accepted << " accepted of " << all.size() << " (" << n_ifd
            << " difficulty, " << n_sim << " duplicate, " << n_score << " quality, " << n_defect
            << " defect)\n";
}

// ===== verify-cot =====

void stage_verify_cot(const StageContext& ctx) {
  const RunPaths& rp = ctx.paths;
  if (skip_complete_stage(ctx, "verify-cot", {rp.verified(), rp.verify_summary()})) return;
  auto diag = read_store<DiagnosticEntry>(rp.diag(), ctx.cfg_hash);
  auto filtered = read_store<AtomicPair>(rp.atomic_filtered(), ctx.cfg_hash);
  GatewaySet gw = make_gateways(ctx);
  PromptLibrary prompts{fs::path(ctx.config.prompts_dir)};
  BundleDir bundles(rp.partial_dir("verify"), ctx.cfg_hash, ctx.resume);

  std::map<std::string, std::vector<AtomicPair>> accepted;
  for (auto& p : filtered) {
    if (p.status == PairStatus::accepted) accepted[p.problem_id].push_back(std::move(p));
  }

  parallel_for(diag.size(), ctx.config.concurrency_limit, [&](std::size_t i) {
    const DiagnosticEntry& entry = diag[i];
    const std::string& pid = entry.problem.id;
    if (bundles.has(pid)) return;
    static const std::vector<AtomicPair> kNone;
    auto ait = accepted.find(pid);
    VerificationSet vset =
        build_verification_set(pid, ait == accepted.end() ? kNone : ait->second);
    std::vector<json> checks;
    std::vector<VerifiedChain> candidates;
    for (const ModelResponse& chain : entry.teacher_responses) {
      ChainVerdict v = verify_chain(entry.problem, chain, vset, *gw.teacher, prompts);
      checks.push_back(json{{"teacher_sample", chain.sample_index},
                            {"consistent", v.consistent},
                            {"audited", v.audited}});
      if (v.consistent) {
        candidates.push_back(VerifiedChain{pid, chain.sample_index, chain.raw_text,
                                           chain.final_answer,
                                           v.audited ? "consistent" : "unaudited"});
      }
    }
    json payload{{"checks", checks}};
    try {
      payload["selected"] = select_verified_chain(ctx.config.seed, pid, std::move(candidates));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::no_verified_chain) throw;
    }
    bundles.store(pid, payload);
  });

  std::vector<json> verified;
  std::int64_t n_failed = 0, n_unaudited = 0;
  for (const auto& entry : diag) {
    const json& b = bundles.loaded(entry.problem.id);
    if (!b.contains("selected")) {
      ++n_failed;
      continue;
    }
    auto chain = b.at("selected").get<VerifiedChain>();
    if (chain.audit == "unaudited") ++n_unaudited;
    verified.push_back(json(chain));
  }
  write_jsonl(rp.verified(), "verified", ctx.cfg_hash, verified);
  write_summary(rp.verify_summary(),
                json{{"n_problems", diag.size()},
                     {"n_verified", verified.size()},
                     {"n_no_verified_chain", n_failed},
                     {"n_unaudited", n_unaudited}},
                ctx.cfg_hash);
  bundles.clear();
  std::cout << "verify-cot: " << verified.size() << " chains kept, " << n_failed
            << " problems with none (" << n_unaudited << " unaudited)\n";
}

// ===== emit =====

namespace {

json dataset_entry(const fs::path& rel_root, const fs::path& p,
                   const std::vector<TrainingRecord>& records) {
  std::string body;
  for (const auto& r : records) body += encode_line(json(r)) + "\n";
  atomic_write_file(p, body);
  return json{{"path", fs::relative(p, rel_root).generic_string()},
              {"records", records.size()},
              {"sha256", sha256_hex(body)}};
}

}  // namespace

void stage_emit(const StageContext& ctx) {
  const RunPaths& rp = ctx.paths;
  if (skip_complete_stage(ctx, "emit", {rp.dataset_atomic(), rp.dataset_cot(), rp.dataset_grpo(),
                                        rp.manifest()})) {
    return;
  }
  auto filtered = read_store<AtomicPair>(rp.atomic_filtered(), ctx.cfg_hash);
  auto verified = read_store<VerifiedChain>(rp.verified(), ctx.cfg_hash);
  auto nodiv = read_store<NoDivergenceEntry>(rp.nodiv(), ctx.cfg_hash);
  auto diag = read_store<DiagnosticEntry>(rp.diag(), ctx.cfg_hash);

  std::vector<AtomicPair> accepted;
  for (auto& p : filtered) {
    if (p.status == PairStatus::accepted) accepted.push_back(std::move(p));
  }
  auto problems = problems_by_id(diag, nodiv);

  std::vector<TrainingRecord> atomic_ds = assemble_atomic_curriculum(std::move(accepted));
  std::vector<TrainingRecord> cot_ds = assemble_cot_curriculum(verified, nodiv, problems);
  GrpoSelection grpo =
      emit_grpo_subset(cot_ds, problems, ctx.config.grpo_per_option_target, ctx.config.seed);

  if (atomic_ds.empty()) std::cout << "emit: warning: atomic curriculum is empty\n";

  fs::create_directories(rp.manifest().parent_path());
  json manifest{
      {"schema_version", kSchemaVersion},
      {"config_hash", ctx.cfg_hash},
      {"seed", ctx.config.seed},
      {"token_count_method", "whitespace"},
      {"stage_order", json::array({"atomic", "cot"})},
      {"training", json{{"epochs", 3}, {"learning_rate", 1e-5}}},
      {"grpo", json{{"per_option_target", ctx.config.grpo_per_option_target},
                    {"available_per_option", grpo.available_per_option},
                    {"selected_per_option", grpo.selected_per_option},
                    {"shortfall_per_option", grpo.shortfall_per_option},
                    {"n_unparsed_outputs", grpo.n_unparsed_outputs}}},
      {"datasets", json{{"atomic", dataset_entry(rp.root, rp.dataset_atomic(), atomic_ds)},
                        {"cot", dataset_entry(rp.root, rp.dataset_cot(), cot_ds)},
                        {"grpo", dataset_entry(rp.root, rp.dataset_grpo(), grpo.records)}}},
  };
  atomic_write_file(rp.manifest(), encode_line(manifest) + "\n");
  std::cout << "emit: " << atomic_ds.size() << " atomic, " << cot_ds.size() << " chain, "
            << grpo.records.size() << " balanced-subset records\n";
}

// ===== audit =====

void stage_audit(const StageContext& ctx) {
  const RunPaths& rp = ctx.paths;
  if (skip_complete_stage(ctx, "audit", {rp.audit_report(), rp.audit_summary()})) return;
  auto filtered = read_store<AtomicPair>(rp.atomic_filtered(), ctx.cfg_hash);
  GatewaySet gw = make_gateways(ctx);
  PromptLibrary prompts{fs::path(ctx.config.prompts_dir)};

  std::vector<AtomicPair> accepted;
  for (auto& p : filtered) {
    if (p.status == PairStatus::accepted) accepted.push_back(std::move(p));
  }
  sort_pairs(accepted);

  std::size_t want = accepted.size();
  if (ctx.audit_sample) {
    if (*ctx.audit_sample < 1) throw Error(ErrorKind::invalid_config, "--sample must be >= 1");
    want = std::min<std::size_t>(want, static_cast<std::size_t>(*ctx.audit_sample));
  }
  std::vector<AtomicPair> chosen;
  if (want == accepted.size()) {
    chosen = std::move(accepted);
  } else {
    auto rng = seeded_rng(ctx.config.seed, "audit");
    for (std::size_t i = 0; i < want; ++i) {
      std::size_t j = i + rng.below(accepted.size() - i);
      std::swap(accepted[i], accepted[j]);
    }
    chosen.assign(accepted.begin(), accepted.begin() + want);
    sort_pairs(chosen);
  }

  BundleDir bundles(rp.partial_dir("audit"), ctx.cfg_hash, ctx.resume);
  auto grouped = group_by_problem(std::move(chosen));
  std::vector<std::string> pids;
  for (const auto& [pid, _] : grouped) pids.push_back(pid);

  parallel_for(pids.size(), ctx.config.concurrency_limit, [&](std::size_t i) {
    const std::string& pid = pids[i];
    if (bundles.has(pid)) return;
    std::vector<json> results;
    for (const auto& p : grouped.at(pid)) {
      AuditResult r = audit_atomic(p, *gw.judge, prompts);
      results.push_back(json{{"pair_id", p.id},
                             {"problem_id", pid},
                             {"valid", r.valid},
                             {"reasoning", r.reasoning}});
    }
    bundles.store(pid, json{{"results", results}});
  });

  std::vector<json> report;
  std::int64_t n_valid = 0;
  for (const auto& pid : pids) {
    for (const auto& r : bundles.loaded(pid).at("results")) {
      if (r.at("valid").get<bool>()) ++n_valid;
      report.push_back(r);
    }
  }
  std::sort(report.begin(), report.end(), [](const json& a, const json& b) {
    return a.at("pair_id").get<std::string>() < b.at("pair_id").get<std::string>();
  });
  double accuracy = report.empty() ? 0.0 : static_cast<double>(n_valid) / report.size();
  json summary{{"n", report.size()}, {"valid", n_valid}, {"accuracy", accuracy}};
  report.push_back(summary);
  write_jsonl(rp.audit_report(), "audit_report", ctx.cfg_hash, report);
  write_summary(rp.audit_summary(), summary, ctx.cfg_hash);
  bundles.clear();

  char pct[32];
  std::snprintf(pct, sizeof(pct), "%.1f", accuracy * 100.0);
  std::cout << "audit accuracy: " << pct << "% (" << n_valid << "/" << (report.size() - 1)
            << ")\n";
}

// ===== peer-correct =====

void stage_peer_correct(const StageContext& ctx) {
  const RunPaths& rp = ctx.paths;
  if (skip_complete_stage(ctx, "peer-correct", {rp.peer_report(), rp.peer_summary()})) return;
  auto diag = read_store<DiagnosticEntry>(rp.diag(), ctx.cfg_hash);
  auto filtered = read_store<AtomicPair>(rp.atomic_filtered(), ctx.cfg_hash);
  GatewaySet gw = make_gateways(ctx);
  PromptLibrary prompts{fs::path(ctx.config.prompts_dir)};
  BundleDir bundles(rp.partial_dir("peer"), ctx.cfg_hash, ctx.resume);

  std::map<std::string, std::vector<AtomicPair>> accepted;
  for (auto& p : filtered) {
    if (p.status == PairStatus::accepted) accepted[p.problem_id].push_back(std::move(p));
  }

  std::map<std::string, std::string> references;
  if (ctx.references_path) {
    for (const auto& line : read_lines(*ctx.references_path)) {
      if (trim(line).empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("problem_id") || !j.contains("reference")) {
        throw Error(ErrorKind::invalid_input, "references file needs {problem_id, reference} lines");
      }
      references[j.at("problem_id").get<std::string>()] = j.at("reference").get<std::string>();
    }
  }

  parallel_for(diag.size(), ctx.config.concurrency_limit, [&](std::size_t i) {
    const DiagnosticEntry& entry = diag[i];
    const std::string& pid = entry.problem.id;
    if (bundles.has(pid)) return;
    auto ait = accepted.find(pid);
    if (ait == accepted.end() || ait->second.empty()) {
      bundles.store(pid, json{{"eligible", false}});
      return;
    }
    VerificationSet vset = build_verification_set(pid, ait->second);
    const ModelResponse& original = entry.teacher_responses.front();
    std::string original_prediction =
        original.final_answer.kind == AnswerKind::unparseable ? "" : original.final_answer.value;
    PeerCorrection pc = peer_correct(entry.problem, original.reasoning_chain, original_prediction,
                                     vset, *gw.teacher, prompts);
    json payload{{"eligible", true},
                 {"changed", pc.changed},
                 {"original_prediction", original_prediction}};
    if (pc.changed) {
      payload["corrected_chain"] = pc.corrected_chain;
      payload["corrected_prediction"] = pc.corrected_prediction;
      payload["prediction_changed"] = pc.corrected_prediction != original_prediction;
      if (!references.empty()) {
        auto rit = references.find(pid);
        payload["matches_reference"] =
            rit != references.end() && rit->second == pc.corrected_prediction;
      }
    }
    bundles.store(pid, payload);
  });

  std::vector<json> report;
  std::int64_t n_eligible = 0, n_changed = 0, n_pred_changed = 0, n_match = 0;
  for (const auto& entry : diag) {
    json r = bundles.loaded(entry.problem.id);
    r.erase("config_hash");
    r["problem_id"] = entry.problem.id;
    if (r.at("eligible").get<bool>()) {
      ++n_eligible;
      if (r.at("changed").get<bool>()) {
        ++n_changed;
        if (r.value("prediction_changed", false)) ++n_pred_changed;
        if (r.value("matches_reference", false)) ++n_match;
      }
    }
    report.push_back(std::move(r));
  }
  double rate = 0.0;
  if (n_eligible > 0) {
    rate = static_cast<double>(references.empty() ? n_pred_changed : n_match) / n_eligible;
  }
  write_jsonl(rp.peer_report(), "peer_report", ctx.cfg_hash, report);
  write_summary(rp.peer_summary(),
                json{{"n_problems", diag.size()},
                     {"n_eligible", n_eligible},
                     {"n_changed", n_changed},
                     {"n_prediction_changed", n_pred_changed},
                     {"n_matching_reference", n_match},
                     {"used_references", !references.empty()},
                     {"correction_rate", rate}},
                ctx.cfg_hash);
  bundles.clear();
  std::cout << "peer-correct: " << n_changed << " rewrites over " << n_eligible
            << " eligible problems\n";
}

// ===== stats =====

namespace {

void check_count(const json& summary, const char* key, std::int64_t actual, const fs::path& p) {
  if (!summary.contains(key)) {
    throw Error(ErrorKind::store_inconsistency, p.string() + " lacks " + key);
  }
  auto claimed = summary.at(key).get<std::int64_t>();
  if (claimed != actual) {
    throw Error(ErrorKind::store_inconsistency,
                p.string() + " claims " + key + "=" + std::to_string(claimed) + " but the stores" +
                    " recount to " + std::to_string(actual));
  }
}

double mean_output_tokens(const std::vector<TrainingRecord>& records) {
  if (records.empty()) return 0.0;
  std::size_t total = 0;
  for (const auto& r : records) total += whitespace_token_count(r.output);
  return static_cast<double>(total) / static_cast<double>(records.size());
}

std::vector<TrainingRecord> read_dataset(const fs::path& p) {
  JsonlStore store = read_jsonl(p, false);
  std::vector<TrainingRecord> out;
  out.reserve(store.records.size());
  for (const auto& j : store.records) out.push_back(j.get<TrainingRecord>());
  return out;
}

}  // namespace

CurriculumStats compute_stats(const RunPaths& paths, const std::string& expect_hash) {
  CurriculumStats s;

  json div_summary = read_summary(paths.divergence_summary(), expect_hash);
  auto diag = read_store<DiagnosticEntry>(paths.diag(), expect_hash);
  auto nodiv = read_store<NoDivergenceEntry>(paths.nodiv(), expect_hash);
  auto quar = read_store<QuarantineEntry>(paths.quarantine(), expect_hash);
  std::int64_t pair_recount = 0;
  for (const auto& d : diag) pair_recount += static_cast<std::int64_t>(d.divergent_pairs.size());
  check_count(div_summary, "n_diag", diag.size(), paths.divergence_summary());
  check_count(div_summary, "n_nodiv", nodiv.size(), paths.divergence_summary());
  check_count(div_summary, "n_quarantined", quar.size(), paths.divergence_summary());
  check_count(div_summary, "n_divergent_pairs", pair_recount, paths.divergence_summary());
  s.n_unlabeled = div_summary.at("n_problems").get<std::int64_t>();
  s.n_divergent_problems = static_cast<std::int64_t>(diag.size());
  s.n_no_divergence = static_cast<std::int64_t>(nodiv.size());
  s.n_quarantined = static_cast<std::int64_t>(quar.size());
  s.n_divergent_pairs = pair_recount;
  if (s.n_divergent_problems + s.n_no_divergence + s.n_quarantined != s.n_unlabeled) {
    throw Error(ErrorKind::store_inconsistency,
                "problem conservation is broken: " + std::to_string(s.n_divergent_problems) + " + " +
                    std::to_string(s.n_no_divergence) + " + " + std::to_string(s.n_quarantined) +
                    " != " + std::to_string(s.n_unlabeled));
  }

  auto raw = read_store<AtomicPair>(paths.atomic_raw(), expect_hash);
  auto answered = read_store<AtomicPair>(paths.atomic_answered(), expect_hash);
  if (raw.size() != answered.size()) {
    throw Error(ErrorKind::store_inconsistency, "question and answer stores disagree in size");
  }
  json synth_summary = read_summary(paths.synth_summary(), expect_hash);
  check_count(synth_summary, "n_questions", answered.size(), paths.synth_summary());
  s.n_raw_atomic = static_cast<std::int64_t>(raw.size());

  auto filtered = read_store<AtomicPair>(paths.atomic_filtered(), expect_hash);
  std::int64_t n_accepted = 0;
  for (const auto& p : filtered) {
    if (p.status == PairStatus::accepted) ++n_accepted;
  }
  json filter_summary = read_summary(paths.filter_summary(), expect_hash);
  check_count(filter_summary, "n_input", filtered.size(), paths.filter_summary());
  check_count(filter_summary, "n_accepted", n_accepted, paths.filter_summary());
  s.n_filtered_atomic = n_accepted;

  auto verified = read_store<VerifiedChain>(paths.verified(), expect_hash);
  json verify_summary = read_summary(paths.verify_summary(), expect_hash);
  check_count(verify_summary, "n_verified", verified.size(), paths.verify_summary());
  s.n_verified_cots = static_cast<std::int64_t>(verified.size());

  auto atomic_ds = read_dataset(paths.dataset_atomic());
  auto cot_ds = read_dataset(paths.dataset_cot());
  if (static_cast<std::int64_t>(atomic_ds.size()) != n_accepted) {
    throw Error(ErrorKind::store_inconsistency,
                "atomic dataset holds " + std::to_string(atomic_ds.size()) + " records for " +
                    std::to_string(n_accepted) + " accepted pairs");
  }
  s.n_total_cots = static_cast<std::int64_t>(cot_ds.size());
  if (s.n_total_cots != s.n_verified_cots + s.n_no_divergence) {
    throw Error(ErrorKind::store_inconsistency,
                "chain dataset size " + std::to_string(s.n_total_cots) + " != verified " +
                    std::to_string(s.n_verified_cots) + " + no-divergence " +
                    std::to_string(s.n_no_divergence));
  }
  s.avg_tokens_atomic = mean_output_tokens(atomic_ds);
  s.avg_tokens_cot = mean_output_tokens(cot_ds);
  return s;
}

void stage_stats(const StageContext& ctx) {
  const RunPaths& rp = ctx.paths;
  if (skip_complete_stage(ctx, "stats", {rp.stats()})) return;
  CurriculumStats stats = compute_stats(rp, ctx.cfg_hash);
  json j = stats;
  j["config_hash"] = ctx.cfg_hash;
  j["token_count_method"] = "whitespace";
  atomic_write_file(rp.stats(), encode_line(j) + "\n");
  std::cout << "stats: " << stats.n_unlabeled << " problems -> " << stats.n_filtered_atomic
            << " atomic + " << stats.n_total_cots << " chain records\n";
}

}  // namespace dgrc
