#include "dgrc/forge.hpp"

#include <algorithm>

#include "dgrc/answer_kit.hpp"
#include "dgrc/divergence.hpp"
#include "dgrc/errors.hpp"
#include "dgrc/prompts.hpp"
#include "dgrc/synthesis.hpp"
#include "dgrc/util.hpp"

namespace dgrc {

std::vector<TrainingRecord> assemble_atomic_curriculum(std::vector<AtomicPair> accepted_pairs) {
  std::sort(accepted_pairs.begin(), accepted_pairs.end(),
            [](const AtomicPair& a, const AtomicPair& b) {
              return std::tie(a.problem_id, a.id) < std::tie(b.problem_id, b.id);
            });
  std::vector<TrainingRecord> out;
  out.reserve(accepted_pairs.size());
  for (const auto& p : accepted_pairs) {
    if (p.status != PairStatus::accepted) {
      throw Error(ErrorKind::invalid_input, "pair " + p.id + " is not accepted");
    }
    TrainingRecord r;
    r.instruction = p.question + "\n" + kAtomicAnswerSuffix;
    r.output = atomic_output_text(p);
    r.meta = {p.problem_id, "atomic", ""};
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<TrainingRecord> assemble_cot_curriculum(
    const std::vector<VerifiedChain>& verified, const std::vector<NoDivergenceEntry>& no_divergence,
    const std::map<std::string, ProblemRecord>& problems) {
  std::vector<TrainingRecord> out;
  out.reserve(verified.size() + no_divergence.size());
  for (const auto& v : verified) {
    auto it = problems.find(v.problem_id);
    if (it == problems.end()) {
      throw Error(ErrorKind::invalid_input, "verified chain for unknown problem " + v.problem_id);
    }
    TrainingRecord r;
    r.instruction = sampling_instruction(it->second);
    r.output = v.chain;
    r.meta = {v.problem_id, "cot", "verified"};
    out.push_back(std::move(r));
  }
  for (const auto& nd : no_divergence) {
    TrainingRecord r;
    r.instruction = sampling_instruction(nd.problem);
    r.output = nd.teacher_response.raw_text;
    r.meta = {nd.problem.id, "cot", "no_divergence"};
    out.push_back(std::move(r));
  }
  for (const auto& r : out) {
    if (r.output.empty()) {
      throw Error(ErrorKind::invalid_input, "empty chain for problem " + r.meta.problem_id);
    }
  }
  std::sort(out.begin(), out.end(), [](const TrainingRecord& a, const TrainingRecord& b) {
    return a.meta.problem_id < b.meta.problem_id;
  });
  return out;
}

GrpoSelection emit_grpo_subset(const std::vector<TrainingRecord>& cot_records,
                               const std::map<std::string, ProblemRecord>& problems,
                               int per_option_target, std::uint64_t seed) {
  if (per_option_target < 1) {
    throw Error(ErrorKind::invalid_input, "per-option target must be >= 1");
  }
  GrpoSelection sel;
  // Group record indices by the final answer parsed out of the chain itself.
  std::map<std::string, std::vector<std::size_t>> by_option;
  for (std::size_t i = 0; i < cot_records.size(); ++i) {
    const auto& r = cot_records[i];
    auto it = problems.find(r.meta.problem_id);
    if (it == problems.end()) {
      throw Error(ErrorKind::invalid_input, "chain record for unknown problem " + r.meta.problem_id);
    }
    ParsedAnswer ans = extract_final_answer(r.output, it->second.kind, it->second.options);
    if (ans.kind == AnswerKind::unparseable) {
      ++sel.n_unparsed_outputs;
      continue;
    }
    by_option[ans.value].push_back(i);
  }

  std::vector<std::size_t> chosen;
  for (const auto& [option, indices] : by_option) {
    auto n_avail = static_cast<std::int64_t>(indices.size());
    sel.available_per_option[option] = n_avail;
    auto take = std::min<std::int64_t>(per_option_target, n_avail);
    sel.selected_per_option[option] = take;
    if (n_avail < per_option_target) {
      sel.shortfall_per_option[option] = per_option_target - n_avail;
    }
    if (take == n_avail) {
      chosen.insert(chosen.end(), indices.begin(), indices.end());
      continue;
    }
    // Partial Fisher-Yates: the first `take` slots are a uniform sample
    // without replacement.
    std::vector<std::size_t> pool = indices;
    auto rng = seeded_rng(seed, "grpo|" + option);
    for (std::int64_t i = 0; i < take; ++i) {
      std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      chosen.push_back(pool[i]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t i : chosen) sel.records.push_back(cot_records[i]);
  return sel;
}

}  // namespace dgrc
