#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dgrc/types.hpp"

namespace dgrc {

// One training record per accepted pair, sorted by (problem_id, pair id).
// The instruction replays the exact text the answer was generated under.
std::vector<TrainingRecord> assemble_atomic_curriculum(std::vector<AtomicPair> accepted_pairs);

// Verified chains plus no-divergence chains, one record per problem, sorted
// by problem id.  The instruction replays the sampling instruction; the
// output is the raw chain text, tags included.
std::vector<TrainingRecord> assemble_cot_curriculum(
    const std::vector<VerifiedChain>& verified, const std::vector<NoDivergenceEntry>& no_divergence,
    const std::map<std::string, ProblemRecord>& problems);

struct GrpoSelection {
  std::vector<TrainingRecord> records;  // sorted by problem id
  std::map<std::string, std::int64_t> available_per_option;
  std::map<std::string, std::int64_t> selected_per_option;
  std::map<std::string, std::int64_t> shortfall_per_option;  // only options short of target
  std::int64_t n_unparsed_outputs = 0;  // records with no extractable final answer
};

// Label-balanced subset of the chain dataset: per distinct final answer in
// the chains themselves (never a ground-truth label), uniformly sample
// min(target, available) records without replacement, deterministically in
// the run seed.
GrpoSelection emit_grpo_subset(const std::vector<TrainingRecord>& cot_records,
                               const std::map<std::string, ProblemRecord>& problems,
                               int per_option_target, std::uint64_t seed);

}  // namespace dgrc
