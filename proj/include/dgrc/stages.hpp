#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dgrc/config.hpp"
#include "dgrc/gateway.hpp"
#include "dgrc/prompts.hpp"
#include "dgrc/types.hpp"

namespace dgrc {

// ===== run directory layout =====

struct RunPaths {
  std::filesystem::path root;

  explicit RunPaths(std::filesystem::path r) : root(std::move(r)) {}

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path samples() const { return root / "responses" / "samples.jsonl"; }

  std::filesystem::path diag() const { return root / "divergence" / "diag.jsonl"; }
  std::filesystem::path nodiv() const { return root / "divergence" / "nodiv.jsonl"; }
  std::filesystem::path quarantine() const { return root / "divergence" / "quarantine.jsonl"; }
  std::filesystem::path divergence_summary() const { return root / "divergence" / "summary.json"; }

  std::filesystem::path atomic_raw() const { return root / "atomic" / "raw.jsonl"; }
  std::filesystem::path atomic_answered() const { return root / "atomic" / "answered.jsonl"; }
  std::filesystem::path synth_summary() const { return root / "atomic" / "synth_summary.json"; }
  std::filesystem::path atomic_filtered() const { return root / "atomic" / "filtered.jsonl"; }
  std::filesystem::path filter_summary() const { return root / "atomic" / "filter_summary.json"; }

  std::filesystem::path verified() const { return root / "cot" / "verified.jsonl"; }
  std::filesystem::path verify_summary() const { return root / "cot" / "summary.json"; }

  std::filesystem::path dataset_atomic() const { return root / "datasets" / "atomic.jsonl"; }
  std::filesystem::path dataset_cot() const { return root / "datasets" / "cot.jsonl"; }
  std::filesystem::path dataset_grpo() const { return root / "datasets" / "grpo.jsonl"; }
  std::filesystem::path manifest() const { return root / "datasets" / "manifest.json"; }

  std::filesystem::path audit_report() const { return root / "audit" / "report.jsonl"; }
  std::filesystem::path audit_summary() const { return root / "audit" / "summary.json"; }

  std::filesystem::path peer_report() const { return root / "peer_correct" / "report.jsonl"; }
  std::filesystem::path peer_summary() const { return root / "peer_correct" / "summary.json"; }

  std::filesystem::path stats() const { return root / "stats.json"; }
  std::filesystem::path error_summary() const { return root / "error_summary.json"; }

  std::filesystem::path partial_dir(const std::string& stage) const {
    return root / "partial" / stage;
  }
  std::filesystem::path default_cache_dir() const { return root / "cache"; }
};

// ===== one resolved stage invocation =====

struct StageContext {
  PipelineConfig config;
  std::string cfg_hash;
  RunPaths paths;
  bool resume = false;
  std::optional<std::string> mock_fixtures;  // scripted-provider mode when set
  std::optional<std::string> cache_dir;      // defaults to <out>/cache
  std::optional<std::string> problems_path;  // overrides config.problems_path
  std::optional<int> audit_sample;           // audit stage: sample size
  std::optional<std::string> references_path;  // peer-correct replay references
};

// Headerless JSONL of problem records; ids must be unique.  Returned sorted
// by id so every stage walks problems in the same order.
std::vector<ProblemRecord> load_problems(const std::filesystem::path& p);

// ===== stages =====
// Each stage reads its predecessors' stores (missing_predecessor if absent),
// does its work problem by problem with per-problem partial files, and
// finalizes sorted stores plus a summary.  With resume set, a stage whose
// final outputs already exist returns immediately, and otherwise picks up
// from the surviving partials.

void stage_detect(const StageContext& ctx);
void stage_synth_atomic(const StageContext& ctx);
void stage_filter(const StageContext& ctx);
void stage_verify_cot(const StageContext& ctx);
void stage_emit(const StageContext& ctx);
void stage_audit(const StageContext& ctx);
void stage_peer_correct(const StageContext& ctx);
void stage_stats(const StageContext& ctx);

// Recounts every statistic from the persisted stores and cross-checks the
// stage summaries; any disagreement raises store_inconsistency.
CurriculumStats compute_stats(const RunPaths& paths, const std::string& expect_hash);

}  // namespace dgrc
