#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "dgrc/config.hpp"
#include "dgrc/errors.hpp"
#include "dgrc/serialization.hpp"
#include "dgrc/stages.hpp"
#include "dgrc/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  bool resume = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> concurrency;
  std::optional<std::string> cache_dir;
  std::optional<std::string> mock_fixtures;
  std::optional<std::string> problems;
  std::optional<int> audit_sample;
  std::optional<std::string> references;
};

void add_common_options(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--config", o.config_path, "Pipeline configuration file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out_dir, "Run directory for stores and reports")->required();
  cmd->add_flag("--resume", o.resume, "Reuse existing outputs and per-problem partial results");
  cmd->add_option("--seed", o.seed, "Override the configured random seed");
  cmd->add_option("--concurrency", o.concurrency, "Override the configured worker count");
  cmd->add_option("--cache-dir", o.cache_dir,
                  "Response cache location (default: <out>/cache)");
  cmd->add_option("--mock-fixtures", o.mock_fixtures,
                  "Serve all model calls from this scripted fixture file instead of HTTP");
}

int exit_code_for(dgrc::ErrorKind kind) {
  switch (kind) {
    case dgrc::ErrorKind::invalid_config:
    case dgrc::ErrorKind::config_hash_mismatch:
      return 2;
    case dgrc::ErrorKind::missing_predecessor:
      return 3;
    case dgrc::ErrorKind::transport_error:
    case dgrc::ErrorKind::provider_refusal:
    case dgrc::ErrorKind::mock_fixture_miss:
    case dgrc::ErrorKind::unsupported_capability:
      return 4;
    default:
      return 1;
  }
}

int run_stage(const std::string& stage_name, const CliOptions& o,
              const std::function<void(const dgrc::StageContext&)>& stage) {
  dgrc::RunPaths paths{fs::path(o.out_dir)};
  try {
    dgrc::PipelineConfig config = dgrc::load_config(o.config_path);
    if (o.seed) config.seed = *o.seed;
    if (o.concurrency) config.concurrency_limit = *o.concurrency;
    dgrc::validate_config(config);

    dgrc::StageContext ctx{config,           dgrc::config_hash(config), paths,     o.resume,
                           o.mock_fixtures,  o.cache_dir,               o.problems, o.audit_sample,
                           o.references};
    fs::create_directories(paths.root);
    fs::remove(paths.error_summary());  // stale abort marker from a previous run
    stage(ctx);
    return 0;
  } catch (const dgrc::Error& e) {
    int code = exit_code_for(e.kind());
    std::cerr << "error (" << dgrc::to_string(e.kind()) << "): " << e.message() << "\n";
    fs::create_directories(paths.root);
    dgrc::atomic_write_file(paths.error_summary(),
                            dgrc::encode_line(json{{"stage", stage_name},
                                                   {"error_kind", dgrc::to_string(e.kind())},
                                                   {"message", e.message()},
                                                   {"exit_code", code}}) +
                                "\n");
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    fs::create_directories(paths.root);
    dgrc::atomic_write_file(paths.error_summary(),
                            dgrc::encode_line(json{{"stage", stage_name},
                                                   {"error_kind", "unexpected"},
                                                   {"message", e.what()},
                                                   {"exit_code", 1}}) +
                                "\n");
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Divergence-guided curriculum pipeline"};
  app.require_subcommand(1);
  CliOptions o;

  auto* detect = app.add_subcommand(
      "detect", "Sample both models on every problem and find divergent response pairs");
  add_common_options(detect, o);
  detect->add_option("--problems", o.problems,
                     "Problems file (JSONL); overrides the configured path")
      ->check(CLI::ExistingFile);

  auto* synth = app.add_subcommand(
      "synth-atomic", "Turn divergent pairs into atomic questions with fresh answers");
  add_common_options(synth, o);

  auto* filter = app.add_subcommand(
      "filter", "Run the difficulty, duplicate, and quality filters over the atomic pairs");
  add_common_options(filter, o);

  auto* verify = app.add_subcommand(
      "verify-cot", "Check candidate reasoning chains against accepted facts and pick one");
  add_common_options(verify, o);

  auto* emit = app.add_subcommand(
      "emit", "Write the training datasets, balanced subset, and manifest");
  add_common_options(emit, o);

  auto* audit = app.add_subcommand(
      "audit", "Grade accepted atomic answers independently and report accuracy");
  add_common_options(audit, o);
  audit->add_option("--sample", o.audit_sample,
                    "Audit a seeded random sample of this size instead of every pair");

  auto* peer = app.add_subcommand(
      "peer-correct", "Offer each diagnosed problem's original chain a fact-based rewrite");
  add_common_options(peer, o);
  peer->add_option("--references", o.references,
                   "Reference answers (JSONL of {problem_id, reference}) for correction scoring")
      ->check(CLI::ExistingFile);

  auto* stats = app.add_subcommand(
      "stats", "Recount every store and cross-check the stage summaries");
  add_common_options(stats, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (detect->parsed()) return run_stage("detect", o, dgrc::stage_detect);
  if (synth->parsed()) return run_stage("synth-atomic", o, dgrc::stage_synth_atomic);
  if (filter->parsed()) return run_stage("filter", o, dgrc::stage_filter);
  if (verify->parsed()) return run_stage("verify-cot", o, dgrc::stage_verify_cot);
  if (emit->parsed()) return run_stage("emit", o, dgrc::stage_emit);
  if (audit->parsed()) return run_stage("audit", o, dgrc::stage_audit);
  if (peer->parsed()) return run_stage("peer-correct", o, dgrc::stage_peer_correct);
  if (stats->parsed()) return run_stage("stats", o, dgrc::stage_stats);
  return 2;
}
