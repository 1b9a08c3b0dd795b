#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "dgrc/types.hpp"

namespace dgrc {

// ADL hooks for nlohmann::json.  Encoding is canonical: keys come out
// sorted, absent optionals are omitted, so encode(decode(encode(x))) is
// byte-identical to encode(x).

void to_json(nlohmann::json& j, const McOption& v);
void from_json(const nlohmann::json& j, McOption& v);

void to_json(nlohmann::json& j, const ProblemRecord& v);
void from_json(const nlohmann::json& j, ProblemRecord& v);

void to_json(nlohmann::json& j, const ParsedAnswer& v);
void from_json(const nlohmann::json& j, ParsedAnswer& v);

void to_json(nlohmann::json& j, const TokenScore& v);
void from_json(const nlohmann::json& j, TokenScore& v);

void to_json(nlohmann::json& j, const ModelResponse& v);
void from_json(const nlohmann::json& j, ModelResponse& v);

void to_json(nlohmann::json& j, const DivergentPair& v);
void from_json(const nlohmann::json& j, DivergentPair& v);

void to_json(nlohmann::json& j, const DiagnosticEntry& v);
void from_json(const nlohmann::json& j, DiagnosticEntry& v);

void to_json(nlohmann::json& j, const NoDivergenceEntry& v);
void from_json(const nlohmann::json& j, NoDivergenceEntry& v);

void to_json(nlohmann::json& j, const QuarantineEntry& v);
void from_json(const nlohmann::json& j, QuarantineEntry& v);

void to_json(nlohmann::json& j, const FilterMetrics& v);
void from_json(const nlohmann::json& j, FilterMetrics& v);

void to_json(nlohmann::json& j, const PairOrigin& v);
void from_json(const nlohmann::json& j, PairOrigin& v);

void to_json(nlohmann::json& j, const AtomicPair& v);
void from_json(const nlohmann::json& j, AtomicPair& v);

void to_json(nlohmann::json& j, const Fact& v);
void from_json(const nlohmann::json& j, Fact& v);

void to_json(nlohmann::json& j, const VerificationSet& v);
void from_json(const nlohmann::json& j, VerificationSet& v);

void to_json(nlohmann::json& j, const VerifiedChain& v);
void from_json(const nlohmann::json& j, VerifiedChain& v);

void to_json(nlohmann::json& j, const TrainingMeta& v);
void from_json(const nlohmann::json& j, TrainingMeta& v);

void to_json(nlohmann::json& j, const TrainingRecord& v);
void from_json(const nlohmann::json& j, TrainingRecord& v);

void to_json(nlohmann::json& j, const CurriculumStats& v);
void from_json(const nlohmann::json& j, CurriculumStats& v);

// Canonical single-line encoding used for every persisted record.
std::string encode_line(const nlohmann::json& j);

// ===== JSONL stage stores =====

inline constexpr int kSchemaVersion = 1;

// Stage stores open with one header record {"config_hash", "schema_version",
// "store"} so a file copied between runs with different configs is caught
// even without its sibling summary.  Training datasets skip the header (the
// manifest carries their hash); pass an empty store name for those.

std::string store_header_line(const std::string& store_name, const std::string& cfg_hash);

struct JsonlStore {
  std::vector<nlohmann::json> records;
  std::string config_hash;  // empty for headerless files
};

// Writes header (unless store_name is empty) + one line per record, via
// temp-file rename.
void write_jsonl(const std::filesystem::path& p, const std::string& store_name,
                 const std::string& cfg_hash, const std::vector<nlohmann::json>& records);

// Reads a store written by write_jsonl.  When expect_hash is nonempty, a
// header with a different config hash raises config_hash_mismatch.
JsonlStore read_jsonl(const std::filesystem::path& p, bool expect_header,
                      const std::string& expect_hash = "");

}  // namespace dgrc
