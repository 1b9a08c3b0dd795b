#include "dgrc/filters.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dgrc/errors.hpp"
#include "dgrc/synthesis.hpp"
#include "dgrc/util.hpp"

namespace dgrc {

namespace {

using nlohmann::json;

std::optional<json> parse_with_recovery(const std::string& completion, char open, char close) {
  std::string t = strip_fences_and_quotes(completion);
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (attempt == 1) {
      auto lo = t.find(open);
      auto hi = t.rfind(close);
      if (lo == std::string::npos || hi == std::string::npos || hi <= lo) break;
      t = t.substr(lo, hi - lo + 1);
    }
    json parsed = json::parse(t, nullptr, false);
    if (!parsed.is_discarded()) return parsed;
  }
  return std::nullopt;
}

std::string clip(const std::string& s) {
  return s.size() > 200 ? s.substr(0, 200) + "..." : s;
}

}  // namespace

// ===== difficulty ratio =====

IfdScores ifd_score(const std::string& question, const std::string& answer_text, Gateway& scorer) {
  if (question.empty() || answer_text.empty()) {
    throw Error(ErrorKind::invalid_input, "difficulty scoring needs question and answer text");
  }
  IfdScores out;
  out.s_cond = scorer.score_nll(question, answer_text).total_nll;
  out.s_direct = scorer.score_nll("", answer_text).total_nll;
  if (out.s_direct == 0.0) {
    throw Error(ErrorKind::degenerate_score, "unconditional answer score is zero");
  }
  out.ifd = out.s_cond / out.s_direct;
  return out;
}

void apply_ifd(AtomicPair& pair, Gateway& scorer) {
  const std::string answer_text = atomic_output_text(pair);
  if (pair.question.empty() || answer_text.empty()) {
    throw Error(ErrorKind::invalid_input, "difficulty scoring needs question and answer text");
  }
  double s_cond = scorer.score_nll(pair.question, answer_text).total_nll;
  double s_direct = scorer.score_nll("", answer_text).total_nll;
  pair.metrics.s_cond = s_cond;
  pair.metrics.s_direct = s_direct;
  if (s_direct == 0.0) {
    pair.status = PairStatus::ifd_rejected;
    pair.note = "degenerate direct score";
    return;
  }
  pair.metrics.ifd = s_cond / s_direct;
}

FilterSplit ifd_filter(std::vector<AtomicPair> pairs, double tau_low, double tau_high) {
  FilterSplit split;
  for (auto& p : pairs) {
    if (p.status == PairStatus::ifd_rejected) {  // degenerate score, already marked
      split.rejected.push_back(std::move(p));
      continue;
    }
    if (!p.metrics.ifd) {
      throw Error(ErrorKind::invalid_input, "pair " + p.id + " reached the band filter unscored");
    }
    double v = *p.metrics.ifd;
    if (v >= tau_low && v <= tau_high) {
      split.retained.push_back(std::move(p));
    } else {
      p.status = PairStatus::ifd_rejected;
      p.note = "ifd outside retention range";
      split.rejected.push_back(std::move(p));
    }
  }
  return split;
}

// ===== similarity dedup =====

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::invalid_input, "cosine of vectors with different dimensions");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string embedding_text(const AtomicPair& pair) {
  return pair.question + " " + pair.answer_final;
}

FilterSplit similarity_dedup(std::vector<AtomicPair> pairs, double tau_sim, Gateway& embedder) {
  FilterSplit split;
  const std::size_t n = pairs.size();
  if (n == 0) return split;
  if (n == 1) {
    split.retained.push_back(std::move(pairs[0]));
    return split;
  }
  for (const auto& p : pairs) {
    if (p.problem_id != pairs[0].problem_id) {
      throw Error(ErrorKind::invalid_input, "dedup mixes problems " + pairs[0].problem_id +
                                                " and " + p.problem_id);
    }
    if (!p.metrics.ifd) {
      throw Error(ErrorKind::invalid_input, "pair " + p.id + " reached dedup without an ifd");
    }
  }

  std::vector<std::vector<double>> vecs(n);
  for (std::size_t i = 0; i < n; ++i) vecs[i] = embedder.embed(embedding_text(pairs[i]));

  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) sim[i][j] = sim[j][i] = cosine(vecs[i], vecs[j]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double m = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) m = std::max(m, sim[i][j]);
    }
    pairs[i].metrics.max_similarity = m;
  }

  std::vector<bool> alive(n, true);
  std::vector<std::string> dropped_for(n);  // surviving partner of each drop
  while (true) {
    // Highest-similarity duo at or above the bar; ties resolved by the
    // lexicographically smallest (low id, high id) pair.
    std::size_t bi = n, bj = n;
    double best = -2.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        double s = sim[i][j];
        if (s < tau_sim) continue;
        bool better = false;
        if (s > best) {
          better = true;
        } else if (s == best && bi < n) {
          auto key = [&](std::size_t a, std::size_t b) {
            return std::make_pair(std::min(pairs[a].id, pairs[b].id),
                                  std::max(pairs[a].id, pairs[b].id));
          };
          better = key(i, j) < key(bi, bj);
        }
        if (better) {
          best = s;
          bi = i;
          bj = j;
        }
      }
    }
    if (bi == n) break;
    double di = std::fabs(*pairs[bi].metrics.ifd - 1.0);
    double dj = std::fabs(*pairs[bj].metrics.ifd - 1.0);
    std::size_t drop;
    if (di != dj) {
      drop = di > dj ? bi : bj;
    } else {
      drop = pairs[bi].id > pairs[bj].id ? bi : bj;
    }
    alive[drop] = false;
    dropped_for[drop] = pairs[drop == bi ? bj : bi].id;
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) {
      split.retained.push_back(std::move(pairs[i]));
    } else {
      pairs[i].status = PairStatus::sim_rejected;
      pairs[i].note = "near-duplicate of " + dropped_for[i];
      split.rejected.push_back(std::move(pairs[i]));
    }
  }
  return split;
}

// ===== judge scoring =====

std::vector<std::array<int, 7>> llm_quality_score(const std::vector<AtomicPair>& batch,
                                                  const std::string& request_tag, Gateway& teacher,
                                                  const PromptLibrary& prompts) {
  if (batch.empty()) throw Error(ErrorKind::invalid_input, "empty scoring batch");
  std::vector<std::pair<std::string, std::string>> qa;
  qa.reserve(batch.size());
  for (const auto& p : batch) qa.emplace_back(p.question, atomic_output_text(p));
  std::string completion = teacher.chat({{"user", prompts.fill_quality_scoring(qa)}}, request_tag);

  auto parsed = parse_with_recovery(completion, '[', ']');
  if (!parsed || !parsed->is_array()) {
    throw Error(ErrorKind::alignment_error, "no score array in: " + clip(completion));
  }
  if (parsed->size() != batch.size()) {
    throw Error(ErrorKind::alignment_error,
                "got " + std::to_string(parsed->size()) + " score entries for " +
                    std::to_string(batch.size()) + " pairs");
  }
  std::vector<std::array<int, 7>> out;
  out.reserve(batch.size());
  for (const auto& entry : *parsed) {
    if (!entry.is_object()) {
      throw Error(ErrorKind::score_range_error, "score entry is not an object");
    }
    std::array<int, 7> scores{};
    for (std::size_t d = 0; d < kScoreDimensions.size(); ++d) {
      const char* key = kScoreDimensions[d];
      if (!entry.contains(key) || !entry[key].is_number_integer()) {
        throw Error(ErrorKind::score_range_error, std::string("missing or non-integer \"") + key +
                                                      "\" in score entry");
      }
      int v = entry[key].get<int>();
      if (v < 0 || v > 2) {
        throw Error(ErrorKind::score_range_error,
                    std::string(key) + " score " + std::to_string(v) + " outside {0,1,2}");
      }
      scores[d] = v;
    }
    out.push_back(scores);
  }
  return out;
}

namespace {

bool scoring_protocol_failure(ErrorKind k) {
  return k == ErrorKind::alignment_error || k == ErrorKind::score_range_error;
}

void assign_scores(std::vector<AtomicPair>& pairs, std::size_t start,
                   const std::vector<std::array<int, 7>>& scores) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& m = pairs[start + i].metrics;
    m.dimension_scores = scores[i];
    m.s_llm = std::accumulate(scores[i].begin(), scores[i].end(), 0);
  }
}

}  // namespace

std::vector<AtomicPair> score_pairs(std::vector<AtomicPair> pairs, const std::string& problem_id,
                                    int batch_size, Gateway& teacher,
                                    const PromptLibrary& prompts) {
  if (batch_size < 1) throw Error(ErrorKind::invalid_input, "batch size must be >= 1");
  const std::size_t n = pairs.size();
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < n; start += batch_size, ++batch_index) {
    std::size_t end = std::min(n, start + batch_size);
    std::string tag = "quality|" + problem_id + "|b" + std::to_string(batch_index);
    std::vector<AtomicPair> batch(pairs.begin() + start, pairs.begin() + end);
    try {
      assign_scores(pairs, start, llm_quality_score(batch, tag, teacher, prompts));
      continue;
    } catch (const Error& e) {
      if (!scoring_protocol_failure(e.kind())) throw;
    }
    // One split retry: each half gets a fresh tag; a half that fails again
    // takes its pairs out of the funnel.
    std::size_t mid = start + (end - start + 1) / 2;
    const std::array<std::pair<std::size_t, std::size_t>, 2> halves = {{{start, mid}, {mid, end}}};
    for (std::size_t h = 0; h < halves.size(); ++h) {
      auto [lo, hi] = halves[h];
      if (lo >= hi) continue;
      std::string half_tag = tag + "." + std::to_string(h);
      std::vector<AtomicPair> half(pairs.begin() + lo, pairs.begin() + hi);
      try {
        assign_scores(pairs, lo, llm_quality_score(half, half_tag, teacher, prompts));
      } catch (const Error& e) {
        if (!scoring_protocol_failure(e.kind())) throw;
        for (std::size_t i = lo; i < hi; ++i) {
          pairs[i].status = PairStatus::score_rejected;
          pairs[i].note = std::string("scoring failed: ") + to_string(e.kind());
        }
      }
    }
  }
  return pairs;
}

FilterSplit apply_quality_threshold(std::vector<AtomicPair> pairs, int tau_llm) {
  FilterSplit split;
  for (auto& p : pairs) {
    if (p.status == PairStatus::score_rejected) {  // scoring protocol failure
      split.rejected.push_back(std::move(p));
      continue;
    }
    if (!p.metrics.s_llm) {
      throw Error(ErrorKind::invalid_input, "pair " + p.id + " reached the threshold unscored");
    }
    if (*p.metrics.s_llm >= tau_llm) {
      p.status = PairStatus::accepted;
      split.retained.push_back(std::move(p));
    } else {
      p.status = PairStatus::score_rejected;
      p.note = "quality sum below threshold";
      split.rejected.push_back(std::move(p));
    }
  }
  return split;
}

// ===== independent answer audit =====

AuditResult audit_atomic(const AtomicPair& pair, Gateway& judge, const PromptLibrary& prompts) {
  std::string prompt = prompts.fill_answer_audit(pair.question, pair.answer_final);
  std::string completion = judge.chat({{"user", prompt}}, "audit|" + pair.id);
  auto parsed = parse_with_recovery(completion, '{', '}');
  if (parsed && parsed->is_object() && parsed->contains("reasoning") &&
      (*parsed)["reasoning"].is_string() && parsed->contains("verdict") &&
      (*parsed)["verdict"].is_string()) {
    std::string verdict = (*parsed)["verdict"].get<std::string>();
    if (verdict == "Valid" || verdict == "Invalid") {
      return {verdict == "Valid", (*parsed)["reasoning"].get<std::string>()};
    }
  }
  throw Error(ErrorKind::parse_error,
              "expected {reasoning, verdict Valid|Invalid}, got: " + clip(completion));
}

}  // namespace dgrc
