#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "dmg/error.hpp"
#include "dmg/http_client.hpp"
#include "dmg/text.hpp"

namespace dmg {

struct RougeScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// ROUGE-L with beta = 1.
inline RougeScore rouge_l(std::span<const std::string> candidate,
                          std::span<const std::string> reference) {
  if (reference.empty()) throw InvalidArgument("ROUGE-L needs a non-empty reference");
  RougeScore s;
  if (candidate.empty()) return s;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  s.precision = lcs / static_cast<double>(candidate.size());
  s.recall = lcs / static_cast<double>(reference.size());
  if (s.precision + s.recall > 0) {
    s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

struct MeteorScore {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0;
  double recall = 0;
  double f_mean = 0;
  double penalty = 0;
  double score = 0;
};

// Exact-match METEOR. Alignment is greedy left to right over the candidate:
// a token continues the previous chunk when it can, else prefers the earliest
// free occurrence whose successor also matches the next candidate token, else
// the earliest free occurrence. Match count is always maximal; chunk count is
// a heuristic minimum.
inline MeteorScore meteor(std::span<const std::string> candidate,
                          std::span<const std::string> reference) {
  if (reference.empty()) throw InvalidArgument("METEOR needs a non-empty reference");
  MeteorScore s;
  std::unordered_map<std::string, std::vector<std::size_t>> positions;
  for (std::size_t j = 0; j < reference.size(); ++j) positions[reference[j]].push_back(j);
  std::vector<bool> used(reference.size(), false);

  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> align(candidate.size(), kNone);
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    auto it = positions.find(candidate[i]);
    if (it == positions.end()) continue;
    std::size_t pick = kNone;
    if (i > 0 && align[i - 1] != kNone) {
      const std::size_t next = align[i - 1] + 1;
      if (next < reference.size() && !used[next] && reference[next] == candidate[i]) pick = next;
    }
    if (pick == kNone && i + 1 < candidate.size()) {
      for (auto j : it->second) {
        if (!used[j] && j + 1 < reference.size() && !used[j + 1] &&
            reference[j + 1] == candidate[i + 1]) {
          pick = j;
          break;
        }
      }
    }
    if (pick == kNone) {
      for (auto j : it->second) {
        if (!used[j]) {
          pick = j;
          break;
        }
      }
    }
    if (pick == kNone) continue;
    used[pick] = true;
    align[i] = pick;
    ++s.matches;
  }
  if (s.matches == 0) return s;

  std::size_t prev_i = kNone;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (align[i] == kNone) continue;
    if (prev_i == kNone || prev_i + 1 != i || align[prev_i] + 1 != align[i]) ++s.chunks;
    prev_i = i;
  }

  const double m = static_cast<double>(s.matches);
  s.precision = m / static_cast<double>(candidate.size());
  s.recall = m / static_cast<double>(reference.size());
  s.f_mean = 10 * s.precision * s.recall / (s.recall + 9 * s.precision);
  s.penalty = 0.5 * std::pow(static_cast<double>(s.chunks) / m, 3);
  s.score = s.f_mean * (1 - s.penalty);
  return s;
}

using EmbeddingVector = std::vector<double>;

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw InvalidArgument("embedding dimensions differ: " + std::to_string(u.size()) + " vs " +
                          std::to_string(v.size()));
  }
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u[i]) || !std::isfinite(v[i])) {
      throw InvalidArgument("embedding has a non-finite entry");
    }
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0 || nv == 0) throw InvalidArgument("cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

enum class ScsSign {
  Literal,   // cos^3 * sgn(cos), i.e. |cos|^3
  Preserve,  // cos^3
};

// Sharpened cosine similarity.
inline double scs(std::span<const double> u, std::span<const double> v,
                  ScsSign sign = ScsSign::Literal) {
  const double c = cosine(u, v);
  const double cubed = c * c * c;
  if (sign == ScsSign::Preserve) return cubed;
  const double sgn = c > 0 ? 1.0 : (c < 0 ? -1.0 : 0.0);
  return cubed * sgn;
}

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual EmbeddingVector embed(const std::string& text) = 0;
};

// L2-normalized unigram counts over a fixed vocabulary.
class BagOfWordsProvider final : public EmbeddingProvider {
 public:
  explicit BagOfWordsProvider(std::span<const std::string> corpus) {
    std::map<std::string, std::size_t> sorted;
    for (const auto& text : corpus) {
      for (auto& tok : tokenize(text)) sorted.emplace(std::move(tok), 0);
    }
    if (sorted.empty()) throw InvalidArgument("bag-of-words vocabulary is empty");
    std::size_t i = 0;
    for (auto& [tok, idx] : sorted) index_.emplace(tok, i++);
  }

  std::string name() const override { return "bow"; }
  std::size_t dimension() const noexcept { return index_.size(); }

  // Out-of-vocabulary tokens are ignored.
  EmbeddingVector embed(const std::string& text) override {
    EmbeddingVector v(index_.size(), 0.0);
    for (const auto& tok : tokenize(text)) {
      auto it = index_.find(tok);
      if (it != index_.end()) v[it->second] += 1.0;
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    if (norm > 0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    return v;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddingEndpointConfig {
  std::string endpoint;  // full URL of an OpenAI-style /embeddings route
  std::string api_key;
  std::string model;
  RetryPolicy retry;
};

inline constexpr const char* kEnvEmbedEndpoint = "DMG_EMBED_ENDPOINT";
inline constexpr const char* kEnvEmbedApiKey = "DMG_EMBED_API_KEY";
inline constexpr const char* kEnvEmbedModel = "DMG_EMBED_MODEL";

inline std::optional<EmbeddingEndpointConfig> embedding_config_from_env() {
  auto endpoint = env_var(kEnvEmbedEndpoint);
  if (!endpoint) return std::nullopt;
  EmbeddingEndpointConfig cfg;
  cfg.endpoint = *endpoint;
  cfg.api_key = env_var(kEnvEmbedApiKey).value_or("");
  cfg.model = env_var(kEnvEmbedModel).value_or("sentence-t5-base");
  return cfg;
}

class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(EmbeddingEndpointConfig config) : config_(std::move(config)) {}

  std::string name() const override { return "external:" + config_.model; }

  EmbeddingVector embed(const std::string& text) override {
    nlohmann::json body{{"model", config_.model}, {"input", text}};
    auto reply = post_json_with_retry(config_.endpoint, config_.api_key, body, config_.retry);
    EmbeddingVector v;
    try {
      v = reply.at("data").at(0).at("embedding").get<EmbeddingVector>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError("malformed embedding reply: " + std::string(e.what()), false);
    }
    if (v.empty()) throw BackendError("embedding reply has no components", false);
    if (dimension_ == 0) dimension_ = v.size();
    if (v.size() != dimension_) {
      throw BackendError("embedding dimension changed from " + std::to_string(dimension_) +
                             " to " + std::to_string(v.size()),
                         false);
    }
    return v;
  }

 private:
  EmbeddingEndpointConfig config_;
  std::size_t dimension_ = 0;
};

// ---------------------------------------------------------------------------
// Corpus evaluation

struct MetricSelection {
  bool rouge = true;
  bool meteor = true;
  bool scs = true;
  ScsSign scs_sign = ScsSign::Literal;
};

inline MetricSelection parse_metric_list(const std::string& list) {
  MetricSelection sel{false, false, false};
  for (const auto& name : tokenize(list)) {
    if (name == "rouge" || name == "rougel") sel.rouge = true;
    else if (name == "meteor") sel.meteor = true;
    else if (name == "scs") sel.scs = true;
    else throw InvalidArgument("unknown metric '" + name + "'");
  }
  if (!sel.rouge && !sel.meteor && !sel.scs) throw InvalidArgument("no metrics selected");
  return sel;
}

struct PairScores {
  std::optional<RougeScore> rouge;
  std::optional<double> meteor;
  std::optional<double> scs;
};

struct CorpusReport {
  MetricSelection selection;
  std::string embedding;
  std::vector<PairScores> pairs;
  std::optional<RougeScore> mean_rouge;
  std::optional<double> mean_meteor;
  std::optional<double> mean_scs;
};

// Scores line-aligned prediction/reference pairs. A blank prediction
// scores 0 on every metric; a blank reference is an error.
inline CorpusReport corpus_eval(std::span<const std::string> predictions,
                                std::span<const std::string> references,
                                const MetricSelection& selection,
                                EmbeddingProvider* embedder) {
  if (predictions.size() != references.size()) {
    throw InvalidArgument("line count mismatch: " + std::to_string(predictions.size()) +
                          " predictions vs " + std::to_string(references.size()) + " references");
  }
  if (predictions.empty()) throw InvalidArgument("no pairs");
  if (selection.scs && embedder == nullptr) {
    throw InvalidArgument("SCS selected without an embedding provider");
  }

  CorpusReport report;
  report.selection = selection;
  report.embedding = embedder ? embedder->name() : "";
  report.pairs.resize(predictions.size());
  RougeScore rouge_sum;
  double meteor_sum = 0, scs_sum = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto cand = tokenize(predictions[i]);
    const auto ref = tokenize(references[i]);
    if (ref.empty()) throw InvalidArgument("line " + std::to_string(i + 1) + ": empty reference");
    auto& p = report.pairs[i];
    if (selection.rouge) {
      p.rouge = rouge_l(cand, ref);
      rouge_sum.precision += p.rouge->precision;
      rouge_sum.recall += p.rouge->recall;
      rouge_sum.f1 += p.rouge->f1;
    }
    if (selection.meteor) {
      p.meteor = meteor(cand, ref).score;
      meteor_sum += *p.meteor;
    }
    if (selection.scs) {
      const auto u = embedder->embed(predictions[i]);
      const auto v = embedder->embed(references[i]);
      const bool zero_u = std::all_of(u.begin(), u.end(), [](double x) { return x == 0; });
      const bool zero_v = std::all_of(v.begin(), v.end(), [](double x) { return x == 0; });
      p.scs = (zero_u || zero_v) ? 0.0 : scs(u, v, selection.scs_sign);
      scs_sum += *p.scs;
    }
  }
  const double n = static_cast<double>(predictions.size());
  if (selection.rouge) {
    report.mean_rouge = RougeScore{rouge_sum.precision / n, rouge_sum.recall / n, rouge_sum.f1 / n};
  }
  if (selection.meteor) report.mean_meteor = meteor_sum / n;
  if (selection.scs) report.mean_scs = scs_sum / n;
  return report;
}

inline nlohmann::ordered_json to_json(const CorpusReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["pairs"] = r.pairs.size();
  ordered_json config;
  config["meteor_variant"] = "exact-match unigram alignment, no stemming or synonyms";
  config["rouge_beta"] = 1;
  config["scs_form"] = r.selection.scs_sign == ScsSign::Literal ? "cos^3*sgn(cos)" : "cos^3";
  if (r.selection.scs) config["embedding"] = r.embedding;
  j["config"] = std::move(config);
  ordered_json mean = ordered_json::object();
  if (r.mean_rouge) {
    mean["rouge_l"] = {{"precision", r.mean_rouge->precision},
                       {"recall", r.mean_rouge->recall},
                       {"f1", r.mean_rouge->f1}};
  }
  if (r.mean_meteor) mean["meteor"] = *r.mean_meteor;
  if (r.mean_scs) mean["scs"] = *r.mean_scs;
  j["mean"] = std::move(mean);
  ordered_json per = ordered_json::array();
  for (const auto& p : r.pairs) {
    ordered_json e = ordered_json::object();
    if (p.rouge) e["rouge_l_f1"] = p.rouge->f1;
    if (p.meteor) e["meteor"] = *p.meteor;
    if (p.scs) e["scs"] = *p.scs;
    per.push_back(std::move(e));
  }
  j["per_pair"] = std::move(per);
  return j;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace dmg
