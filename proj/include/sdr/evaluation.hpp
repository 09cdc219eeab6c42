#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdr/dialogue_store.hpp"
#include "sdr/screening.hpp"

namespace sdr {

struct JudgeScore {
  std::string dialogue_id;
  int factualness = 0;  // 1-10
  int consistency = 0;  // 1-10
  std::string factualness_reason;
  std::string consistency_reason;
};

// Unique n-grams over total n-grams, pooled across summaries. Tokens are
// lowercased alphanumeric runs; n-grams never cross summary boundaries.
// Throws when no summary yields an n-gram.
double distinct_n(const std::vector<std::string>& summaries, int n);

// Length-weighted mean of utterance embeddings (weights are word counts),
// L2-renormalized. `speaker` restricts to one speaker's utterances; returns
// nullopt when no utterance qualifies.
std::optional<std::vector<double>> dialogue_embedding(const Dialogue& d, ModelGateway& gateway,
                                                      const std::string& speaker = "");

// 1 - mean pairwise cosine between dialogue embeddings. Needs >= 2.
double semantic_distance(const std::vector<std::vector<double>>& embeddings);
double semantic_distance(const std::vector<Dialogue>& dialogues, ModelGateway& gateway);

struct AgentDiversityResult {
  double overall = 0.0;
  std::map<std::string, double> per_agent;
  int excluded_agents = 0;  // participants with fewer than 2 partners
};

// Per agent: mean cross-partner pairwise cosine over the agent's own
// dialogue embeddings, subtracted from 1; the overall value averages agents
// with at least two partners.
AgentDiversityResult agent_diversity(const std::vector<Dialogue>& dialogues,
                                     ModelGateway& gateway);

// Retrieves evidence through the inconsistency screening machinery with the
// evaluation overrides applied to `cfg`, then scores consistency and
// factualness in one judge call. Returns nullopt when the judge output does
// not parse after the repair attempt (the dialogue is left unscored).
std::optional<JudgeScore> judge_dialogue(const Dialogue& d, const DialogueStore& store,
                                         ModelGateway& gateway, ModelGateway& judge_gateway,
                                         SdrConfig cfg);

// Applies the documented evaluation overrides (theta_nlig 0.99, k_nlig 5).
SdrConfig eval_screening_overrides(SdrConfig cfg);

// Fraction of scores strictly below the threshold.
double error_rate(const std::vector<int>& scores, int threshold = 8);

struct TrendResult {
  std::vector<double> per_bin;  // error rate per time bin
  std::vector<int> bin_sizes;
  double slope = 0.0;  // least-squares over bin index
};

// Splits time-ordered scores into `bins` contiguous equal-count groups (the
// remainder goes to the earliest groups) and reports the error rate per
// group. Throws when there are fewer scores than bins.
TrendResult percentile_trend(const std::vector<int>& scores_time_ordered, int bins = 10,
                             int threshold = 8);

struct KeywordBin {
  int total = 0;
  int matching = 0;
};

struct KeywordMention {
  std::string dialogue_id;
  std::string time;
  std::string agent_a;
  std::string agent_b;
  std::string first_speaker;  // who first uttered the keyword in this dialogue
};

struct KeywordSpreadResult {
  // keyword -> per-bin counts over equal-width time spans
  std::map<std::string, std::vector<KeywordBin>> bins;
  std::map<std::string, int> dialogue_counts;
  std::map<std::string, std::vector<KeywordMention>> mentions;  // time-ordered
};

// A dialogue matches a keyword root iff any utterance contains the root as
// a case-insensitive substring of a token.
KeywordSpreadResult keyword_spread(const std::vector<Dialogue>& dialogues,
                                   const std::vector<std::string>& keywords, int bins);

// tf-idf with raw term counts and idf = ln(N/df); one document per
// dialogue; terms present in every document score zero and are dropped.
// Ties are resolved alphabetically.
std::vector<std::pair<std::string, double>> tfidf_keywords(
    const std::vector<Dialogue>& dialogues, int top_k);

// Pearson r; nullopt when either side has zero variance or n < 2.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);
// Spearman rho with average ranks for ties.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

struct CorrelationTable {
  // [metric][statistic]: metric in {factualness, consistency},
  // statistic in {turns, words}
  std::optional<double> pearson_vs_turns[2];
  std::optional<double> pearson_vs_words[2];
  std::optional<double> spearman_vs_turns[2];
  std::optional<double> spearman_vs_words[2];
};

CorrelationTable score_length_correlation(const std::vector<JudgeScore>& scores,
                                          const std::vector<Dialogue>& dialogues);

// Optional pluggable fluency scorer; no implementation ships with the
// engine. Reported only when provided.
class FluencyScorer {
 public:
  virtual ~FluencyScorer() = default;
  virtual double score(const Dialogue& d) = 0;  // lower = more fluent
};

nlohmann::json correlation_to_json(const CorrelationTable& t);

}  // namespace sdr
