#include "sdr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sdr/error.hpp"
#include "sdr/log.hpp"
#include "sdr/prompts.hpp"
#include "sdr/text.hpp"

namespace sdr {

double distinct_n(const std::vector<std::string>& summaries, int n) {
  if (n < 1) throw ValidationError("distinct_n: n must be >= 1");
  std::set<std::string> unique;
  long long total = 0;
  for (const auto& s : summaries) {
    auto tokens = tokenize_alnum(s);
    if (static_cast<int>(tokens.size()) < n) continue;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string gram;
      for (int k = 0; k < n; ++k) {
        if (k > 0) gram += ' ';
        gram += tokens[i + k];
      }
      unique.insert(std::move(gram));
      ++total;
    }
  }
  if (total == 0) throw ValidationError("distinct_n: no n-grams for n=" + std::to_string(n));
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

std::optional<std::vector<double>> dialogue_embedding(const Dialogue& d, ModelGateway& gateway,
                                                      const std::string& speaker) {
  std::vector<double> acc;
  double total_weight = 0.0;
  for (const auto& u : d.utterances) {
    if (!speaker.empty() && u.speaker != speaker) continue;
    double w = static_cast<double>(split_words(u.text).size());
    if (w <= 0.0) continue;
    std::vector<double> e = u.embedding ? *u.embedding : gateway.embed(u.text);
    if (acc.empty()) acc.assign(e.size(), 0.0);
    for (size_t i = 0; i < e.size(); ++i) acc[i] += w * e[i];
    total_weight += w;
  }
  if (acc.empty() || total_weight <= 0.0) return std::nullopt;
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  if (norm <= 0.0) return std::nullopt;
  for (double& v : acc) v /= norm;
  return acc;
}

double semantic_distance(const std::vector<std::vector<double>>& embeddings) {
  if (embeddings.size() < 2)
    throw ValidationError("semantic_distance: need at least 2 dialogues");
  double sum = 0.0;
  long long pairs = 0;
  for (size_t i = 0; i < embeddings.size(); ++i)
    for (size_t j = i + 1; j < embeddings.size(); ++j) {
      sum += cosine(embeddings[i], embeddings[j]);
      ++pairs;
    }
  return 1.0 - sum / static_cast<double>(pairs);
}

double semantic_distance(const std::vector<Dialogue>& dialogues, ModelGateway& gateway) {
  std::vector<std::vector<double>> embeddings;
  for (const auto& d : dialogues)
    if (auto e = dialogue_embedding(d, gateway)) embeddings.push_back(std::move(*e));
  return semantic_distance(embeddings);
}

AgentDiversityResult agent_diversity(const std::vector<Dialogue>& dialogues,
                                     ModelGateway& gateway) {
  // agent -> partner -> that agent's own-utterance embeddings per dialogue
  std::map<std::string, std::map<std::string, std::vector<std::vector<double>>>> by_agent;
  for (const auto& d : dialogues) {
    for (int side = 0; side < 2; ++side) {
      const std::string& agent = d.participants[side].name;
      const std::string& partner = d.participants[1 - side].name;
      if (auto e = dialogue_embedding(d, gateway, agent))
        by_agent[agent][partner].push_back(std::move(*e));
    }
  }

  AgentDiversityResult result;
  double sum = 0.0;
  int counted = 0;
  for (const auto& [agent, partners] : by_agent) {
    if (partners.size() < 2) {
      ++result.excluded_agents;
      continue;
    }
    std::vector<const std::vector<std::vector<double>>*> groups;
    for (const auto& [partner, embs] : partners) groups.push_back(&embs);
    double sims = 0.0;
    int pairs = 0;
    for (size_t p = 0; p < groups.size(); ++p) {
      for (size_t q = p + 1; q < groups.size(); ++q) {
        double s = 0.0;
        for (const auto& a : *groups[p])
          for (const auto& b : *groups[q]) s += cosine(a, b);
        sims += s / (static_cast<double>(groups[p]->size()) *
                     static_cast<double>(groups[q]->size()));
        ++pairs;
      }
    }
    double div = 1.0 - sims / static_cast<double>(pairs);
    result.per_agent[agent] = div;
    sum += div;
    ++counted;
  }
  if (counted == 0)
    throw ValidationError("agent_diversity: no agent has dialogues with 2 or more partners");
  result.overall = sum / static_cast<double>(counted);
  return result;
}

SdrConfig eval_screening_overrides(SdrConfig cfg) {
  cfg.theta_nlig = 0.99;
  cfg.k_nlig = 5;
  return cfg;
}

std::optional<JudgeScore> judge_dialogue(const Dialogue& d, const DialogueStore& store,
                                         ModelGateway& gateway, ModelGateway& judge_gateway,
                                         SdrConfig cfg) {
  cfg = eval_screening_overrides(cfg);
  Screener screener(store, gateway, cfg);

  std::vector<const Dialogue*> priors;
  std::set<std::string> seen;
  for (const auto& p : d.participants)
    for (const Dialogue* prior : store.dialogues_involving(p.name, d.time_epoch))
      if (seen.insert(prior->dialogue_id).second) priors.push_back(prior);
  std::sort(priors.begin(), priors.end(), [](const Dialogue* a, const Dialogue* b) {
    if (a->time_epoch != b->time_epoch) return a->time_epoch < b->time_epoch;
    return a->dialogue_id < b->dialogue_id;
  });

  std::vector<const Dialogue*> evidence;
  if (!priors.empty()) {
    int warnings = 0;
    auto triplets = screener.extract_triplets_text(render_dialogue_text(d), "dialogue",
                                                   d.dialogue_id, &warnings);
    if (!triplets.empty()) {
      for (const auto& id : screener.nlig_evidence(triplets, priors, &warnings))
        if (const Dialogue* e = store.find(id)) evidence.push_back(e);
    }
  }

  ChatRequest req;
  req.prompt = prompts::corpus_judge(d, evidence);
  req.temperature = 0.0;
  req.expect_json = true;
  try {
    auto parsed = extract_json(judge_gateway.chat(req));
    if (!parsed || !parsed->is_object()) throw ParseError("judge output is not an object");
    auto read_dim = [&](const char* key, int& score, std::string& reason) {
      const auto& dim = parsed->at(key);
      const auto& sj = dim.at("score");
      if (sj.is_number_integer())
        score = sj.get<int>();
      else if (sj.is_string())
        score = std::stoi(sj.get<std::string>());
      else
        throw ParseError(std::string(key) + " score is not an integer");
      if (score < 1 || score > 10)
        throw ParseError(std::string(key) + " score out of 1..10: " + std::to_string(score));
      reason = dim.value("reason", "");
    };
    JudgeScore score;
    score.dialogue_id = d.dialogue_id;
    read_dim("factualness", score.factualness, score.factualness_reason);
    read_dim("consistency", score.consistency, score.consistency_reason);
    return score;
  } catch (const std::exception& e) {
    log_warn("dialogue " + d.dialogue_id + " left unscored: " + e.what());
    return std::nullopt;
  }
}

double error_rate(const std::vector<int>& scores, int threshold) {
  if (scores.empty()) throw ValidationError("error_rate: no scores");
  int below = 0;
  for (int s : scores)
    if (s < threshold) ++below;
  return static_cast<double>(below) / static_cast<double>(scores.size());
}

TrendResult percentile_trend(const std::vector<int>& scores_time_ordered, int bins,
                             int threshold) {
  if (bins < 1) throw ValidationError("percentile_trend: bins must be >= 1");
  const int n = static_cast<int>(scores_time_ordered.size());
  if (n < bins)
    throw ValidationError("percentile_trend: fewer scores (" + std::to_string(n) +
                          ") than bins (" + std::to_string(bins) + ")");
  TrendResult result;
  int base = n / bins;
  int remainder = n % bins;
  int pos = 0;
  for (int b = 0; b < bins; ++b) {
    int size = base + (b < remainder ? 1 : 0);
    std::vector<int> group(scores_time_ordered.begin() + pos,
                           scores_time_ordered.begin() + pos + size);
    pos += size;
    result.bin_sizes.push_back(size);
    result.per_bin.push_back(error_rate(group, threshold));
  }
  // Least-squares slope of rate against bin index.
  double xbar = (bins - 1) / 2.0;
  double ybar = std::accumulate(result.per_bin.begin(), result.per_bin.end(), 0.0) / bins;
  double num = 0.0, den = 0.0;
  for (int b = 0; b < bins; ++b) {
    num += (b - xbar) * (result.per_bin[b] - ybar);
    den += (b - xbar) * (b - xbar);
  }
  result.slope = den > 0.0 ? num / den : 0.0;
  return result;
}

namespace {

bool dialogue_matches_keyword(const Dialogue& d, const std::string& root,
                              std::string* first_speaker) {
  for (const auto& u : d.utterances) {
    for (const auto& token : tokenize_alnum(u.text)) {
      if (token.find(root) != std::string::npos) {
        if (first_speaker) *first_speaker = u.speaker;
        return true;
      }
    }
  }
  return false;
}

}  // namespace

KeywordSpreadResult keyword_spread(const std::vector<Dialogue>& dialogues,
                                   const std::vector<std::string>& keywords, int bins) {
  if (dialogues.empty()) throw ValidationError("keyword_spread: corpus is empty");
  if (bins < 1) throw ValidationError("keyword_spread: bins must be >= 1");

  std::vector<const Dialogue*> ordered;
  for (const auto& d : dialogues) ordered.push_back(&d);
  std::sort(ordered.begin(), ordered.end(), [](const Dialogue* a, const Dialogue* b) {
    if (a->time_epoch != b->time_epoch) return a->time_epoch < b->time_epoch;
    return a->dialogue_id < b->dialogue_id;
  });

  const std::int64_t t_min = ordered.front()->time_epoch;
  const std::int64_t t_max = ordered.back()->time_epoch;
  auto bin_of = [&](std::int64_t t) {
    if (t_max == t_min) return 0;
    int b = static_cast<int>((static_cast<double>(t - t_min) /
                              static_cast<double>(t_max - t_min)) * bins);
    return std::min(b, bins - 1);
  };

  KeywordSpreadResult result;
  for (const auto& raw : keywords) {
    std::string root = to_lower(trim(raw));
    auto& kw_bins = result.bins[root];
    kw_bins.assign(bins, KeywordBin{});
    int count = 0;
    for (const Dialogue* d : ordered) {
      int b = bin_of(d->time_epoch);
      ++kw_bins[b].total;
      std::string first_speaker;
      if (dialogue_matches_keyword(*d, root, &first_speaker)) {
        ++kw_bins[b].matching;
        ++count;
        result.mentions[root].push_back({d->dialogue_id, d->time, d->participants[0].name,
                                         d->participants[1].name, first_speaker});
      }
    }
    result.dialogue_counts[root] = count;
  }
  return result;
}

namespace {

// Common English function words excluded from TF-IDF ranking.
const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a", "about", "above", "after", "again", "all", "also", "am", "an", "and", "any",
      "are", "as", "at", "be", "because", "been", "before", "being", "below", "between",
      "both", "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during",
      "each", "few", "for", "from", "further", "had", "has", "have", "having", "he", "her",
      "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its",
      "just", "me", "more", "most", "my", "no", "nor", "not", "now", "of", "off", "on",
      "once", "only", "or", "other", "our", "ours", "out", "over", "own", "re", "s", "same",
      "she", "should", "so", "some", "such", "t", "than", "that", "the", "their", "theirs",
      "them", "then", "there", "these", "they", "this", "those", "through", "to", "too",
      "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
      "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours"};
  return words;
}

}  // namespace

std::vector<std::pair<std::string, double>> tfidf_keywords(
    const std::vector<Dialogue>& dialogues, int top_k) {
  if (dialogues.size() < 2) throw ValidationError("tfidf_keywords: need at least 2 dialogues");
  const auto& stop = stopwords();
  const double n_docs = static_cast<double>(dialogues.size());

  std::map<std::string, double> total_tf;
  std::map<std::string, int> df;
  for (const auto& d : dialogues) {
    std::map<std::string, int> tf;
    for (const auto& u : d.utterances)
      for (const auto& token : tokenize_alnum(u.text))
        if (!stop.count(token)) ++tf[token];
    for (const auto& [term, count] : tf) {
      total_tf[term] += count;
      ++df[term];
    }
  }

  std::vector<std::pair<std::string, double>> scored;
  for (const auto& [term, tf_sum] : total_tf) {
    double idf = std::log(n_docs / df[term]);
    if (idf <= 0.0) continue;  // appears in every document
    scored.emplace_back(term, tf_sum * idf);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (top_k >= 0 && static_cast<int>(scored.size()) > top_k) scored.resize(top_k);
  return scored;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  return pearson(average_ranks(x), average_ranks(y));
}

CorrelationTable score_length_correlation(const std::vector<JudgeScore>& scores,
                                          const std::vector<Dialogue>& dialogues) {
  std::map<std::string, const Dialogue*> by_id;
  for (const auto& d : dialogues) by_id[d.dialogue_id] = &d;

  std::vector<double> fact, cons, turns, words;
  for (const auto& s : scores) {
    auto it = by_id.find(s.dialogue_id);
    if (it == by_id.end()) continue;
    fact.push_back(s.factualness);
    cons.push_back(s.consistency);
    turns.push_back(static_cast<double>(it->second->utterances.size()));
    double w = 0.0;
    for (const auto& u : it->second->utterances) w += split_words(u.text).size();
    words.push_back(w);
  }
  CorrelationTable t;
  if (fact.size() < 3) return t;  // undefined below 3 paired observations
  t.pearson_vs_turns[0] = pearson(fact, turns);
  t.pearson_vs_turns[1] = pearson(cons, turns);
  t.pearson_vs_words[0] = pearson(fact, words);
  t.pearson_vs_words[1] = pearson(cons, words);
  t.spearman_vs_turns[0] = spearman(fact, turns);
  t.spearman_vs_turns[1] = spearman(cons, turns);
  t.spearman_vs_words[0] = spearman(fact, words);
  t.spearman_vs_words[1] = spearman(cons, words);
  return t;
}

nlohmann::json correlation_to_json(const CorrelationTable& t) {
  auto value = [](const std::optional<double>& v) -> nlohmann::json {
    if (v) return *v;
    return nullptr;  // undefined (zero variance or too few observations)
  };
  return {{"factualness",
           {{"pearson_turns", value(t.pearson_vs_turns[0])},
            {"pearson_words", value(t.pearson_vs_words[0])},
            {"spearman_turns", value(t.spearman_vs_turns[0])},
            {"spearman_words", value(t.spearman_vs_words[0])}}},
          {"consistency",
           {{"pearson_turns", value(t.pearson_vs_turns[1])},
            {"pearson_words", value(t.pearson_vs_words[1])},
            {"spearman_turns", value(t.spearman_vs_turns[1])},
            {"spearman_words", value(t.spearman_vs_words[1])}}}};
}

}  // namespace sdr
