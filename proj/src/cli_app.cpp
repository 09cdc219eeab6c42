#include "sdr/cli_app.hpp"

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sdr/agents.hpp"
#include "sdr/error.hpp"
#include "sdr/evaluation.hpp"
#include "sdr/simulation.hpp"
#include "sdr/text.hpp"
#include "sdr/version.hpp"

namespace sdr {

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

int run_simulate(const std::string& corpus_path, const std::string& agents_path,
                 const std::string& mode_str, const std::string& backend_path,
                 const std::string& config_path, std::uint64_t seed, const std::string& out_dir,
                 int parallelism, const std::string& prompt_info, const std::string& variant,
                 const std::string& embedding_cache) {
  std::vector<Dialogue> corpus;
  Roster roster;
  RunOptions options;
  SdrConfig cfg;
  std::optional<GatewayFactory> factory;
  try {
    corpus = load_corpus_jsonl(corpus_path);
    if (corpus.empty()) throw ValidationError("corpus is empty: " + corpus_path);
    roster = load_roster(agents_path);
    for (const auto& d : corpus)
      for (const auto& p : d.participants)
        if (!roster.count(p.name))
          throw ValidationError("dialogue " + d.dialogue_id + ": participant '" + p.name +
                                "' has no agent profile");
    options.mode = run_mode_from_string(mode_str);
    options.flags = PromptInfoFlags::from_string(prompt_info);
    options.variant = variant_policy_from_string(variant);
    options.seed = seed;
    options.parallelism = parallelism;
    cfg = config_path.empty() ? SdrConfig{} : SdrConfig::load(config_path);
    factory.emplace(GatewayConfig::load(backend_path));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  try {
    RunSummary summary = run_corpus(corpus, roster, *factory, cfg, options, out_dir,
                                    embedding_cache.empty()
                                        ? std::filesystem::path{}
                                        : std::filesystem::path(embedding_cache));
    std::cout << "simulated " << summary.dialogues << " dialogue(s), " << summary.failed
              << " failed, " << summary.regenerations << " regeneration(s); outputs in "
              << out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_evaluate(const std::string& corpus_path, const std::string& metrics_csv,
                 const std::string& backend_path, const std::string& judge_backend_path,
                 const std::string& config_path, const std::string& out_dir, int bins) {
  const std::set<std::string> known = {"distinct", "distance", "agentdiv",
                                       "judge",    "turns",    "words"};
  std::set<std::string> metrics;
  std::vector<Dialogue> corpus;
  SdrConfig cfg;
  std::optional<GatewayFactory> factory;
  std::optional<GatewayFactory> judge_factory;
  try {
    for (const auto& m : tokenize_alnum(metrics_csv)) {
      if (!known.count(m)) {
        std::string names;
        for (const auto& k : known) names += (names.empty() ? "" : ", ") + k;
        throw ValidationError("unknown metric '" + m + "' (valid: " + names + ")");
      }
      metrics.insert(m);
    }
    if (metrics.empty()) throw ValidationError("no metrics requested");
    if (metrics.count("judge") && judge_backend_path.empty())
      throw ValidationError("metric 'judge' requires --judge-backend");
    corpus = load_corpus_jsonl(corpus_path, /*skip_short=*/true);
    if (corpus.empty()) throw ValidationError("corpus is empty: " + corpus_path);
    cfg = config_path.empty() ? SdrConfig{} : SdrConfig::load(config_path);
    factory.emplace(backend_path.empty() ? GatewayConfig{}
                                         : GatewayConfig::load(backend_path));
    if (!judge_backend_path.empty())
      judge_factory.emplace(GatewayConfig::load(judge_backend_path));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    std::filesystem::create_directories(out_dir);
    auto gateway = factory->make();
    nlohmann::json report;
    report["corpus"] = corpus_path;
    report["dialogues"] = corpus.size();
    report["version"] = kVersion;
    std::string csv_tables;

    if (metrics.count("distinct")) {
      std::vector<std::string> summaries;
      for (const auto& d : corpus) summaries.push_back(gateway->summarize(d));
      report["distinct_1"] = distinct_n(summaries, 1);
      report["distinct_2"] = distinct_n(summaries, 2);
      report["distinct_3"] = distinct_n(summaries, 3);
    }
    if (metrics.count("distance"))
      report["semantic_distance"] = semantic_distance(corpus, *gateway);
    if (metrics.count("agentdiv")) {
      auto div = agent_diversity(corpus, *gateway);
      report["agent_diversity"] = {{"overall", div.overall},
                                   {"excluded_agents", div.excluded_agents},
                                   {"per_agent", div.per_agent}};
      std::string csv = "agent,agent_diversity\n";
      for (const auto& [agent, value] : div.per_agent)
        csv += csv_escape(agent) + "," + std::to_string(value) + "\n";
      write_file(std::filesystem::path(out_dir) / "per_agent_diversity.csv", csv);
    }
    if (metrics.count("turns") || metrics.count("words")) {
      double turns = 0.0, words = 0.0;
      long long utterances = 0;
      for (const auto& d : corpus) {
        turns += static_cast<double>(d.utterances.size());
        utterances += static_cast<long long>(d.utterances.size());
        for (const auto& u : d.utterances)
          words += static_cast<double>(split_words(u.text).size());
      }
      if (metrics.count("turns")) report["turns_mean"] = turns / corpus.size();
      if (metrics.count("words")) report["words_per_turn_mean"] = words / utterances;
    }
    if (metrics.count("judge")) {
      auto judge_gateway = judge_factory->make();
      DialogueStore store(*gateway);
      for (const auto& d : corpus) store.insert_dialogue(d);

      std::vector<const Dialogue*> ordered;
      for (const auto& d : corpus) ordered.push_back(&d);
      std::sort(ordered.begin(), ordered.end(), [](const Dialogue* a, const Dialogue* b) {
        if (a->time_epoch != b->time_epoch) return a->time_epoch < b->time_epoch;
        return a->dialogue_id < b->dialogue_id;
      });

      std::vector<JudgeScore> scores;
      int unscored = 0;
      for (const Dialogue* d : ordered) {
        auto s = judge_dialogue(*d, store, *gateway, *judge_gateway, cfg);
        if (s)
          scores.push_back(*s);
        else
          ++unscored;
      }
      if (scores.empty()) throw Error("no dialogue could be scored");

      std::vector<int> fact, cons;
      for (const auto& s : scores) {
        fact.push_back(s.factualness);
        cons.push_back(s.consistency);
      }
      auto mean = [](const std::vector<int>& v) {
        double sum = 0.0;
        for (int s : v) sum += s;
        return sum / v.size();
      };
      nlohmann::json judge;
      judge["unscored"] = unscored;
      judge["factualness_mean"] = mean(fact);
      judge["consistency_mean"] = mean(cons);
      judge["factualness_error_rate"] = error_rate(fact);
      judge["consistency_error_rate"] = error_rate(cons);
      if (static_cast<int>(scores.size()) >= bins) {
        auto ftrend = percentile_trend(fact, bins);
        auto ctrend = percentile_trend(cons, bins);
        judge["factualness_trend"] = {{"per_bin", ftrend.per_bin}, {"slope", ftrend.slope}};
        judge["consistency_trend"] = {{"per_bin", ctrend.per_bin}, {"slope", ctrend.slope}};
        std::string trend_csv = "bin,size,factualness_error_rate,consistency_error_rate\n";
        for (int b = 0; b < bins; ++b)
          trend_csv += std::to_string(b) + "," + std::to_string(ftrend.bin_sizes[b]) + "," +
                       std::to_string(ftrend.per_bin[b]) + "," +
                       std::to_string(ctrend.per_bin[b]) + "\n";
        write_file(std::filesystem::path(out_dir) / "trend.csv", trend_csv);
      }

      std::vector<Dialogue> scored_dialogues;
      for (const Dialogue* d : ordered) scored_dialogues.push_back(*d);
      report["correlations"] =
          correlation_to_json(score_length_correlation(scores, scored_dialogues));

      std::string scores_csv = "dialogue_id,time,factualness,consistency\n";
      for (const auto& s : scores) {
        const Dialogue* d = store.find(s.dialogue_id);
        scores_csv += csv_escape(s.dialogue_id) + "," + (d ? d->time : "") + "," +
                      std::to_string(s.factualness) + "," + std::to_string(s.consistency) +
                      "\n";
      }
      write_file(std::filesystem::path(out_dir) / "per_dialogue_scores.csv", scores_csv);
      report["judge"] = judge;
    }
    (void)csv_tables;
    write_file(std::filesystem::path(out_dir) / "report.json", report.dump(2) + "\n");
    std::cout << "report written to " << out_dir << "/report.json\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_spread(const std::string& corpus_path, const std::string& keywords_csv, int tfidf_top,
               int bins, const std::string& out_dir) {
  std::vector<Dialogue> corpus;
  std::vector<std::string> keywords;
  try {
    if (keywords_csv.empty() && tfidf_top <= 0)
      throw ValidationError("one of --keywords or --tfidf-top is required");
    corpus = load_corpus_jsonl(corpus_path, /*skip_short=*/true);
    if (corpus.empty()) throw ValidationError("corpus is empty: " + corpus_path);
    if (!keywords_csv.empty()) {
      std::string current;
      for (char c : keywords_csv + ",") {
        if (c == ',') {
          std::string k = trim(current);
          if (!k.empty()) keywords.push_back(to_lower(k));
          current.clear();
        } else {
          current.push_back(c);
        }
      }
      if (keywords.empty()) throw ValidationError("--keywords has no usable roots");
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    std::filesystem::create_directories(out_dir);
    if (tfidf_top > 0) {
      auto ranked = tfidf_keywords(corpus, tfidf_top);
      std::string csv = "term,score\n";
      for (const auto& [term, score] : ranked) {
        csv += term + "," + std::to_string(score) + "\n";
        if (keywords_csv.empty()) keywords.push_back(term);
      }
      write_file(std::filesystem::path(out_dir) / "tfidf.csv", csv);
    }
    auto spread = keyword_spread(corpus, keywords, bins);
    std::string bins_csv = "keyword,time_bin,total,matching,ratio\n";
    for (const auto& [keyword, kw_bins] : spread.bins) {
      for (size_t b = 0; b < kw_bins.size(); ++b) {
        double ratio = kw_bins[b].total > 0
                           ? static_cast<double>(kw_bins[b].matching) / kw_bins[b].total
                           : 0.0;
        bins_csv += keyword + "," + std::to_string(b) + "," +
                    std::to_string(kw_bins[b].total) + "," +
                    std::to_string(kw_bins[b].matching) + "," + std::to_string(ratio) + "\n";
      }
    }
    write_file(std::filesystem::path(out_dir) / "spread.csv", bins_csv);

    std::string adjacency_csv = "keyword,dialogue_id,time,agent_a,agent_b,first_speaker\n";
    for (const auto& [keyword, mentions] : spread.mentions)
      for (const auto& m : mentions)
        adjacency_csv += keyword + "," + csv_escape(m.dialogue_id) + "," + m.time + "," +
                         csv_escape(m.agent_a) + "," + csv_escape(m.agent_b) + "," +
                         csv_escape(m.first_speaker) + "\n";
    write_file(std::filesystem::path(out_dir) / "adjacency.csv", adjacency_csv);
    std::cout << "spread tables written to " << out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"Multi-agent dialogue simulation with screening-diagnosis-regeneration "
               "correction"};
  app.set_version_flag("--version", std::string("sdr ") + kVersion);
  app.require_subcommand(0, 1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Regenerate a dialogue corpus");
  std::string corpus, agents, mode = "sdr", backend, config, out, prompt_info = "all",
                              variant = "mixed", embedding_cache;
  std::uint64_t seed = 0;
  int parallelism = 1;
  simulate->add_option("--corpus", corpus, "Corpus JSONL")->required();
  simulate->add_option("--agents", agents, "Agent profiles (JSON array or JSONL)")->required();
  simulate->add_option("--mode", mode, "origin|baseline|sdr")->required();
  simulate->add_option("--backend", backend, "Backend config JSON")->required();
  simulate->add_option("--seed", seed, "Run seed")->required();
  simulate->add_option("--out", out, "Output directory")->required();
  simulate->add_option("--config", config, "Pipeline config JSON (defaults when omitted)");
  simulate->add_option("--parallelism", parallelism, "Worker threads");
  simulate->add_option("--prompt-info", prompt_info, "all|-background|-memory|-history|-status");
  simulate->add_option("--variant", variant, "mixed|persona|task");
  simulate->add_option("--embedding-cache", embedding_cache, "Embedding cache JSONL");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Compute corpus metrics");
  std::string eval_corpus, metrics, eval_backend, judge_backend, eval_config, eval_out;
  int bins = 10;
  evaluate->add_option("--corpus", eval_corpus, "Corpus JSONL")->required();
  evaluate->add_option("--metrics", metrics, "Comma list: distinct,distance,agentdiv,judge,turns,words")
      ->required();
  evaluate->add_option("--out", eval_out, "Output directory")->required();
  evaluate->add_option("--backend", eval_backend, "Backend config for embeddings/summaries");
  evaluate->add_option("--judge-backend", judge_backend, "Backend config for the judge model");
  evaluate->add_option("--config", eval_config, "Pipeline config JSON");
  evaluate->add_option("--bins", bins, "Trend bins");

  // spread
  auto* spread = app.add_subcommand("spread", "Keyword spread and TF-IDF tables");
  std::string spread_corpus, spread_keywords, spread_out;
  int tfidf_top = 0, spread_bins = 10;
  spread->add_option("--corpus", spread_corpus, "Corpus JSONL")->required();
  spread->add_option("--keywords", spread_keywords, "Comma-separated keyword roots");
  spread->add_option("--tfidf-top", tfidf_top, "Rank top-k TF-IDF terms");
  spread->add_option("--bins", spread_bins, "Time bins");
  spread->add_option("--out", spread_out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (simulate->parsed())
    return run_simulate(corpus, agents, mode, backend, config, seed, out, parallelism,
                        prompt_info, variant, embedding_cache);
  if (evaluate->parsed())
    return run_evaluate(eval_corpus, metrics, eval_backend, judge_backend, eval_config,
                        eval_out, bins);
  if (spread->parsed())
    return run_spread(spread_corpus, spread_keywords, tfidf_top, spread_bins, spread_out);
  std::cout << app.help();
  return 1;
}

}  // namespace sdr
