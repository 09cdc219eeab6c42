#include "sdr/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "sdr/error.hpp"
#include "sdr/log.hpp"
#include "sdr/text.hpp"
#include "sdr/version.hpp"

namespace sdr {

RunMode run_mode_from_string(const std::string& s) {
  if (s == "origin") return RunMode::origin;
  if (s == "baseline") return RunMode::baseline_best_of_3;
  if (s == "sdr") return RunMode::sdr;
  throw ConfigError("unknown mode: '" + s + "' (expected origin|baseline|sdr)");
}

const char* run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::origin: return "origin";
    case RunMode::baseline_best_of_3: return "baseline";
    case RunMode::sdr: return "sdr";
  }
  return "?";
}

PromptInfoFlags PromptInfoFlags::from_string(const std::string& s) {
  PromptInfoFlags f;
  if (s == "all" || s.empty()) return f;
  if (s == "-background") f.background = false;
  else if (s == "-memory") f.memory = false;
  else if (s == "-history") f.history = false;
  else if (s == "-status") f.status = false;
  else throw ConfigError("unknown prompt-info value: '" + s + "'");
  return f;
}

std::string PromptInfoFlags::to_string() const {
  if (!background) return "-background";
  if (!memory) return "-memory";
  if (!history) return "-history";
  if (!status) return "-status";
  return "all";
}

PromptInputs build_prompt_inputs(const DialogueTask& task, const std::string& speaker,
                                 const PromptInfoFlags& flags, const Roster& roster,
                                 const Dialogue& current, int memory_limit) {
  auto it = roster.find(speaker);
  if (it == roster.end()) throw ValidationError("no profile for agent '" + speaker + "'");
  const AgentProfile& profile = it->second;
  const bool speaker_is_first = task.agents[0].name == speaker;
  const Participant& me = task.agents[speaker_is_first ? 0 : 1];
  const Participant& other = task.agents[speaker_is_first ? 1 : 0];

  PromptInputs in;
  in.speaker = speaker;
  in.listener = other.name;
  in.time = task.time;
  in.location = task.location;
  if (flags.background) in.background = profile.background;
  if (flags.memory) in.memories = render_memories(profile, memory_limit);
  if (flags.status) {
    in.speaker_status = me.status;
    in.listener_status = other.status;
  }
  if (flags.history) in.pair_history = task.history;
  in.current_dialogue = render_dialogue_text(current);
  return in;
}

std::string assemble_context(const DialogueTask& task, const std::string& speaker,
                             PromptVariant variant, const PromptInfoFlags& flags,
                             const Roster& roster, const Dialogue& current, int memory_limit) {
  return prompts::generation(
      build_prompt_inputs(task, speaker, flags, roster, current, memory_limit), variant);
}

CandidateResult generate_candidate(const DialogueTask& task, const std::string& speaker,
                                   RunMode mode, const PromptInfoFlags& flags,
                                   const Roster& roster, const Dialogue& current,
                                   ModelGateway& gateway, const SdrConfig& cfg,
                                   VariantPolicy policy, std::mt19937_64& rng) {
  PromptVariant variant = choose_variant(policy, rng);
  std::string prompt = assemble_context(task, speaker, variant, flags, roster, current,
                                        cfg.memory_limit);
  auto one = [&]() -> std::pair<std::string, bool> {
    ChatRequest req;
    req.prompt = prompt;
    req.expect_json = true;
    auto parsed = extract_json(gateway.chat(req));
    if (!parsed) throw ParseError("generation output is not JSON");
    return parse_response_json(*parsed);
  };

  CandidateResult result;
  if (mode == RunMode::baseline_best_of_3) {
    std::vector<std::pair<std::string, bool>> candidates;
    std::vector<std::string> texts;
    for (int i = 0; i < 3; ++i) {
      candidates.push_back(one());
      texts.push_back(candidates.back().first);
    }
    ChatRequest judge;
    judge.prompt = prompts::best_of_judge(render_dialogue_text(current), speaker, texts);
    judge.temperature = 0.0;
    judge.expect_json = true;
    int choice = 1;
    try {
      auto parsed = extract_json(gateway.chat(judge));
      if (!parsed || !parsed->is_object()) throw ParseError("judge output is not an object");
      const auto& cj = parsed->at("choice");
      choice = cj.is_string() ? std::stoi(cj.get<std::string>()) : cj.get<int>();
    } catch (const std::exception& e) {
      log_warn(std::string("best-of-3 judge failed, using candidate 1: ") + e.what());
      ++result.warnings;
      choice = 1;
    }
    if (choice < 1 || choice > 3) {
      log_warn("best-of-3 judge picked out-of-range index " + std::to_string(choice) +
               ", using candidate 1");
      ++result.warnings;
      choice = 1;
    }
    result.text = candidates[choice - 1].first;
    result.ends = candidates[choice - 1].second;
  } else {
    auto [text, ends] = one();
    result.text = text;
    result.ends = ends;
  }
  return result;
}

DialogueOutcome run_dialogue(const DialogueTask& task, RunMode mode,
                             const PromptInfoFlags& flags, const Roster& roster,
                             const DialogueStore& store, ModelGateway& gateway,
                             const SdrConfig& cfg, VariantPolicy policy, std::uint64_t seed) {
  DialogueOutcome out;
  std::mt19937_64 rng(seed);

  Dialogue current;
  current.dialogue_id = task.dialogue_id;
  current.time = task.time;
  current.time_epoch = task.time_epoch;
  current.location = task.location;
  current.participants = task.agents;

  nlohmann::json turn_traces = nlohmann::json::array();
  SdrEngine engine(store, gateway, roster, cfg, policy);

  try {
    for (int turn = 0; turn < cfg.max_turns; ++turn) {
      const std::string& speaker = task.agents[turn % 2].name;
      const std::string& listener = task.agents[(turn + 1) % 2].name;
      CandidateResult candidate =
          generate_candidate(task, speaker, mode, flags, roster, current, gateway, cfg,
                             policy, rng);
      out.warnings += candidate.warnings;

      std::string text = candidate.text;
      bool ends = candidate.ends;

      nlohmann::json turn_trace;
      turn_trace["turn"] = turn;
      turn_trace["speaker"] = speaker;
      turn_trace["candidate"] = text;

      if (text.empty()) {
        // No reply: the dialogue ends before this turn is committed.
        turn_trace["committed"] = "";
        turn_trace["ends"] = true;
        turn_traces.push_back(std::move(turn_trace));
        break;
      }

      if (mode == RunMode::sdr) {
        SdrOutcome corrected = engine.run(text, ends, current, speaker, listener, rng);
        out.degradations += corrected.trace.degradations;
        out.warnings += corrected.trace.warnings;
        turn_trace["sdr"] = corrected.trace.to_json();
        if (corrected.withdrawn) {
          turn_trace["committed"] = "";
          turn_trace["ends"] = true;
          turn_traces.push_back(std::move(turn_trace));
          break;
        }
        text = corrected.text;
        ends = corrected.ends;
      }

      Utterance u;
      u.dialogue_id = current.dialogue_id;
      u.speaker = speaker;
      u.text = text;
      u.turn_index = turn;
      u.utterance_id = current.dialogue_id + ":" + std::to_string(turn);
      current.utterances.push_back(std::move(u));

      turn_trace["committed"] = text;
      turn_trace["ends"] = ends;
      turn_traces.push_back(std::move(turn_trace));
      if (ends) break;
    }
  } catch (const Error& e) {
    log_warn("dialogue " + task.dialogue_id + " failed: " + e.what());
    out.failed = true;
    turn_traces.push_back({{"error", e.what()}});
  }

  out.regenerations = engine.regenerations();
  out.single_utterance = current.utterances.size() == 1;
  if (current.utterances.empty() && !out.failed) {
    log_warn("dialogue " + task.dialogue_id + " produced no utterances");
    out.failed = true;
  }

  out.trace = nlohmann::json{{"dialogue_id", task.dialogue_id},
                             {"mode", run_mode_name(mode)},
                             {"seed", seed},
                             {"turns", std::move(turn_traces)},
                             {"failed", out.failed},
                             {"single_utterance", out.single_utterance}};
  out.dialogue = std::move(current);
  return out;
}

namespace {

DialogueTask make_task(const Dialogue& d, const std::vector<Dialogue>& corpus) {
  DialogueTask task;
  task.dialogue_id = d.dialogue_id;
  task.time = d.time;
  task.time_epoch = d.time_epoch;
  task.location = d.location;
  task.agents = d.participants;
  for (const auto& prior : corpus) {
    if (prior.time_epoch >= d.time_epoch) continue;
    if (prior.has_participant(d.participants[0].name) &&
        prior.has_participant(d.participants[1].name))
      task.history.push_back(&prior);
  }
  std::sort(task.history.begin(), task.history.end(),
            [](const Dialogue* a, const Dialogue* b) {
              if (a->time_epoch != b->time_epoch) return a->time_epoch < b->time_epoch;
              return a->dialogue_id < b->dialogue_id;
            });
  return task;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

RunSummary run_corpus(const std::vector<Dialogue>& corpus, const Roster& roster,
                      GatewayFactory& factory, const SdrConfig& cfg, const RunOptions& options,
                      const std::filesystem::path& out_dir,
                      const std::filesystem::path& embedding_cache) {
  cfg.validate();
  if (corpus.empty()) throw ValidationError("corpus is empty");
  for (const auto& d : corpus)
    for (const auto& p : d.participants)
      if (!roster.count(p.name))
        throw ValidationError("dialogue " + d.dialogue_id + ": participant '" + p.name +
                              "' has no agent profile");

  std::filesystem::create_directories(out_dir);
  const std::string started_at = format_timestamp(
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());

  const bool standalone = cfg.history_source == "original";
  int parallelism = standalone ? std::max(1, options.parallelism) : 1;
  if (!standalone && options.parallelism > 1)
    log_warn("history_source=regenerated forces sequential execution");

  // Index order = corpus order; tasks never read each other's output in
  // standalone mode, so any execution order yields the same results.
  std::vector<DialogueOutcome> outcomes(corpus.size());
  RunSummary summary;

  auto embed_gateway = factory.make();
  DialogueStore store(*embed_gateway);
  if (!embedding_cache.empty()) store.attach_embedding_cache(embedding_cache);

  if (standalone) {
    for (const auto& d : corpus) store.insert_dialogue(d);

    std::atomic<size_t> next{0};
    std::mutex summary_mutex;
    auto worker = [&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= corpus.size()) break;
        // Fresh gateway per task: mock script queues start from the head no
        // matter which worker picks the task up.
        auto gateway = factory.make();
        DialogueTask task = make_task(corpus[i], corpus);
        std::uint64_t seed = mix_seed(options.seed, task.dialogue_id);
        outcomes[i] = run_dialogue(task, options.mode, options.flags, roster, store, *gateway,
                                   cfg, options.variant, seed);
        std::lock_guard<std::mutex> lock(summary_mutex);
        summary.calls.chat_calls += gateway->counters().chat_calls;
        summary.calls.embed_calls += gateway->counters().embed_calls;
        summary.calls.nli_calls += gateway->counters().nli_calls;
        summary.calls.summarize_calls += gateway->counters().summarize_calls;
        summary.calls.json_repairs += gateway->counters().json_repairs;
      }
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < parallelism; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  } else {
    // Regenerated history: process in time order, feeding each finished
    // dialogue back into the store.
    std::vector<size_t> order(corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (corpus[a].time_epoch != corpus[b].time_epoch)
        return corpus[a].time_epoch < corpus[b].time_epoch;
      return corpus[a].dialogue_id < corpus[b].dialogue_id;
    });
    std::vector<Dialogue> regenerated_so_far;
    auto gateway = factory.make();
    for (size_t i : order) {
      DialogueTask task = make_task(corpus[i], regenerated_so_far);
      std::uint64_t seed = mix_seed(options.seed, task.dialogue_id);
      outcomes[i] = run_dialogue(task, options.mode, options.flags, roster, store, *gateway,
                                 cfg, options.variant, seed);
      if (!outcomes[i].failed && outcomes[i].dialogue.utterances.size() >= 2) {
        regenerated_so_far.push_back(outcomes[i].dialogue);
        store.insert_dialogue(outcomes[i].dialogue);
      }
    }
    summary.calls = gateway->counters();
  }
  summary.calls.embed_calls += embed_gateway->counters().embed_calls;

  std::vector<Dialogue> regenerated;
  std::string traces;
  for (const auto& o : outcomes) {
    ++summary.dialogues;
    if (o.failed) ++summary.failed;
    if (o.single_utterance) ++summary.single_utterance;
    summary.regenerations += o.regenerations;
    summary.degradations += o.degradations;
    summary.warnings += o.warnings;
    if (!o.failed) regenerated.push_back(o.dialogue);
    traces += o.trace.dump() + "\n";
  }
  write_corpus_jsonl(out_dir / "regenerated.jsonl", regenerated);
  write_atomic(out_dir / "traces.jsonl", traces);

  const std::string ended_at = format_timestamp(
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  nlohmann::json manifest = {
      {"version", kVersion},
      {"mode", run_mode_name(options.mode)},
      {"seed", options.seed},
      {"parallelism", parallelism},
      {"prompt_info", options.flags.to_string()},
      {"backend", factory.config().identity()},
      {"config", cfg.to_json()},
      {"started_at", started_at},
      {"ended_at", ended_at},
      {"counts",
       {{"dialogues", summary.dialogues},
        {"failed", summary.failed},
        {"single_utterance", summary.single_utterance},
        {"regenerations", summary.regenerations},
        {"degradations", summary.degradations},
        {"warnings", summary.warnings},
        {"chat_calls", summary.calls.chat_calls},
        {"embed_calls", summary.calls.embed_calls},
        {"nli_calls", summary.calls.nli_calls},
        {"json_repairs", summary.calls.json_repairs}}},
  };
  if (!embedding_cache.empty()) manifest["embedding_cache"] = embedding_cache.string();
  write_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

}  // namespace sdr
