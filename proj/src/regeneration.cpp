#include "sdr/regeneration.hpp"

#include <algorithm>

#include "sdr/error.hpp"
#include "sdr/log.hpp"
#include "sdr/text.hpp"

namespace sdr {

const char* variant_name(PromptVariant v) {
  return v == PromptVariant::persona_narrative ? "persona_narrative" : "structured_task";
}

VariantPolicy variant_policy_from_string(const std::string& s) {
  if (s == "mixed") return VariantPolicy::mixed;
  if (s == "persona") return VariantPolicy::persona;
  if (s == "task") return VariantPolicy::task;
  throw ConfigError("unknown variant policy: '" + s + "'");
}

std::vector<DiagnosisComment> filter_comments(const std::vector<DiagnosisComment>& comments,
                                              const SdrConfig& cfg) {
  std::vector<DiagnosisComment> retained;
  for (const auto& c : comments) {
    if (c.score && *c.score >= cfg.theta_regen)
      retained.push_back(c);
    else if (c.agreed && !*c.agreed)
      retained.push_back(c);
  }
  return retained;
}

PromptVariant pick_variant(std::mt19937_64& rng) {
  return (rng() & 1ull) == 0 ? PromptVariant::persona_narrative
                             : PromptVariant::structured_task;
}

PromptVariant choose_variant(VariantPolicy policy, std::mt19937_64& rng) {
  switch (policy) {
    case VariantPolicy::persona: return PromptVariant::persona_narrative;
    case VariantPolicy::task: return PromptVariant::structured_task;
    case VariantPolicy::mixed: break;
  }
  return pick_variant(rng);
}

nlohmann::json RevisionRecord::to_json() const {
  return {{"variant", variant_name(variant)}, {"reasons", reasons},
          {"suggestion", suggestion},         {"new_text", new_text},
          {"ends", ends},                     {"parse_failed", parse_failed}};
}

nlohmann::json RoundTrace::to_json() const {
  nlohmann::json j;
  j["round"] = round;
  j["candidate"] = candidate;
  j["reports"] = nlohmann::json::array();
  for (const auto& r : reports) j["reports"].push_back(r.to_json());
  j["comments"] = nlohmann::json::array();
  for (const auto& c : comments) j["comments"].push_back(c.to_json());
  j["retained"] = nlohmann::json::array();
  for (const auto& c : retained) j["retained"].push_back(c.to_json());
  if (force) j["force"] = true;
  if (revision) j["revision"] = revision->to_json();
  return j;
}

nlohmann::json SdrTrace::to_json() const {
  nlohmann::json j;
  j["rounds"] = nlohmann::json::array();
  for (const auto& r : rounds) j["rounds"].push_back(r.to_json());
  j["committed_text"] = committed_text;
  j["ends"] = ends;
  j["withdrawn"] = withdrawn;
  if (degradations > 0) j["degradations"] = degradations;
  if (warnings > 0) j["warnings"] = warnings;
  return j;
}

std::pair<std::string, bool> parse_response_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("response output is not an object");
  if (!j.contains("Response")) throw ParseError("response output missing 'Response'");
  std::string text;
  if (j.at("Response").is_string()) text = j.at("Response").get<std::string>();
  bool ends = false;
  bool found = false;
  for (const auto& [key, value] : j.items()) {
    if (key.rfind("The conversation ends with", 0) == 0) {
      if (value.is_boolean())
        ends = value.get<bool>();
      else if (value.is_string())
        ends = value.get<std::string>() == "true" || value.get<std::string>() == "True";
      else
        throw ParseError("ends flag is not a boolean");
      found = true;
      break;
    }
  }
  if (!found) throw ParseError("response output missing the ends flag");
  return {trim(text), ends};
}

SdrEngine::SdrEngine(const DialogueStore& store, ModelGateway& gateway, const Roster& roster,
                     const SdrConfig& cfg, VariantPolicy policy)
    : store_(&store), gateway_(&gateway), roster_(&roster), cfg_(cfg), policy_(policy),
      screener_(store, gateway, cfg), diagnoser_(gateway, cfg) {}

std::string SdrEngine::integrate_comments(const std::vector<DiagnosisComment>& retained,
                                          const std::string& candidate,
                                          const std::string& current_dialogue,
                                          int* degradations) {
  if (retained.empty()) throw Error("integrate_comments: no comments");
  std::vector<std::string> reasons;
  for (const auto& c : retained) reasons.push_back(c.reason);
  ChatRequest req;
  req.prompt = prompts::comment_integration(candidate, current_dialogue, reasons);
  req.temperature = 0.3;
  try {
    return gateway_->chat(req);
  } catch (const Error& e) {
    log_warn("comment integration failed, falling back to raw reasons: " +
             std::string(e.what()));
    if (degradations) ++*degradations;
    std::string joined;
    for (size_t i = 0; i < reasons.size(); ++i) {
      if (i > 0) joined += "\n";
      joined += reasons[i];
    }
    return joined;
  }
}

RevisionRecord SdrEngine::regenerate(const PromptInputs& inputs, PromptVariant variant,
                                     const std::string& rejected_text,
                                     const std::string& reasons,
                                     const std::string& suggestion) {
  RevisionRecord rec;
  rec.variant = variant;
  rec.reasons = reasons;
  rec.suggestion = suggestion;
  ChatRequest req;
  req.prompt = prompts::revision(inputs, variant, rejected_text, reasons, suggestion);
  req.expect_json = true;
  ++regenerations_;
  try {
    auto parsed = extract_json(gateway_->chat(req));
    if (!parsed) throw ParseError("revision output is not JSON");
    auto [text, ends] = parse_response_json(*parsed);
    rec.new_text = text;
    rec.ends = ends;
  } catch (const Error& e) {
    log_warn("regeneration failed, keeping previous candidate: " + std::string(e.what()));
    rec.parse_failed = true;
    rec.new_text = rejected_text;
  }
  return rec;
}

SdrOutcome SdrEngine::run(const std::string& candidate, bool candidate_ends,
                          const Dialogue& current, const std::string& speaker,
                          const std::string& listener, std::mt19937_64& rng) {
  SdrOutcome out;
  std::string text = candidate;
  bool ends = candidate_ends;

  std::string speaker_background;
  if (auto it = roster_->find(speaker); it != roster_->end())
    speaker_background = it->second.background;

  std::vector<std::string> roster_names;
  for (const auto& [name, profile] : *roster_) roster_names.push_back(name);

  for (int round = 1; round <= cfg_.max_rounds; ++round) {
    RoundTrace rt;
    rt.round = round;
    rt.candidate = text;

    CandidateContext ctx{text, speaker, &current};

    auto degraded = [&](Pipeline p, const Error& e) {
      log_warn(std::string(pipeline_name(p)) + " screening degraded to clean: " + e.what());
      ++out.trace.degradations;
      ScreeningReport r;
      r.pipeline = p;
      return r;
    };

    ScreeningReport repetition;
    try {
      repetition = screener_.screen_repetition(ctx);
    } catch (const Error& e) {
      repetition = degraded(Pipeline::repetition, e);
    }
    rt.reports.push_back(repetition);

    std::string reasons;
    std::string suggestion;
    if (repetition.outcome == Outcome::force_regenerate) {
      // Near-identical to a stored utterance: no diagnosis, straight to
      // regeneration with a canned note.
      rt.force = true;
      const auto& hit = repetition.hits.front();
      reasons = "The response is nearly identical (similarity " +
                std::to_string(hit.score).substr(0, 4) + ") to something " + hit.speaker +
                " already said.";
      suggestion =
          "Say something new that moves the conversation forward instead of repeating an "
          "earlier statement, or end the dialogue.";
    } else {
      ScreeningReport inconsistency;
      try {
        inconsistency = screener_.screen_inconsistency(ctx, listener);
      } catch (const Error& e) {
        inconsistency = degraded(Pipeline::inconsistency, e);
      }
      rt.reports.push_back(inconsistency);

      ScreeningReport hallucination;
      try {
        auto mentions = detect_third_party_mentions(text, speaker, listener, roster_names);
        hallucination = screener_.screen_hallucination(ctx, mentions, listener);
      } catch (const Error& e) {
        hallucination = degraded(Pipeline::hallucination, e);
      }
      rt.reports.push_back(hallucination);
      out.trace.warnings += repetition.warnings + inconsistency.warnings +
                            hallucination.warnings;

      // Diagnosis for triggered pipelines.
      for (const ScreeningReport* report : {&repetition, &inconsistency}) {
        if (report->outcome != Outcome::evidence) continue;
        std::vector<const Dialogue*> evidence;
        for (const auto& id : report->evidence)
          if (const Dialogue* d = store_->find(id)) evidence.push_back(d);
        try {
          auto comment = diagnoser_.diagnose_with_evidence(report->pipeline, ctx, listener,
                                                           evidence, speaker_background,
                                                           &out.trace.warnings);
          if (comment) rt.comments.push_back(*comment);
        } catch (const Error& e) {
          log_warn(std::string(pipeline_name(report->pipeline)) +
                   " diagnosis degraded to clean: " + e.what());
          ++out.trace.degradations;
        }
      }
      if (hallucination.outcome == Outcome::flagged) {
        auto it = roster_->find(hallucination.mentioned_agent);
        if (it == roster_->end()) {
          log_warn("mentioned agent '" + hallucination.mentioned_agent +
                   "' has no profile; agreement diagnosis skipped");
          ++out.trace.warnings;
        } else {
          const Dialogue* last_with_speaker = nullptr;
          for (const Dialogue* d :
               store_->dialogues_involving(hallucination.mentioned_agent, current.time_epoch))
            if (d->has_participant(speaker)) last_with_speaker = d;
          try {
            auto comment = diagnoser_.diagnose_agreement(ctx, it->second, last_with_speaker,
                                                         &out.trace.warnings);
            if (comment) rt.comments.push_back(*comment);
          } catch (const Error& e) {
            log_warn("agreement diagnosis degraded to clean: " + std::string(e.what()));
            ++out.trace.degradations;
          }
        }
      }

      rt.retained = filter_comments(rt.comments, cfg_);
      if (rt.retained.empty()) {
        out.trace.rounds.push_back(std::move(rt));
        out.text = text;
        out.ends = ends;
        out.trace.committed_text = out.text;
        out.trace.ends = out.ends;
        return out;
      }
      std::vector<std::string> reason_list;
      for (const auto& c : rt.retained) reason_list.push_back(c.reason);
      for (size_t i = 0; i < reason_list.size(); ++i) {
        if (i > 0) reasons += "\n";
        reasons += reason_list[i];
      }
      suggestion = integrate_comments(rt.retained, text, render_dialogue_text(current),
                                      &out.trace.degradations);
    }

    // Revision: the template carries background, current dialogue, the
    // rejected text, reasons, and the integrated suggestion.
    PromptInputs inputs;
    inputs.speaker = speaker;
    inputs.listener = listener;
    inputs.background = speaker_background;
    inputs.current_dialogue = render_dialogue_text(current);
    PromptVariant variant = choose_variant(policy_, rng);
    RevisionRecord rec = regenerate(inputs, variant, text, reasons, suggestion);
    rt.revision = rec;
    out.trace.rounds.push_back(std::move(rt));

    if (!rec.parse_failed) {
      if (rec.new_text.empty() && rec.ends) {
        // The speaker withdraws the turn; the dialogue ends here.
        out.text.clear();
        out.ends = true;
        out.withdrawn = true;
        out.trace.committed_text.clear();
        out.trace.ends = true;
        out.trace.withdrawn = true;
        return out;
      }
      text = rec.new_text;
      ends = rec.ends;
    }
  }

  // Round cap reached; the last candidate stands.
  out.text = text;
  out.ends = ends;
  out.trace.committed_text = text;
  out.trace.ends = ends;
  return out;
}

}  // namespace sdr
