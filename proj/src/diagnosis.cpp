#include "sdr/diagnosis.hpp"

#include "sdr/error.hpp"
#include "sdr/log.hpp"
#include "sdr/prompts.hpp"

namespace sdr {

nlohmann::json DiagnosisComment::to_json() const {
  nlohmann::json j;
  j["pipeline"] = pipeline_name(pipeline);
  if (score) j["score"] = *score;
  if (agreed) j["agreed"] = *agreed;
  j["reason"] = reason;
  return j;
}

namespace {

// Issue-finding rank: for scored comments the score itself; for agreement
// comments disagreement counts as the high outcome.
int comment_rank(const DiagnosisComment& c) {
  if (c.score) return *c.score;
  return c.agreed && !*c.agreed ? 1 : 0;
}

int parse_int_field(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    double d = v.get<double>();
    int i = static_cast<int>(d);
    if (static_cast<double>(i) == d) return i;
    throw ParseError(std::string(key) + " is not an integer");
  }
  if (v.is_string()) {
    try {
      size_t pos = 0;
      int i = std::stoi(v.get<std::string>(), &pos);
      if (pos == v.get<std::string>().size()) return i;
    } catch (const std::exception&) {
    }
  }
  throw ParseError(std::string(key) + " is not an integer");
}

bool parse_bool_field(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s == "true" || s == "True") return true;
    if (s == "false" || s == "False") return false;
  }
  throw ParseError(std::string(key) + " is not a boolean");
}

}  // namespace

DiagnosisComment select_trial(const std::vector<DiagnosisComment>& comments) {
  if (comments.empty()) throw Error("select_trial: no comments");
  const DiagnosisComment* best = &comments[0];
  for (const auto& c : comments) {
    if (comment_rank(c) > comment_rank(*best) ||
        (comment_rank(c) == comment_rank(*best) && c.reason.size() > best->reason.size()))
      best = &c;
  }
  return *best;
}

Diagnoser::Diagnoser(ModelGateway& gateway, const SdrConfig& cfg)
    : gateway_(&gateway), cfg_(cfg) {}

std::optional<DiagnosisComment> Diagnoser::diagnose_with_evidence(
    Pipeline pipeline, const CandidateContext& c, const std::string& listener,
    const std::vector<const Dialogue*>& evidence, const std::string& speaker_background,
    int* warnings) {
  std::string current_text = c.current ? render_dialogue_text(*c.current) : "";
  std::string current_time = c.current ? c.current->time : "";
  std::string prompt;
  if (pipeline == Pipeline::repetition)
    prompt = prompts::repetition_diagnosis(speaker_background, c.speaker, evidence,
                                           current_text, c.text);
  else if (pipeline == Pipeline::inconsistency)
    prompt = prompts::consistency_diagnosis(speaker_background, c.speaker, listener, evidence,
                                            current_time, current_text, c.text);
  else
    throw Error("diagnose_with_evidence: hallucination uses diagnose_agreement");

  std::vector<DiagnosisComment> trials;
  for (int i = 0; i < cfg_.n_diag; ++i) {
    ChatRequest req;
    req.prompt = prompt;
    req.temperature = cfg_.diagnosis_temperature;
    req.expect_json = true;
    try {
      auto parsed = extract_json(gateway_->chat(req));
      if (!parsed || !parsed->is_object()) throw ParseError("diagnosis output is not an object");
      DiagnosisComment comment;
      comment.pipeline = pipeline;
      comment.score = parse_int_field(*parsed, "score");
      if (*comment.score < 1 || *comment.score > 10)
        throw ParseError("diagnosis score out of 1..10");
      if (parsed->contains("reason"))
        comment.reason = parsed->at("reason").get<std::string>();
      else if (parsed->contains("Details"))
        comment.reason = parsed->at("Details").get<std::string>();
      if (comment.reason.empty()) throw ParseError("diagnosis reason is empty");
      trials.push_back(std::move(comment));
    } catch (const Error& e) {
      log_warn(std::string(pipeline_name(pipeline)) + " diagnosis trial " +
               std::to_string(i + 1) + " failed: " + e.what());
      if (warnings) ++*warnings;
    }
  }
  if (trials.empty()) return std::nullopt;
  return select_trial(trials);
}

std::optional<DiagnosisComment> Diagnoser::diagnose_agreement(
    const CandidateContext& c, const AgentProfile& mentioned,
    const Dialogue* last_dialogue_with_speaker, int* warnings) {
  std::string memories = render_memories(mentioned, cfg_.memory_limit);
  std::string prompt = prompts::agreement_diagnosis(mentioned, memories,
                                                    last_dialogue_with_speaker, c.speaker,
                                                    c.text);
  std::vector<DiagnosisComment> trials;
  for (int i = 0; i < cfg_.n_diag; ++i) {
    ChatRequest req;
    req.prompt = prompt;
    req.temperature = cfg_.diagnosis_temperature;
    req.expect_json = true;
    try {
      auto parsed = extract_json(gateway_->chat(req));
      if (!parsed || !parsed->is_object()) throw ParseError("agreement output is not an object");
      DiagnosisComment comment;
      comment.pipeline = Pipeline::hallucination;
      comment.agreed = parse_bool_field(*parsed, "agreed");
      comment.reason = parsed->value("reason", "");
      if (comment.reason.empty()) throw ParseError("agreement reason is empty");
      trials.push_back(std::move(comment));
    } catch (const Error& e) {
      log_warn("agreement diagnosis trial " + std::to_string(i + 1) + " failed: " + e.what());
      if (warnings) ++*warnings;
    }
  }
  if (trials.empty()) return std::nullopt;
  return select_trial(trials);
}

}  // namespace sdr
