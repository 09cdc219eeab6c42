#include "sdr/prompts.hpp"

namespace sdr::prompts {

namespace {

std::string evidence_blocks(const std::vector<const Dialogue*>& evidence) {
  std::string out;
  for (const Dialogue* d : evidence) {
    out += "Time: " + d->time + "\n";
    out += render_dialogue_text(*d);
    out += "\n";
  }
  return out;
}

const char* kOutputResponse =
    "**Output a JSON object:**\n"
    "{\n"
    "    \"Response\": \"<your reply as [Speaker] (if any)>\",\n"
    "    \"The conversation ends with [Speaker]'s utterance\": <true/false>\n"
    "}\n";

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string context_sections(const PromptInputs& in, PromptVariant variant) {
  std::string p;
  bool persona = variant == PromptVariant::persona_narrative;
  if (persona) {
    p += "Your name is " + in.speaker + ".\n";
    if (!in.background.empty())
      p += "Your background is as follows:\n" + in.background + "\n\n";
    if (!in.memories.empty())
      p += "Here are some of your recent memories:\n" + in.memories + "\n";
    if (!in.time.empty() || !in.location.empty()) {
      p += "It is " + in.time + ".";
      if (!in.location.empty()) p += " You are at " + in.location + ".";
      p += "\n";
    }
    if (!in.speaker_status.empty())
      p += "Your current status: " + in.speaker_status + "\n";
    if (!in.listener_status.empty())
      p += in.listener + "'s current status: " + in.listener_status + "\n";
    if (!in.pair_history.empty()) {
      p += "\nHere are your previous conversations with " + in.listener + ":\n";
      p += evidence_blocks(in.pair_history);
    }
    p += "\nYou are engaged in a conversation with " + in.listener +
         ", and here is the content of the dialogue so far:\n";
  } else {
    p += "# Contextual Information:\n";
    if (!in.background.empty())
      p += "**Introduction:**\n" + in.background + "\n\n";
    if (!in.memories.empty())
      p += "**Memories of " + in.speaker + ":**\n" + in.memories + "\n";
    if (!in.time.empty() || !in.location.empty()) {
      p += "**Time and Location:** " + in.time;
      if (!in.location.empty()) p += ", " + in.location;
      p += "\n";
    }
    if (!in.speaker_status.empty() || !in.listener_status.empty()) {
      p += "**Status:** ";
      if (!in.speaker_status.empty()) p += in.speaker + ": " + in.speaker_status + ". ";
      if (!in.listener_status.empty()) p += in.listener + ": " + in.listener_status + ".";
      p += "\n";
    }
    if (!in.pair_history.empty()) {
      p += "\n**Previous Dialogues between " + in.speaker + " and " + in.listener + ":**\n";
      p += evidence_blocks(in.pair_history);
    }
    p += "\n**Current Dialogue between " + in.speaker + " and " + in.listener + ":**\n";
  }
  if (in.current_dialogue.empty())
    p += "(The conversation has not started yet; you speak first.)\n";
  else
    p += in.current_dialogue;
  return p;
}

}  // namespace

std::string dialogue_block(const Dialogue& d) {
  return "Time: " + d.time + "\n" + render_dialogue_text(d);
}

std::string generation(const PromptInputs& in, PromptVariant variant) {
  std::string p = context_sections(in, variant);
  p += "\n# Task:\n";
  if (variant == PromptVariant::persona_narrative)
    p += "Consider whether you would respond to " + in.listener +
         ". If you choose to reply, what will you say next? Would your response aim to "
         "conclude the conversation?\n";
  else
    p += "Assuming the role of " + in.speaker + ", consider whether you would respond to " +
         in.listener +
         ". If you choose to reply, what will you say next? Would your response aim to "
         "conclude the conversation?\n";
  p += "If you have nothing new to add, you can end the current dialogue.\n\n";
  p += replace_all(kOutputResponse, "[Speaker]", in.speaker);
  return p;
}

std::string revision(const PromptInputs& in, PromptVariant variant,
                     const std::string& rejected_text, const std::string& reasons,
                     const std::string& suggestion) {
  std::string p = context_sections(in, variant);
  p += "\n# Task:\n";
  if (variant == PromptVariant::persona_narrative) {
    p += "Consider whether you would respond to " + in.listener +
         ". If you choose to reply, what would you say? Would your response aim to conclude "
         "the conversation?\n";
    p += "You might consider saying \"" + rejected_text +
         "\", but it has some issues, for instance:\n";
  } else {
    p += "Assuming the role of " + in.speaker + ", consider whether you would respond to " +
         in.listener +
         ". If you choose to reply, what would you say? Would your response aim to conclude "
         "the conversation?\n";
    p += "You might be considering saying something that has some issues, such as:\n\"" +
         rejected_text + "\"\n";
    p += "The issues are:\n";
  }
  p += reasons + "\n";
  p += "Here are some suggestions for your reference:\n" + suggestion + "\n";
  p += "If the response is redundant or repetitive, you can end the current dialogue.\n\n";
  p += replace_all(kOutputResponse, "[Speaker]", in.speaker);
  return p;
}

std::string triplet_extraction(const std::string& label, const std::string& content) {
  return "Extract personal information about the people involved or mentioned in the "
         "following " +
         label +
         " as a list of [\"Subject\", \"Relation\", \"Object\"] triplets. Each triplet "
         "captures one fact about a person: who they are, what they do, what they are "
         "working on, whom they interact with, or what is said about them. Use full names "
         "where available.\n\n" +
         content +
         "\n---\n"
         "Output format: Output a JSON list of [\"Subject\", \"Relation\", \"Object\"] "
         "triplets, for example [[\"Ada Lovelace\", \"works on\", \"an analytical engine\"]]. "
         "Output [] if there is no personal information.\n";
}

std::string evidence_selection(const std::string& suspicious_block, int k) {
  return "The following statements from a candidate response may contradict statements made "
         "in earlier dialogues. Each earlier statement is annotated with the id of the "
         "dialogue it came from.\n\n" +
         suspicious_block +
         "\n---\n"
         "# Task: Select up to " +
         std::to_string(k) +
         " dialogue ids whose dialogues are most likely contradicted by the candidate "
         "response, ordered from most to least contradicted.\n\n"
         "Output format: Output a json of the following format:\n"
         "{\n"
         "    \"dialogues\": [\"<dialogue id>\", ...]\n"
         "}\n";
}

std::string hallucination_score(const std::string& utterance, const std::string& speaker,
                                const std::string& listener, const std::string& mentioned) {
  return "In a conversation between " + speaker + " and " + listener + ", " + speaker +
         " is about to say:\n\"" + utterance + "\"\n\nThis statement mentions " + mentioned +
         ", who is not part of the conversation.\n\n"
         "# Task: On a scale of 1 to 10, rate the likelihood that this statement is a "
         "harmful hallucination: fabricated information about " +
         mentioned +
         " that could later be accepted as truth. Give a higher score if the following "
         "criteria are met:\n"
         "(a) Speaker-objectivity: it is an objective statement regarding " +
         mentioned + " from " + speaker +
         "'s perspective, not merely " + speaker + "'s own plan, opinion, or experience.\n"
         "(b) Discernment capability: " +
         mentioned +
         " could currently verify whether the statement is true.\n"
         "(c) Impact: the statement, if fabricated but later accepted as truth, would "
         "significantly impact " +
         mentioned +
         ".\n\n"
         "Output format: Output a json of the following format:\n"
         "{\n"
         "    \"reason\": \"your reason for the score\",\n"
         "    \"score\": \"<json integer>\"\n"
         "}\n";
}

std::string repetition_diagnosis(const std::string& speaker_background,
                                 const std::string& speaker,
                                 const std::vector<const Dialogue*>& evidence,
                                 const std::string& current_dialogue,
                                 const std::string& candidate) {
  std::string p = "Context for the task:\n" + speaker_background + "\n\n";
  p += "Here are some conversation histories between various people:\n";
  p += evidence_blocks(evidence);
  if (!current_dialogue.empty()) {
    p += "Here is the latest session:\n" + current_dialogue + "\n";
  }
  p += speaker +
       " is about to say the following sentence ('the response') next in the latest "
       "session:\n[ " +
       candidate + " ]\n\n---\n";
  p += "# Task: Please identify any \"unnatural points\" in 'the response'.\n"
       "An \"unnatural point\" refers to redundancies or repetitive statements made in 'the "
       "response' when considering the context of the previous conversations.\n"
       "On a scale of 1 (no unnatural point) to 10 (the most significant of unnatural "
       "point), rate the likely significant score of 'the response'. And explain the reason "
       "for the score.\n\n"
       "Output format: Output a json of the following format:\n"
       "{\n"
       "    \"reason\": \"point out the unnatural point and your reason for the score\",\n"
       "    \"score\": \"<json integer>\"\n"
       "}\n";
  return p;
}

std::string consistency_diagnosis(const std::string& speaker_background,
                                  const std::string& speaker, const std::string& listener,
                                  const std::vector<const Dialogue*>& evidence,
                                  const std::string& current_time,
                                  const std::string& current_dialogue,
                                  const std::string& candidate) {
  std::string p = "# Context\n**Background:**\n" + speaker_background + "\n\n";
  p += "**Past Dialogues involving " + speaker + ":**\n";
  p += evidence_blocks(evidence);
  p += "**Current Dialogue between " + speaker + " and " + listener + ":**\n";
  p += "Time: " + current_time + "\n" + current_dialogue + "\n";
  p += "**Candidate Response:**\n" + speaker + " is planning to say: [ " + candidate +
       " ]\n\n---\n";
  p += "# Task\n"
       "Determine if there is any contradiction between the candidate response and the past "
       "dialogue/character background. Do not consider the absence of a repeated mention as "
       "an inconsistency. Ignore statements that are situational or not meant to be taken "
       "literally. Rate the severity of the contradiction on a scale of 1 (no contradiction) "
       "to 10 (a direct contradiction). Let's think step by step.\n\n"
       "**Output a JSON object:**\n"
       "{\n"
       "    \"Contradiction?\": <true/false>,\n"
       "    \"score\": \"<json integer>\",\n"
       "    \"Details\": \"<Specify any contradictions, if any>\"\n"
       "}\n";
  return p;
}

std::string agreement_diagnosis(const AgentProfile& mentioned, const std::string& memories,
                                const Dialogue* last_dialogue_with_speaker,
                                const std::string& speaker, const std::string& candidate) {
  std::string p = "Context for the task:\n\n";
  p += "Here is a brief description of " + mentioned.name + ".\n" + mentioned.background +
       "\n\n";
  if (!memories.empty())
    p += "Here is the memory that is in " + mentioned.name + "'s head:\n" + memories + "\n";
  if (last_dialogue_with_speaker) {
    p += "Here is the previous conversation between " + mentioned.name + " and " + speaker +
         ":\n";
    p += dialogue_block(*last_dialogue_with_speaker) + "\n";
  }
  p += speaker + " just mentioned the following statement about " + mentioned.name +
       ":\n[ " + candidate + " ]\n\n---\n";
  p += "# Task: Based on the information provided above, would " + mentioned.name +
       " agree with the statement?\n\n"
       "Output format: Output a json of the following format:\n"
       "{\n"
       "    \"agreed\": \"<json Boolean>\",\n"
       "    \"reason\": \"the reason that led " +
       mentioned.name +
       " to make the judgment\"\n"
       "}\n";
  return p;
}

std::string comment_integration(const std::string& candidate,
                                const std::string& current_dialogue,
                                const std::vector<std::string>& reasons) {
  std::string p = "A speaker in the following dialogue:\n" + current_dialogue + "\n";
  p += "is about to say:\n\"" + candidate + "\"\n\n";
  p += "Reviewers raised the following issues with this response:\n";
  for (const auto& r : reasons) p += "- " + r + "\n";
  p += "\n# Task: Integrate all comments and provide concrete suggestions for improving the "
       "response. Be specific about what to change, what to drop, and what to add.\n\n"
       "Output the suggestions as plain text.\n";
  return p;
}

std::string best_of_judge(const std::string& current_dialogue, const std::string& speaker,
                          const std::vector<std::string>& candidates) {
  std::string p = "Here is a dialogue in progress:\n" + current_dialogue + "\n";
  p += speaker + " could say one of the following responses next:\n";
  for (size_t i = 0; i < candidates.size(); ++i)
    p += std::to_string(i + 1) + ". " + candidates[i] + "\n";
  p += "\n# Task: Which response is best: the most natural, consistent, and informative "
       "continuation? Answer with its number.\n\n"
       "Output format: Output a json of the following format:\n"
       "{\n"
       "    \"choice\": <json integer>\n"
       "}\n";
  return p;
}

std::string corpus_judge(const Dialogue& d, const std::vector<const Dialogue*>& evidence) {
  std::string p = "# Context\n";
  if (!evidence.empty()) {
    p += "**Past dialogues involving the same people:**\n";
    p += evidence_blocks(evidence);
  }
  p += "**Current dialogue between " + d.participants[0].name + " and " +
       d.participants[1].name + ":**\n";
  p += dialogue_block(d);
  p += "\n---\n"
       "# Task: Score the current dialogue on a scale from 1 to 10 on two dimensions.\n"
       "Consistency: the dialogue does not contradict the past dialogues or itself.\n"
       "Factualness: the dialogue does not assert fabricated information about people, "
       "especially about people not present in the conversation.\n\n"
       "**Output a JSON object:**\n"
       "{\n"
       "    \"consistency\": {\"score\": <json integer>, \"reason\": \"...\"},\n"
       "    \"factualness\": {\"score\": <json integer>, \"reason\": \"...\"}\n"
       "}\n";
  return p;
}

}  // namespace sdr::prompts
