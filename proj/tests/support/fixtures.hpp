#pragma once

#include <random>
#include <string>
#include <vector>

#include "sdr/dialogue.hpp"
#include "support/test_util.hpp"

namespace sdr::test {

// Four dialogue snippets in which every dialogue touches the poetry /
// artwork / collaboration cluster; used by the keyword-spread tests.
inline std::vector<Dialogue> collaboration_snippets() {
  return {
      make_dialogue(
          "D1", "2023-02-13 14:43:20", "Arthur Burton", "Carmen Ortiz",
          {{"Arthur Burton",
            "Excuse me, Carmen. I couldn't help but overhear your conversation about "
            "potential collaborations. Additionally, I'm passionate about creating job "
            "opportunities for young people in the community and would love to brainstorm "
            "with you on how we could work together on that. What do you think?"},
           {"Carmen Ortiz",
            "That sounds great, Arthur! I'm actually meeting Rajiv Patel here later to "
            "discuss potential collaborations on art projects and medicinal development "
            "using mathematical patterns found in nature. I'm also discussing potential "
            "collaborations with various individuals about promoting art in low-income "
            "communities and supporting local businesses. And we have plans for a poetry "
            "and artwork project with Latoya Williams. Additionally, we're discussing "
            "potential collaborations on creative projects such as a mobile app for local "
            "businesses and community events. I would love to hear more about your "
            "mixology ideas and how we might be able to collaborate on that as well."}}),
      make_dialogue(
          "D2", "2023-02-13 14:57:20", "Hailey Johnson", "Carmen Ortiz",
          {{"Hailey Johnson",
            "I was actually just talking to Arthur Burton about potential collaborations "
            "in mixology, art, poetry, improv, and medication development based on "
            "mathematical patterns in nature. I invited him to be a guest on my podcast to "
            "contribute unique cocktail recipes. And then I saw you and thought it would "
            "be great to catch up."},
           {"Carmen Ortiz",
            "Wow, that sounds really interesting! I'm actually discussing potential "
            "collaborations with Tamara Taylor and Rajiv Patel on creating job "
            "opportunities for young people in the community, as well as expanding book "
            "sales online. I'm also working with Latoya Williams on a poetry and artwork "
            "project, and considering collaborations with Giorgio Rossi and Arthur Burton "
            "on mixology ideas and medicinal development using mathematical patterns found "
            "in nature. We all plan to grab a drink here after Rajiv's first solo show."}}),
      make_dialogue(
          "D3", "2023-02-13 15:05:20", "Jennifer Moore", "Tamara Taylor",
          {{"Jennifer Moore",
            "That sounds like a great idea! I'd love to collaborate with you and other "
            "local artists. Do you have any other projects or collaborations in mind?"},
           {"Tamara Taylor",
            "Well, I'm considering collaborations with Carmen Ortiz, Giorgio Rossi, "
            "Abigail Chen, and Francisco Lopez for projects involving poetry, artwork, and "
            "potentially other fields like science and math. I'm also interested in "
            "attending political discussions and expanding my book sales online. What "
            "about you?"}}),
      make_dialogue(
          "D4", "2023-02-13 18:16:20", "Latoya Williams", "Rajiv Patel",
          {{"Latoya Williams",
            "That sounds like a great idea. And I'm also open to collaborating with you "
            "on exploring connections between math, nature, and art. I'm actually "
            "discussing a similar project with Ryan Park."},
           {"Rajiv Patel",
            "That's great to hear. And if you're interested, Francisco Lopez and I are "
            "also exploring a project involving poetry, artwork, and mathematical "
            "patterns. So there's definitely a lot of potential for collaboration and "
            "creativity in this space."}}),
  };
}

// Random small corpus: a handful of agents chatting in pairs with texts
// drawn from a fixed vocabulary. Deterministic per seed.
inline std::vector<Dialogue> random_corpus(std::mt19937_64& rng, int max_dialogues = 10) {
  const std::vector<std::string> names = {"Ada Park",   "Ben Cole",  "Cyd Brown",
                                          "Dina Reyes", "Eli Novak", "Fay Osei"};
  const std::vector<std::string> vocab = {
      "garden", "music",    "festival", "bread",  "mayor",   "paint",  "river",
      "poetry", "workshop", "market",   "recipe", "telescope", "chess", "harvest"};
  int agent_count = 3 + static_cast<int>(rng() % 4);
  int dialogue_count = 4 + static_cast<int>(rng() % (max_dialogues - 3));
  auto sentence = [&] {
    int words = 3 + static_cast<int>(rng() % 8);
    std::string s;
    for (int w = 0; w < words; ++w) {
      if (w) s += " ";
      s += vocab[rng() % vocab.size()];
    }
    return s;
  };
  std::vector<Dialogue> corpus;
  for (int i = 0; i < dialogue_count; ++i) {
    int a = static_cast<int>(rng() % agent_count);
    int b = static_cast<int>(rng() % agent_count);
    while (b == a) b = static_cast<int>(rng() % agent_count);
    int turns = 2 + static_cast<int>(rng() % 4);
    std::vector<std::pair<std::string, std::string>> utterances;
    for (int t = 0; t < turns; ++t)
      utterances.push_back({t % 2 == 0 ? names[a] : names[b], sentence()});
    int hour = 8 + i;
    std::string time = "2023-02-13 " + std::string(hour < 10 ? "0" : "") +
                       std::to_string(hour) + ":00:00";
    corpus.push_back(
        make_dialogue("r" + std::to_string(i), time, names[a], names[b], utterances));
  }
  return corpus;
}

}  // namespace sdr::test
