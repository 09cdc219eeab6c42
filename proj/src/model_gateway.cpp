#include "sdr/model_gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "sdr/error.hpp"
#include "sdr/log.hpp"
#include "sdr/text.hpp"

namespace sdr {

void validate_verdict(const NliVerdict& v) {
  for (double p : {v.entailment, v.neutral, v.contradiction})
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("NLI probability out of [0,1]");
  double sum = v.entailment + v.neutral + v.contradiction;
  if (std::fabs(sum - 1.0) > 1e-4)
    throw ValidationError("NLI probabilities sum to " + std::to_string(sum));
}

namespace {

BackendKind kind_from_string(const std::string& s) {
  if (s == "mock") return BackendKind::mock;
  if (s == "http") return BackendKind::http;
  throw ConfigError("unknown backend kind: '" + s + "'");
}

std::string kind_to_string(BackendKind k) {
  return k == BackendKind::mock ? "mock" : "http";
}

}  // namespace

BackendConfig BackendConfig::from_json(const nlohmann::json& j) {
  BackendConfig cfg;
  cfg.kind = kind_from_string(j.value("kind", "mock"));
  cfg.endpoint_url = j.value("endpoint_url", "");
  cfg.api_key_env_var = j.value("api_key_env_var", "");
  cfg.model_name = j.value("model_name", "");
  cfg.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000));
  cfg.max_retries = j.value("max_retries", 2);
  cfg.script_path = j.value("script_path", "");
  cfg.requests_per_second = j.value("requests_per_second", 0.0);
  if (cfg.kind == BackendKind::http && (cfg.endpoint_url.empty() || cfg.model_name.empty()))
    throw ConfigError("http backend requires endpoint_url and model_name");
  return cfg;
}

nlohmann::json BackendConfig::to_json() const {
  nlohmann::json j;
  j["kind"] = kind_to_string(kind);
  if (kind == BackendKind::http) {
    j["endpoint_url"] = endpoint_url;
    j["api_key_env_var"] = api_key_env_var;
    j["model_name"] = model_name;
  } else if (!script_path.empty()) {
    j["script_path"] = script_path.string();
  }
  j["timeout_ms"] = static_cast<int>(timeout.count());
  j["max_retries"] = max_retries;
  j["requests_per_second"] = requests_per_second;
  return j;
}

GatewayConfig GatewayConfig::from_json(const nlohmann::json& j) {
  GatewayConfig cfg;
  if (j.contains("chat")) cfg.chat = BackendConfig::from_json(j.at("chat"));
  if (j.contains("embedding")) cfg.embedding = BackendConfig::from_json(j.at("embedding"));
  if (j.contains("nli")) cfg.nli = BackendConfig::from_json(j.at("nli"));
  if (j.contains("summarizer")) cfg.summarizer = BackendConfig::from_json(j.at("summarizer"));
  return cfg;
}

GatewayConfig GatewayConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open backend config: " + path.string());
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return from_json(nlohmann::json::parse(body, nullptr, true, /*ignore_comments=*/true));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("backend config " + path.string() + ": " + e.what());
  }
}

nlohmann::json GatewayConfig::to_json() const {
  return {{"chat", chat.to_json()},
          {"embedding", embedding.to_json()},
          {"nli", nli.to_json()},
          {"summarizer", summarizer.to_json()}};
}

std::string GatewayConfig::identity() const {
  std::string id = "chat=" + kind_to_string(chat.kind);
  if (chat.kind == BackendKind::http) id += ":" + chat.model_name;
  id += ",embedding=" + kind_to_string(embedding.kind);
  if (embedding.kind == BackendKind::http) id += ":" + embedding.model_name;
  id += ",nli=" + kind_to_string(nli.kind);
  id += ",summarizer=" + kind_to_string(summarizer.kind);
  return id;
}

// ---------------------------------------------------------------------------
// Mocks

MockChatBackend::MockChatBackend(const std::filesystem::path& script_path) {
  std::ifstream in(script_path);
  if (!in) throw ConfigError("cannot open chat script: " + script_path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      add_rule(j.at("marker").get<std::string>(),
               j.at("responses").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("chat script " + script_path.string() + ":" + std::to_string(line_no) +
                        ": " + e.what());
    }
  }
}

void MockChatBackend::add_rule(const std::string& marker_regex,
                               std::vector<std::string> responses) {
  if (responses.empty()) throw ConfigError("script rule '" + marker_regex + "' has no responses");
  Rule r;
  r.marker = marker_regex;
  r.re = std::regex(marker_regex);
  r.responses = std::move(responses);
  rules_.push_back(std::move(r));
}

std::string MockChatBackend::chat(const ChatRequest& req) {
  std::lock_guard<std::mutex> lock(mutex_);
  ++calls_;
  if (req.prompt.empty()) throw ValidationError("chat prompt is empty");
  for (auto& rule : rules_) {
    if (std::regex_search(req.prompt, rule.re)) {
      size_t idx = rule.next < rule.responses.size() ? rule.next : rule.responses.size() - 1;
      ++rule.next;
      return rule.responses[idx];
    }
  }
  throw Error("mock chat: no script rule matches prompt (first 80 chars: '" +
              req.prompt.substr(0, 80) + "')");
}

std::vector<double> MockEmbeddingBackend::embed(const std::string& text) {
  if (text.empty()) throw ValidationError("embed: text is empty");
  auto tokens = tokenize_alnum(text);
  if (tokens.empty()) throw ValidationError("embed: text has no tokens");
  std::vector<double> v(dim_, 0.0);
  for (const auto& t : tokens) v[fnv1a64(t) % dim_] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

void MockNliBackend::register_pair(const std::string& premise, const std::string& hypothesis,
                                   NliVerdict v) {
  validate_verdict(v);
  std::lock_guard<std::mutex> lock(mutex_);
  table_[{premise, hypothesis}] = v;
}

NliVerdict MockNliBackend::score(const std::string& premise, const std::string& hypothesis) {
  std::lock_guard<std::mutex> lock(mutex_);
  ++calls_;
  if (premise.empty() || hypothesis.empty())
    throw ValidationError("nli: premise and hypothesis must be non-empty");
  auto it = table_.find({premise, hypothesis});
  if (it != table_.end()) return it->second;
  if (premise == hypothesis) return {0.9, 0.08, 0.02};
  return {0.1, 0.8, 0.1};
}

std::string MockSummarizerBackend::summarize(const Dialogue& d) {
  if (d.utterances.empty()) throw ValidationError("summarize: dialogue has no utterances");
  std::string out;
  for (const auto& u : d.utterances) {
    auto pos = u.text.find('.');
    std::string clause = pos == std::string::npos ? u.text : u.text.substr(0, pos + 1);
    if (!out.empty()) out += " ";
    out += trim(clause);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rate limiting

RateLimiter::RateLimiter(double requests_per_second)
    : rate_(requests_per_second), tokens_(requests_per_second > 0 ? 1.0 : 0.0),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  if (rate_ <= 0) return;
  std::unique_lock<std::mutex> lock(mutex_);
  for (;;) {
    auto now = std::chrono::steady_clock::now();
    double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(1.0, tokens_ + elapsed * rate_);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    double wait_s = (1.0 - tokens_) / rate_;
    lock.unlock();
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
    lock.lock();
  }
}

// ---------------------------------------------------------------------------
// HTTP backends

namespace {

std::string read_api_key(const std::string& env_var) {
  if (env_var.empty()) return "";
  const char* v = std::getenv(env_var.c_str());
  return v ? v : "";
}

// Splits "http://host:port/some/path" into (scheme://host:port, /some/path).
std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint_url missing scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

nlohmann::json post_json(const BackendConfig& cfg, const std::string& api_key,
                         RateLimiter* limiter, const nlohmann::json& body) {
  auto [base, path] = split_url(cfg.endpoint_url);
  int attempts = cfg.max_retries + 1;
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (limiter) limiter->acquire();
    httplib::Client client(base);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout));
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status >= 400) {
      throw TransportError("HTTP " + std::to_string(res->status) + " from " + cfg.endpoint_url +
                           ": " + res->body.substr(0, 200));
    } else {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("invalid JSON from ") + cfg.endpoint_url + ": " +
                             e.what());
      }
    }
    if (attempt + 1 < attempts)
      std::this_thread::sleep_for(std::chrono::milliseconds(100 * (attempt + 1)));
  }
  throw TransportError("request to " + cfg.endpoint_url + " failed after " +
                       std::to_string(attempts) + " attempt(s): " + last_error);
}

}  // namespace

HttpChatBackend::HttpChatBackend(const BackendConfig& cfg)
    : cfg_(cfg), api_key_(read_api_key(cfg.api_key_env_var)),
      limiter_(std::make_unique<RateLimiter>(cfg.requests_per_second)) {}

std::string HttpChatBackend::chat(const ChatRequest& req) {
  if (req.prompt.empty()) throw ValidationError("chat prompt is empty");
  nlohmann::json body = {
      {"model", cfg_.model_name},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
      {"temperature", req.temperature},
      {"frequency_penalty", req.frequency_penalty},
      {"presence_penalty", req.presence_penalty},
  };
  auto j = post_json(cfg_, api_key_, limiter_.get(), body);
  try {
    std::string content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (content.empty()) throw TransportError("empty completion from " + cfg_.endpoint_url);
    return content;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected chat response shape: ") + e.what());
  }
}

HttpEmbeddingBackend::HttpEmbeddingBackend(const BackendConfig& cfg)
    : cfg_(cfg), api_key_(read_api_key(cfg.api_key_env_var)),
      limiter_(std::make_unique<RateLimiter>(cfg.requests_per_second)) {}

std::vector<double> HttpEmbeddingBackend::embed(const std::string& text) {
  if (text.empty()) throw ValidationError("embed: text is empty");
  nlohmann::json body = {{"model", cfg_.model_name}, {"input", text}};
  auto j = post_json(cfg_, api_key_, limiter_.get(), body);
  std::vector<double> v;
  try {
    v = j.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected embedding response shape: ") + e.what());
  }
  if (v.empty()) throw TransportError("empty embedding from " + cfg_.endpoint_url);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm <= 0.0) throw TransportError("zero-norm embedding from " + cfg_.endpoint_url);
  for (double& x : v) x /= norm;
  dim_ = v.size();
  return v;
}

HttpNliBackend::HttpNliBackend(const BackendConfig& cfg)
    : cfg_(cfg), api_key_(read_api_key(cfg.api_key_env_var)),
      limiter_(std::make_unique<RateLimiter>(cfg.requests_per_second)) {}

NliVerdict HttpNliBackend::score(const std::string& premise, const std::string& hypothesis) {
  if (premise.empty() || hypothesis.empty())
    throw ValidationError("nli: premise and hypothesis must be non-empty");
  nlohmann::json body = {{"premise", premise}, {"hypothesis", hypothesis}};
  auto j = post_json(cfg_, api_key_, limiter_.get(), body);
  NliVerdict v;
  try {
    v.entailment = j.at("entailment").get<double>();
    v.neutral = j.at("neutral").get<double>();
    v.contradiction = j.at("contradiction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected NLI response shape: ") + e.what());
  }
  validate_verdict(v);
  return v;
}

std::string ChatSummarizerBackend::summarize(const Dialogue& d) {
  if (d.utterances.empty()) throw ValidationError("summarize: dialogue has no utterances");
  ChatRequest req;
  req.prompt = "Summarize the following dialogue in one or two sentences, focusing on its "
               "topics:\n\n" +
               render_dialogue_text(d) + "\nSummary:";
  req.temperature = 0.0;
  std::string out = chat_->chat(req);
  if (out.empty()) throw TransportError("empty summary");
  return out;
}

// ---------------------------------------------------------------------------
// Gateway

ModelGateway::ModelGateway(std::shared_ptr<ChatBackend> chat,
                           std::shared_ptr<EmbeddingBackend> embedding,
                           std::shared_ptr<NliBackend> nli,
                           std::shared_ptr<SummarizerBackend> summarizer)
    : chat_(std::move(chat)), embedding_(std::move(embedding)), nli_(std::move(nli)),
      summarizer_(std::move(summarizer)) {}

std::optional<nlohmann::json> extract_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    if (j.is_object() || j.is_array()) return j;
  } catch (const nlohmann::json::exception&) {
  }
  for (char open : {'{', '['}) {
    char close = open == '{' ? '}' : ']';
    auto start = text.find(open);
    if (start == std::string::npos) continue;
    int depth = 0;
    bool in_string = false;
    for (size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (c == '\\') ++i;
        else if (c == '"') in_string = false;
      } else if (c == '"') {
        in_string = true;
      } else if (c == open) {
        ++depth;
      } else if (c == close) {
        if (--depth == 0) {
          try {
            return nlohmann::json::parse(text.substr(start, i - start + 1));
          } catch (const nlohmann::json::exception&) {
            break;
          }
        }
      }
    }
  }
  return std::nullopt;
}

std::string ModelGateway::chat(const ChatRequest& req) {
  if (req.prompt.empty()) throw ValidationError("chat prompt is empty");
  ++counters_.chat_calls;
  std::string text = chat_->chat(req);
  if (text.empty()) throw TransportError("empty completion");
  if (!req.expect_json) return text;
  if (extract_json(text)) return text;
  // One repair attempt, then a structured failure.
  ++counters_.json_repairs;
  ChatRequest repair = req;
  repair.prompt += "\n\nOutput valid JSON only.";
  std::string repaired = chat_->chat(repair);
  if (extract_json(repaired)) return repaired;
  throw ParseError("completion is not valid JSON after repair attempt: '" +
                   repaired.substr(0, 120) + "'");
}

std::vector<double> ModelGateway::embed(const std::string& text) {
  if (text.empty()) throw ValidationError("embed: text is empty");
  ++counters_.embed_calls;
  auto v = embedding_->embed(text);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (std::fabs(std::sqrt(norm) - 1.0) > 1e-6)
    throw Error("embedding backend returned a non-unit vector");
  return v;
}

NliVerdict ModelGateway::nli(const std::string& premise, const std::string& hypothesis) {
  ++counters_.nli_calls;
  auto v = nli_->score(premise, hypothesis);
  validate_verdict(v);
  return v;
}

std::string ModelGateway::summarize(const Dialogue& d) {
  ++counters_.summarize_calls;
  return summarizer_->summarize(d);
}

GatewayFactory::GatewayFactory(GatewayConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.chat.kind == BackendKind::http)
    shared_chat_ = std::make_shared<HttpChatBackend>(cfg_.chat);
  if (cfg_.embedding.kind == BackendKind::http)
    shared_embedding_ = std::make_shared<HttpEmbeddingBackend>(cfg_.embedding);
  else
    shared_embedding_ = std::make_shared<MockEmbeddingBackend>();
  if (cfg_.nli.kind == BackendKind::http)
    shared_nli_ = std::make_shared<HttpNliBackend>(cfg_.nli);
  else
    shared_nli_ = std::make_shared<MockNliBackend>();
  if (cfg_.summarizer.kind == BackendKind::http) {
    auto chat = std::make_shared<HttpChatBackend>(cfg_.summarizer);
    shared_summarizer_ = std::make_shared<ChatSummarizerBackend>(chat);
  } else {
    shared_summarizer_ = std::make_shared<MockSummarizerBackend>();
  }
}

std::unique_ptr<ModelGateway> GatewayFactory::make() {
  std::shared_ptr<ChatBackend> chat = shared_chat_;
  if (!chat) {
    // Fresh mock per gateway so scripted response queues are isolated.
    if (cfg_.chat.script_path.empty())
      throw ConfigError("mock chat backend requires script_path");
    chat = std::make_shared<MockChatBackend>(cfg_.chat.script_path);
  }
  return std::make_unique<ModelGateway>(chat, shared_embedding_, shared_nli_,
                                        shared_summarizer_);
}

}  // namespace sdr
