#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdr/dialogue.hpp"

namespace sdr {

struct ChatRequest {
  std::string prompt;
  double temperature = 0.7;
  int max_output_tokens = 512;
  double frequency_penalty = 0.0;
  double presence_penalty = 0.0;
  std::optional<std::int64_t> seed;  // honored by mock backends only
  bool expect_json = false;
};

struct NliVerdict {
  double entailment = 0.0;
  double neutral = 0.0;
  double contradiction = 0.0;
};

// Throws ValidationError unless each probability is in [0,1] and they sum
// to 1 within 1e-4.
void validate_verdict(const NliVerdict& v);

enum class BackendKind { mock, http };

struct BackendConfig {
  BackendKind kind = BackendKind::mock;
  std::string endpoint_url;      // http only
  std::string api_key_env_var;   // http only
  std::string model_name;        // http only
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::filesystem::path script_path;  // mock chat only
  double requests_per_second = 0.0;   // 0 = unlimited

  static BackendConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Full gateway configuration: one backend per capability. Missing sections
// default to mocks.
struct GatewayConfig {
  BackendConfig chat;
  BackendConfig embedding;
  BackendConfig nli;
  BackendConfig summarizer;

  static GatewayConfig from_json(const nlohmann::json& j);
  static GatewayConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  std::string identity() const;  // short human-readable backend description
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string chat(const ChatRequest& req) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<double> embed(const std::string& text) = 0;
  virtual size_t dimension() const = 0;
};

class NliBackend {
 public:
  virtual ~NliBackend() = default;
  virtual NliVerdict score(const std::string& premise, const std::string& hypothesis) = 0;
};

class SummarizerBackend {
 public:
  virtual ~SummarizerBackend() = default;
  virtual std::string summarize(const Dialogue& d) = 0;
};

// Script-driven chat mock. Rules are matched in order; the first rule whose
// regex matches the prompt answers with the next queued response (the last
// response repeats once the queue is exhausted). Script file: JSONL of
// {"marker": <regex>, "responses": [<string>...]}.
class MockChatBackend : public ChatBackend {
 public:
  MockChatBackend() = default;
  explicit MockChatBackend(const std::filesystem::path& script_path);

  void add_rule(const std::string& marker_regex, std::vector<std::string> responses);
  std::string chat(const ChatRequest& req) override;
  int calls() const { return calls_; }

 private:
  struct Rule {
    std::string marker;
    std::regex re;
    std::vector<std::string> responses;
    size_t next = 0;
  };
  std::vector<Rule> rules_;
  int calls_ = 0;
  std::mutex mutex_;
};

// Deterministic hashed bag-of-words embedder: lowercase alphanumeric
// tokens, each hashed into one of `dim` coordinates, counted, then
// L2-normalized.
class MockEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit MockEmbeddingBackend(size_t dim = 1024) : dim_(dim) {}
  std::vector<double> embed(const std::string& text) override;
  size_t dimension() const override { return dim_; }

 private:
  size_t dim_;
};

// Table-driven NLI mock. Unregistered pairs return (0.1, 0.8, 0.1);
// identical premise/hypothesis returns (0.9, 0.08, 0.02).
class MockNliBackend : public NliBackend {
 public:
  void register_pair(const std::string& premise, const std::string& hypothesis, NliVerdict v);
  NliVerdict score(const std::string& premise, const std::string& hypothesis) override;
  int calls() const { return calls_; }

 private:
  std::map<std::pair<std::string, std::string>, NliVerdict> table_;
  int calls_ = 0;
  std::mutex mutex_;
};

// Concatenates the first clause (text up to and including the first
// period) of each utterance.
class MockSummarizerBackend : public SummarizerBackend {
 public:
  std::string summarize(const Dialogue& d) override;
};

class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second);
  void acquire();

 private:
  double rate_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

// Chat-completions HTTP client: POST {model, messages, temperature,
// frequency_penalty, presence_penalty} -> choices[0].message.content.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(const BackendConfig& cfg);
  std::string chat(const ChatRequest& req) override;

 private:
  BackendConfig cfg_;
  std::string api_key_;
  std::unique_ptr<RateLimiter> limiter_;
};

// Embeddings HTTP client: POST {model, input} -> data[0].embedding.
// Returned vectors are L2-normalized.
class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(const BackendConfig& cfg);
  std::vector<double> embed(const std::string& text) override;
  size_t dimension() const override { return dim_; }

 private:
  BackendConfig cfg_;
  std::string api_key_;
  std::unique_ptr<RateLimiter> limiter_;
  size_t dim_ = 0;  // learned from the first response
};

// POST {premise, hypothesis} -> {entailment, neutral, contradiction}.
class HttpNliBackend : public NliBackend {
 public:
  explicit HttpNliBackend(const BackendConfig& cfg);
  NliVerdict score(const std::string& premise, const std::string& hypothesis) override;

 private:
  BackendConfig cfg_;
  std::string api_key_;
  std::unique_ptr<RateLimiter> limiter_;
};

// Summarization routed through a chat backend.
class ChatSummarizerBackend : public SummarizerBackend {
 public:
  explicit ChatSummarizerBackend(std::shared_ptr<ChatBackend> chat) : chat_(std::move(chat)) {}
  std::string summarize(const Dialogue& d) override;

 private:
  std::shared_ptr<ChatBackend> chat_;
};

struct GatewayCounters {
  int chat_calls = 0;
  int embed_calls = 0;
  int nli_calls = 0;
  int summarize_calls = 0;
  int json_repairs = 0;
};

// Facade over the four capabilities. chat() with expect_json guarantees the
// returned text parses as a JSON object or array, issuing exactly one
// repair re-prompt before raising ParseError. Counters count gateway-level
// operations; the repair re-prompt is tracked separately.
class ModelGateway {
 public:
  ModelGateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embedding,
               std::shared_ptr<NliBackend> nli, std::shared_ptr<SummarizerBackend> summarizer);

  std::string chat(const ChatRequest& req);
  std::vector<double> embed(const std::string& text);
  NliVerdict nli(const std::string& premise, const std::string& hypothesis);
  std::string summarize(const Dialogue& d);

  const GatewayCounters& counters() const { return counters_; }
  void reset_counters() { counters_ = {}; }

  ChatBackend& chat_backend() { return *chat_; }

 private:
  std::shared_ptr<ChatBackend> chat_;
  std::shared_ptr<EmbeddingBackend> embedding_;
  std::shared_ptr<NliBackend> nli_;
  std::shared_ptr<SummarizerBackend> summarizer_;
  GatewayCounters counters_;
};

// Builds a gateway from config. Mock backends get fresh state per call, so
// every gateway owns its own script queues; http backends are shared across
// gateways created from the same factory.
class GatewayFactory {
 public:
  explicit GatewayFactory(GatewayConfig cfg);
  std::unique_ptr<ModelGateway> make();
  const GatewayConfig& config() const { return cfg_; }

 private:
  GatewayConfig cfg_;
  std::shared_ptr<ChatBackend> shared_chat_;
  std::shared_ptr<EmbeddingBackend> shared_embedding_;
  std::shared_ptr<NliBackend> shared_nli_;
  std::shared_ptr<SummarizerBackend> shared_summarizer_;
};

// Leniently pulls a JSON value out of completion text: direct parse, then
// the first balanced {...} or [...] span. Returns nullopt when nothing
// parses.
std::optional<nlohmann::json> extract_json(const std::string& text);

}  // namespace sdr
