#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "ambiscore/common.hpp"

namespace ambiscore {

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;  // pinned to 0 by every pipeline-issued request
  int max_tokens = 16;
};

struct RetryPolicy {
  int max_attempts = 3;
  int initial_backoff_ms = 200;
  int max_backoff_ms = 5000;
  bool jitter = true;
};

struct GatewayConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string chat_model_id = "mock-chat";
  std::string embedding_model_id = "BAAI/bge-small-en-v1.5";
  std::string api_key_env = "AMBISCORE_API_KEY";
  std::string cache_dir = "cache";
  int max_in_flight = 4;
  int timeout_sec = 120;
  std::size_t embed_batch_size = 64;
  RetryPolicy retry;

  static GatewayConfig from_json(const json& j) {
    GatewayConfig c;
    c.base_url = j.value("base_url", c.base_url);
    c.chat_model_id = j.value("chat_model_id", c.chat_model_id);
    c.embedding_model_id = j.value("embedding_model_id", c.embedding_model_id);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.cache_dir = j.value("cache_dir", c.cache_dir);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.timeout_sec = j.value("timeout_sec", c.timeout_sec);
    c.embed_batch_size = j.value("embed_batch_size", c.embed_batch_size);
    c.retry.max_attempts = j.value("max_attempts", c.retry.max_attempts);
    c.retry.initial_backoff_ms =
        j.value("initial_backoff_ms", c.retry.initial_backoff_ms);
    c.retry.max_backoff_ms = j.value("max_backoff_ms", c.retry.max_backoff_ms);
    c.retry.jitter = j.value("jitter", c.retry.jitter);
    return c;
  }

  json to_json() const {
    return json{{"base_url", base_url},
                {"chat_model_id", chat_model_id},
                {"embedding_model_id", embedding_model_id},
                {"api_key_env", api_key_env},
                {"cache_dir", cache_dir},
                {"max_in_flight", max_in_flight},
                {"timeout_sec", timeout_sec},
                {"embed_batch_size", embed_batch_size},
                {"max_attempts", retry.max_attempts},
                {"initial_backoff_ms", retry.initial_backoff_ms},
                {"max_backoff_ms", retry.max_backoff_ms},
                {"jitter", retry.jitter}};
  }
};

struct ChatResult {
  std::string text;
  std::string provenance;  // "network" | "cache"
};

namespace detail {

// Runtime-bounded semaphore (std::counting_semaphore fixes the bound at
// compile time).
class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}
  void acquire() {
    std::unique_lock lock(m_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }
  void release() {
    {
      std::lock_guard lock(m_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  int count_;
};

struct SemaphoreGuard {
  explicit SemaphoreGuard(Semaphore& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  Semaphore& s_;
};

}  // namespace detail

// Content-addressed response cache: one file per entry, keyed by a
// SHA-256 digest of the canonical request serialization. Runs with a
// warm cache are diffable and shippable as fixtures.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  static std::string key_for(const std::string& kind,
                             const std::string& model_id,
                             const json& request) {
    json payload{{"kind", kind}, {"model", model_id}, {"request", request}};
    return sha256_hex(canonical_dump(payload));
  }

  std::optional<std::string> lookup(const std::string& key) const {
    const auto path = entry_path(key);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
      const json entry = json::parse(read_file(path));
      return entry.at("response_text").get<std::string>();
    } catch (const std::exception& e) {
      std::cerr << "warning: unreadable cache entry " << path.string() << ": "
                << e.what() << "\n";
      return std::nullopt;
    }
  }

  // Cache-write failures degrade to a warning; the response is still
  // usable by the caller.
  void store(const std::string& key, const std::string& kind,
             const std::string& model_id, const json& request,
             const std::string& response_text,
             const std::string& provenance) const {
    json entry{{"key", key},
               {"kind", kind},
               {"model_id", model_id},
               {"request", request},
               {"response_text", response_text},
               {"created_at", now_iso8601()},
               {"provenance", provenance}};
    try {
      atomic_write_file(entry_path(key), entry.dump(2) + "\n");
    } catch (const std::exception& e) {
      std::cerr << "warning: cache write failed for " << key << ": "
                << e.what() << "\n";
    }
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& key) const {
    return dir_ / (key + ".json");
  }

  static std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(
        std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::filesystem::path dir_;
};

// Provider-agnostic client for OpenAI-shaped chat-completion and
// embedding endpoints. Identical requests are served from the cache
// without touching the network; transient failures (429/5xx/transport)
// retry with exponential backoff and jitter.
class Gateway {
 public:
  explicit Gateway(GatewayConfig config)
      : config_(std::move(config)),
        cache_(config_.cache_dir),
        in_flight_(std::max(1, config_.max_in_flight)) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()))
      api_key_ = key;
  }

  const GatewayConfig& config() const { return config_; }
  std::uint64_t network_calls() const { return network_calls_.load(); }
  std::uint64_t cache_hits() const { return cache_hits_.load(); }

  ChatResult chat_complete(const ChatRequest& req) {
    return chat_complete(req, config_.retry);
  }

  ChatResult chat_complete(const ChatRequest& req, const RetryPolicy& policy) {
    if (req.messages.empty())
      throw RequestError("chat_complete: empty message list");
    for (const auto& m : req.messages)
      if (m.role.empty() || m.text.empty())
        throw RequestError("chat_complete: empty message role or text");
    if (req.max_tokens <= 0)
      throw RequestError("chat_complete: max_tokens must be positive");

    const json request = chat_request_json(req);
    const std::string key = ResponseCache::key_for("chat", req.model_id, request);
    if (auto hit = cache_.lookup(key)) {
      cache_hits_.fetch_add(1);
      return {*hit, "cache"};
    }

    json body{{"model", req.model_id},
              {"temperature", req.temperature},
              {"max_tokens", req.max_tokens}};
    json messages = json::array();
    for (const auto& m : req.messages)
      messages.push_back({{"role", m.role}, {"content", m.text}});
    body["messages"] = messages;

    const auto [response, mock_served] =
        post_with_retries("/v1/chat/completions", body, policy);
    std::string text;
    try {
      text = response.at("choices").at(0).at("message").at("content")
                 .get<std::string>();
    } catch (const json::exception& e) {
      throw RequestError(std::string("chat_complete: malformed response: ") +
                         e.what());
    }
    cache_.store(key, "chat", req.model_id, request, text,
                 mock_served ? "mock" : "network");
    return {text, "network"};
  }

  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts,
                                        const std::string& model_id) {
    if (texts.empty()) throw RequestError("embed: empty text list");
    for (const auto& t : texts)
      if (t.empty()) throw RequestError("embed: empty text in batch");

    std::vector<std::vector<float>> out(texts.size());
    std::vector<std::size_t> misses;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const std::string key = embed_key(texts[i], model_id);
      if (auto hit = cache_.lookup(key)) {
        cache_hits_.fetch_add(1);
        out[i] = parse_vector(*hit);
      } else {
        misses.push_back(i);
      }
    }

    for (std::size_t start = 0; start < misses.size();
         start += config_.embed_batch_size) {
      const std::size_t end =
          std::min(misses.size(), start + config_.embed_batch_size);
      json input = json::array();
      for (std::size_t i = start; i < end; ++i) input.push_back(texts[misses[i]]);
      json body{{"model", model_id}, {"input", input}};
      const auto [response, mock_served] =
          post_with_retries("/v1/embeddings", body, config_.retry);
      try {
        const auto& data = response.at("data");
        if (data.size() != end - start)
          throw RequestError("embed: response count mismatch");
        for (const auto& item : data) {
          const auto idx = item.at("index").get<std::size_t>();
          if (idx >= end - start) throw RequestError("embed: bad index");
          const std::size_t target = misses[start + idx];
          out[target] = item.at("embedding").get<std::vector<float>>();
          cache_.store(embed_key(texts[target], model_id), "embed", model_id,
                       json{{"input", texts[target]}, {"model", model_id}},
                       canonical_dump(json(out[target])),
                       mock_served ? "mock" : "network");
        }
      } catch (const json::exception& e) {
        throw RequestError(std::string("embed: malformed response: ") + e.what());
      }
    }

    const std::size_t dim = out.empty() ? 0 : out[0].size();
    if (dim == 0) throw RequestError("embed: zero-dimensional embedding");
    for (const auto& v : out)
      if (v.size() != dim)
        throw RequestError("embed: dimension mismatch across batch");
    return out;
  }

  static json chat_request_json(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages)
      messages.push_back({{"role", m.role}, {"text", m.text}});
    return json{{"messages", messages},
                {"model", req.model_id},
                {"temperature", req.temperature},
                {"max_tokens", req.max_tokens}};
  }

  static std::string embed_key(const std::string& text,
                               const std::string& model_id) {
    return ResponseCache::key_for(
        "embed", model_id, json{{"input", text}, {"model", model_id}});
  }

 private:
  static std::vector<float> parse_vector(const std::string& text) {
    return json::parse(text).get<std::vector<float>>();
  }

  // Returns (parsed response body, served-by-mock flag).
  std::pair<json, bool> post_with_retries(const std::string& path,
                                          const json& body,
                                          const RetryPolicy& policy) {
    detail::SemaphoreGuard guard(in_flight_);
    std::vector<std::string> attempts;
    const std::string payload = body.dump();
    int backoff = policy.initial_backoff_ms;
    for (int attempt = 1; attempt <= std::max(1, policy.max_attempts);
         ++attempt) {
      httplib::Client client(config_.base_url);
      client.set_connection_timeout(config_.timeout_sec, 0);
      client.set_read_timeout(config_.timeout_sec, 0);
      httplib::Headers headers;
      if (!api_key_.empty())
        headers.emplace("Authorization", "Bearer " + api_key_);
      network_calls_.fetch_add(1);
      auto res = client.Post(path, headers, payload, "application/json");
      if (!res) {
        attempts.push_back("attempt " + std::to_string(attempt) +
                           ": transport error (" +
                           httplib::to_string(res.error()) + ")");
      } else if (res->status == 429 || res->status >= 500) {
        attempts.push_back("attempt " + std::to_string(attempt) + ": HTTP " +
                           std::to_string(res->status));
      } else if (res->status >= 400) {
        throw RequestError("HTTP " + std::to_string(res->status) + " from " +
                           path + ": " + res->body);
      } else {
        try {
          const bool mock_served = res->has_header("X-Ambiscore-Mock");
          return {json::parse(res->body), mock_served};
        } catch (const json::parse_error& e) {
          throw RequestError(std::string("unparseable response body: ") +
                             e.what());
        }
      }
      if (attempt < policy.max_attempts) {
        int sleep_ms = backoff;
        if (policy.jitter) sleep_ms += jitter_ms(backoff);
        std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
        backoff = std::min(policy.max_backoff_ms, backoff * 2);
      }
    }
    std::string summary = "exhausted " + std::to_string(policy.max_attempts) +
                          " attempts against " + config_.base_url + path;
    throw TransportError(summary, attempts);
  }

  int jitter_ms(int backoff) {
    std::lock_guard lock(rng_mutex_);
    return static_cast<int>(rng_() % static_cast<std::uint64_t>(
                                         std::max(1, backoff / 2 + 1)));
  }

  GatewayConfig config_;
  ResponseCache cache_;
  detail::Semaphore in_flight_;
  std::string api_key_;
  std::atomic<std::uint64_t> network_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::mutex rng_mutex_;
  std::mt19937_64 rng_{std::random_device{}()};
};

}  // namespace ambiscore
