#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "ambiscore/common.hpp"
#include "ambiscore/corpus.hpp"

namespace ambiscore {

// Scriptable behavior table for the bundled mock endpoint. Chat replies
// resolve in order: failure injection, then the ordered reply queue,
// then the first substring-match rule, then the default reply.
struct MockRule {
  std::vector<std::string> contains_all;
  std::string reply;
};

struct MockScript {
  std::size_t embedding_dimension = 32;
  std::string default_reply = "3";
  std::vector<std::string> replies;
  std::vector<MockRule> rules;
  int fail_first_n = 0;
  int fail_status = 500;

  static MockScript from_json(const json& j) {
    MockScript s;
    s.embedding_dimension =
        j.value("embedding_dimension", s.embedding_dimension);
    s.default_reply = j.value("default_reply", s.default_reply);
    if (j.contains("replies"))
      s.replies = j.at("replies").get<std::vector<std::string>>();
    if (j.contains("rules")) {
      for (const auto& r : j.at("rules")) {
        MockRule rule;
        rule.contains_all =
            r.at("contains_all").get<std::vector<std::string>>();
        rule.reply = r.at("reply").get<std::string>();
        s.rules.push_back(std::move(rule));
      }
    }
    s.fail_first_n = j.value("fail_first_n", s.fail_first_n);
    s.fail_status = j.value("fail_status", s.fail_status);
    return s;
  }

  json to_json() const {
    json rules_json = json::array();
    for (const auto& r : rules)
      rules_json.push_back(
          {{"contains_all", r.contains_all}, {"reply", r.reply}});
    return json{{"embedding_dimension", embedding_dimension},
                {"default_reply", default_reply},
                {"replies", replies},
                {"rules", rules_json},
                {"fail_first_n", fail_first_n},
                {"fail_status", fail_status}};
  }
};

// Deterministic pseudo-embedding: unit vector seeded by the text digest.
// Identical text always embeds identically, so cached pipeline runs are
// byte-reproducible.
inline std::vector<float> mock_embedding(const std::string& text,
                                         std::size_t dimension) {
  const std::string digest = sha256_hex(text);
  std::uint64_t seed = 0;
  for (int i = 0; i < 16; ++i)
    seed = seed * 16 + static_cast<std::uint64_t>(
                           digest[i] <= '9' ? digest[i] - '0'
                                            : digest[i] - 'a' + 10);
  std::mt19937_64 rng(seed);
  std::vector<float> v(dimension);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (std::size_t i = 0; i < dimension; ++i) {
      // 53-bit uniform in [-1, 1); avoids implementation-defined
      // distribution adapters.
      const double u =
          static_cast<double>(rng() >> 11) / 9007199254740992.0 * 2.0 - 1.0;
      v[i] = static_cast<float>(u);
      norm2 += u * u;
    }
  } while (norm2 < 1e-12);
  const auto inv = static_cast<float>(1.0 / std::sqrt(norm2));
  for (auto& x : v) x *= inv;
  return v;
}

// Script whose chat replies echo each labeled instance's rounded gold
// mean, matched on sentence plus quoted judged meaning.
inline MockScript oracle_mock_script(const std::vector<StoryInstance>& instances,
                                     std::size_t embedding_dimension = 32) {
  MockScript s;
  s.embedding_dimension = embedding_dimension;
  for (const auto& inst : instances) {
    if (!inst.labeled()) continue;
    const auto stats = annotation_stats(inst.annotations);
    MockRule rule;
    rule.contains_all = {inst.sentence, "\"" + inst.judged_meaning + "\""};
    rule.reply = std::to_string(round_score(stats.mean));
    s.rules.push_back(std::move(rule));
  }
  return s;
}

// In-process OpenAI-shaped endpoint for offline testing. Binds an
// ephemeral loopback port; responses carry an X-Ambiscore-Mock marker.
class MockServer {
 public:
  explicit MockServer(MockScript script) : script_(std::move(script)) {
    fail_remaining_ = script_.fail_first_n;
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   handle_chat(req, res);
                 });
    server_.Post("/v1/embeddings",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   handle_embeddings(req, res);
                 });
    server_.Get("/__mock/stats",
                [this](const httplib::Request&, httplib::Response& res) {
                  json stats{{"chat_calls", chat_calls_.load()},
                             {"embed_calls", embed_calls_.load()},
                             {"failures_injected",
                              script_.fail_first_n - fail_remaining_.load()}};
                  res.set_header("X-Ambiscore-Mock", "1");
                  res.set_content(stats.dump(), "application/json");
                });
  }

  ~MockServer() { stop(); }

  // Binds 127.0.0.1 on the given port (0 picks an ephemeral one) and
  // serves until stop().
  void start(int port = 0) {
    if (running_) return;
    if (port == 0) {
      port_ = server_.bind_to_any_port("127.0.0.1");
      if (port_ <= 0) throw Error("mock server: failed to bind a port");
    } else {
      if (!server_.bind_to_port("127.0.0.1", port))
        throw Error("mock server: failed to bind port " + std::to_string(port));
      port_ = port;
    }
    running_ = true;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (!running_) return;
    server_.stop();
    if (thread_.joinable()) thread_.join();
    running_ = false;
  }

  int port() const { return port_; }
  std::string base_url() const {
    return "http://127.0.0.1:" + std::to_string(port_);
  }
  std::uint64_t chat_calls() const { return chat_calls_.load(); }
  std::uint64_t embed_calls() const { return embed_calls_.load(); }

 private:
  void handle_chat(const httplib::Request& req, httplib::Response& res) {
    chat_calls_.fetch_add(1);
    res.set_header("X-Ambiscore-Mock", "1");
    if (inject_failure(res)) return;

    std::string prompt;
    try {
      const json body = json::parse(req.body);
      for (const auto& m : body.at("messages")) {
        prompt += m.at("content").get<std::string>();
        prompt += '\n';
      }
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }

    const std::string reply = resolve_reply(prompt);
    json out{{"object", "chat.completion"},
             {"model", "mock"},
             {"choices",
              json::array({json{{"index", 0},
                                {"message", {{"role", "assistant"},
                                             {"content", reply}}},
                                {"finish_reason", "stop"}}})}};
    res.set_content(out.dump(), "application/json");
  }

  void handle_embeddings(const httplib::Request& req, httplib::Response& res) {
    embed_calls_.fetch_add(1);
    res.set_header("X-Ambiscore-Mock", "1");
    if (inject_failure(res)) return;

    json data = json::array();
    try {
      const json body = json::parse(req.body);
      const auto& input = body.at("input");
      std::size_t index = 0;
      auto add = [&](const std::string& text) {
        data.push_back({{"object", "embedding"},
                        {"index", index++},
                        {"embedding",
                         mock_embedding(text, script_.embedding_dimension)}});
      };
      if (input.is_string())
        add(input.get<std::string>());
      else
        for (const auto& t : input) add(t.get<std::string>());
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    json out{{"object", "list"}, {"data", data}, {"model", "mock"}};
    res.set_content(out.dump(), "application/json");
  }

  bool inject_failure(httplib::Response& res) {
    int remaining = fail_remaining_.load();
    while (remaining > 0) {
      if (fail_remaining_.compare_exchange_weak(remaining, remaining - 1)) {
        res.status = script_.fail_status;
        res.set_content(json{{"error", "scripted failure"}}.dump(),
                        "application/json");
        return true;
      }
    }
    return false;
  }

  std::string resolve_reply(const std::string& prompt) {
    {
      std::lock_guard lock(reply_mutex_);
      if (reply_index_ < script_.replies.size())
        return script_.replies[reply_index_++];
    }
    for (const auto& rule : script_.rules) {
      bool all = true;
      for (const auto& needle : rule.contains_all) {
        if (prompt.find(needle) == std::string::npos) {
          all = false;
          break;
        }
      }
      if (all) return rule.reply;
    }
    return script_.default_reply;
  }

  MockScript script_;
  httplib::Server server_;
  std::thread thread_;
  bool running_ = false;
  int port_ = 0;
  std::atomic<std::uint64_t> chat_calls_{0};
  std::atomic<std::uint64_t> embed_calls_{0};
  std::atomic<int> fail_remaining_{0};
  std::mutex reply_mutex_;
  std::size_t reply_index_ = 0;
};

}  // namespace ambiscore
