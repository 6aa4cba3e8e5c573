#pragma once

#include <httplib.h>

#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <vector>

namespace maadvisor::testing {

/// Local chat-completions endpoint that replays scripted reply contents and
/// records every request body. Replies past the end of the script repeat the
/// last entry. An entry of "<http 500>" answers with a server error.
class MockLlmServer {
 public:
  explicit MockLlmServer(std::vector<std::string> script) : script_(std::move(script)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::string content;
      {
        std::lock_guard lock(mutex_);
        bodies_.push_back(nlohmann::json::parse(req.body, nullptr, false));
        auth_.push_back(req.get_header_value("Authorization"));
        const auto i = std::min(bodies_.size() - 1, script_.size() - 1);
        content = script_.empty() ? std::string() : script_[i];
      }
      if (content == "<http 500>") {
        res.status = 500;
        return;
      }
      nlohmann::json reply{
          {"id", "mock"},
          {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockLlmServer() {
    server_.stop();
    thread_.join();
  }

  MockLlmServer(const MockLlmServer&) = delete;
  MockLlmServer& operator=(const MockLlmServer&) = delete;

  [[nodiscard]] std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1";
  }

  [[nodiscard]] std::vector<nlohmann::json> bodies() const {
    std::lock_guard lock(mutex_);
    return bodies_;
  }

  [[nodiscard]] std::vector<std::string> authorization_headers() const {
    std::lock_guard lock(mutex_);
    return auth_;
  }

 private:
  std::vector<std::string> script_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> bodies_;
  std::vector<std::string> auth_;
};

}  // namespace maadvisor::testing
