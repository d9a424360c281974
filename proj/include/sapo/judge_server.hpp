#pragma once

// The judge exchange over loopback TCP, using the swarm frame format.
//
//   node  -> judge  {"type":"eval_request","node_id":..,"normalized_round":..}
//   judge -> node   {"type":"question","prompt":..}
//   node  -> judge  {"type":"answer","text":..}
//   judge -> node   {"type":"verdict","score":..}
//
// A node that does not answer within the timeout gets a timeout entry in the
// judge log and no verdict.

#include <atomic>
#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <thread>

#include "sapo/framing.hpp"
#include "sapo/judge.hpp"

namespace sapo::judge {

class JudgeServer {
 public:
  JudgeServer(Judge& judge, std::uint16_t port = 0,
              std::chrono::milliseconds answer_timeout = std::chrono::milliseconds(2000));
  ~JudgeServer();
  JudgeServer(const JudgeServer&) = delete;
  JudgeServer& operator=(const JudgeServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  void serve();
  void handle(const net::Socket& conn);

  Judge& judge_;
  std::chrono::milliseconds timeout_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

/// Runs one exchange against a judge server. Returns the verdict score, or
/// nullopt if the exchange broke off (including a judge-side timeout).
std::optional<double> request_evaluation(const std::string& host, std::uint16_t port, const std::string& node_id,
                                         std::uint64_t normalized_round,
                                         const std::function<std::string(const std::string&)>& answer,
                                         std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

}  // namespace sapo::judge
