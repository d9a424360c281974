#include "sapo/judge_server.hpp"

#include "json.hpp"

namespace sapo::judge {

using json = nlohmann::json;

namespace {

std::optional<json> read_message(const net::Socket& s, std::string_view type) {
  const auto frame = net::read_frame(s);
  if (!frame) return std::nullopt;
  auto j = json::parse(*frame, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("type", "") != type) return std::nullopt;
  return j;
}

bool send_message(const net::Socket& s, const json& j) {
  return net::write_frame(s, j.dump(-1, ' ', false, json::error_handler_t::replace));
}

// The remote node as seen from inside the server.
class RemoteHandle final : public NodeHandle {
 public:
  RemoteHandle(const net::Socket& conn, std::string id, std::uint64_t round)
      : conn_(conn), id_(std::move(id)), round_(round) {}
  std::string node_id() const override { return id_; }
  std::uint64_t completed_rounds() const override { return round_; }
  std::optional<std::string> answer(const std::string& prompt) override {
    if (!send_message(conn_, {{"type", "question"}, {"prompt", prompt}})) return std::nullopt;
    const auto reply = read_message(conn_, "answer");
    if (!reply || !reply->contains("text") || !(*reply)["text"].is_string()) return std::nullopt;
    return (*reply)["text"].get<std::string>();
  }

 private:
  const net::Socket& conn_;
  std::string id_;
  std::uint64_t round_;
};

}  // namespace

JudgeServer::JudgeServer(Judge& judge, std::uint16_t port, std::chrono::milliseconds answer_timeout)
    : judge_(judge), timeout_(answer_timeout) {
  listener_ = net::listen_loopback(port);
  port_ = net::local_port(listener_);
  thread_ = std::thread([this] { serve(); });
}

JudgeServer::~JudgeServer() { stop(); }

void JudgeServer::stop() {
  if (stopping_.exchange(true)) return;
  if (thread_.joinable()) thread_.join();
  listener_.close();
}

void JudgeServer::serve() {
  while (!stopping_.load()) {
    auto conn = net::accept_for(listener_, std::chrono::milliseconds(50));
    if (!conn.valid()) continue;
    net::set_io_timeout(conn, timeout_);
    handle(conn);
  }
}

void JudgeServer::handle(const net::Socket& conn) {
  const auto request = read_message(conn, "eval_request");
  if (!request) return;
  const auto id = request->value("node_id", std::string());
  const auto round_it = request->find("normalized_round");
  if (id.empty() || round_it == request->end() || !round_it->is_number_unsigned()) return;
  RemoteHandle node(conn, id, round_it->get<std::uint64_t>());
  try {
    const auto rec = judge_.evaluate(node);
    if (rec.score) send_message(conn, {{"type", "verdict"}, {"score", *rec.score}});
  } catch (const JudgeError& e) {
    send_message(conn, {{"type", "error"}, {"message", e.what()}});
  }
}

std::optional<double> request_evaluation(const std::string& host, std::uint16_t port, const std::string& node_id,
                                         std::uint64_t normalized_round,
                                         const std::function<std::string(const std::string&)>& answer,
                                         std::chrono::milliseconds timeout) {
  const auto conn = net::connect_tcp(host, port, timeout);
  if (!conn.valid()) return std::nullopt;
  if (!send_message(conn, {{"type", "eval_request"}, {"node_id", node_id}, {"normalized_round", normalized_round}})) {
    return std::nullopt;
  }
  const auto question = read_message(conn, "question");
  if (!question || !(*question)["prompt"].is_string()) return std::nullopt;
  if (!send_message(conn, {{"type", "answer"}, {"text", answer((*question)["prompt"].get<std::string>())}})) {
    return std::nullopt;
  }
  const auto verdict = read_message(conn, "verdict");
  if (!verdict || !(*verdict)["score"].is_number()) return std::nullopt;
  return (*verdict)["score"].get<double>();
}

}  // namespace sapo::judge
