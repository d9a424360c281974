#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "sapo/framing.hpp"
#include "sapo/socket_transport.hpp"
#include "sapo/swarmnet.hpp"
#include "support.hpp"

using namespace sapo;
using namespace sapo::swarm;

namespace {

RolloutPacket packet(const std::string& sender, std::uint64_t round, const std::string& tag = "c") {
  RolloutPacket p;
  p.sender = sender;
  p.round = round;
  p.specialty = "basic_arithmetic";
  p.instance_seed = round * 10;
  p.prompt = "Calculate: 1 + 1";
  p.ground_truth = "2";
  p.metadata = "basic_arithmetic/v1";
  p.completions = {tag};
  return p;
}

}  // namespace

TEST_CASE("random packets round-trip exactly") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto p = testing::random_packet(rng);
    const auto line = serialize(p);
    CHECK(line.back() == '\n');
    CHECK(line.find('\n') == line.size() - 1);
    CHECK(deserialize(line) == p);
    CHECK(deserialize(line.substr(0, line.size() - 1)) == p);
  }
}

TEST_CASE("wire field order is fixed") {
  const auto line = serialize(packet("a", 3));
  const std::vector<std::string> order{"schema_version", "sender", "round", "specialty", "instance_seed",
                                       "prompt", "ground_truth", "metadata", "completions"};
  std::size_t last = 0;
  for (const auto& key : order) {
    const auto at = line.find("\"" + key + "\"");
    REQUIRE(at != std::string::npos);
    CHECK(at >= last);
    last = at;
  }
}

TEST_CASE("malformed packets are rejected") {
  auto j = nlohmann::json::parse(serialize(packet("a", 1)));
  auto with = [&](auto edit) {
    auto copy = j;
    edit(copy);
    return copy.dump();
  };
  CHECK_THROWS_AS(deserialize("{not json"), WireError);
  CHECK_THROWS_AS(deserialize(with([](auto& x) { x["schema_version"] = 2; })), WireError);
  CHECK_THROWS_AS(deserialize(with([](auto& x) { x.erase("prompt"); })), WireError);
  CHECK_THROWS_AS(deserialize(with([](auto& x) { x["round"] = "three"; })), WireError);
  CHECK_THROWS_AS(deserialize(with([](auto& x) { x["completions"] = nlohmann::json::array(); })), WireError);
  try {
    deserialize(with([](auto& x) { x["schema_version"] = 9; }));
    FAIL("accepted a future schema");
  } catch (const WireError& e) {
    CHECK(std::string(e.what()).find("9") != std::string::npos);
  }
  auto empty = packet("a", 1);
  empty.completions.clear();
  CHECK_THROWS_AS(serialize(empty), WireError);
  auto bad = packet("a", 1);
  bad.prompt = "\xff\xfe";
  CHECK_THROWS_AS(serialize(bad), WireError);
}

TEST_CASE("pool applies staleness and excludes the caller") {
  SwarmPool pool(2, 64);
  for (std::uint64_t r = 0; r <= 6; ++r) {
    pool.insert(packet("b", r));
    pool.insert(packet("a", r));
  }
  const auto got = pool.poll("a", 5);
  REQUIRE(got.size() == 3);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].sender == "b");
    CHECK(got[i].round == 3 + i);
  }
  CHECK(pool.poll("c", 1).size() == 4);
  CHECK(pool.poll("c", 0).size() == 2);
}

TEST_CASE("pool evicts a sender's oldest packet at capacity") {
  SwarmPool pool(100, 3);
  pool.insert(packet("b", 5, "x"));
  pool.insert(packet("b", 2, "y"));
  pool.insert(packet("b", 5, "z"));
  pool.insert(packet("c", 0));
  pool.insert(packet("b", 6, "w"));
  CHECK(pool.size() == 4);
  const auto got = pool.poll("a", 6);
  std::vector<std::string> tags;
  for (const auto& p : got)
    if (p.sender == "b") tags.push_back(p.completions[0]);
  CHECK(tags == std::vector<std::string>{"x", "z", "w"});
  CHECK(got.back().sender == "c");
}

TEST_CASE("broadcast precondition") {
  InMemoryTransport t;
  auto pool = std::make_shared<SwarmPool>();
  t.attach("b", pool);
  const std::vector<RolloutPacket> wrong_sender{packet("x", 1)};
  CHECK_THROWS_AS(t.broadcast("a", wrong_sender), WireError);
  const std::vector<RolloutPacket> mixed{packet("a", 1), packet("a", 2)};
  CHECK_THROWS_AS(t.broadcast("a", mixed), WireError);
  const std::vector<RolloutPacket> ok{packet("a", 1)};
  const auto report = t.broadcast("a", ok);
  CHECK(report.acknowledged == 1);
  CHECK(pool->size() == 1);
}

TEST_CASE("frame codec") {
  net::FrameDecoder d;
  const auto a = net::encode_frame("hello");
  const auto b = net::encode_frame("");
  CHECK(a.size() == 9);
  CHECK(static_cast<unsigned char>(a[3]) == 5);
  const auto stream = a + b;
  for (char c : stream) d.feed(std::string_view(&c, 1));
  CHECK(d.next() == "hello");
  CHECK(d.next() == "");
  CHECK_FALSE(d.next().has_value());
  net::FrameDecoder big;
  big.feed(std::string("\x7f\x00\x00\x00", 4));
  CHECK_THROWS(big.next());
}

TEST_CASE("socket and in-memory transports agree on a fixed schedule") {
  const auto memory = testing::run_schedule(false);
  const auto sockets = testing::run_schedule(true);
  REQUIRE(memory.size() == sockets.size());
  std::size_t nonempty = 0;
  for (std::size_t i = 0; i < memory.size(); ++i) {
    CHECK(memory[i] == sockets[i]);
    nonempty += !memory[i].empty();
  }
  CHECK(nonempty > 10);
}

TEST_CASE("a dead peer is reported and the rest still receive") {
  const int n = 8;
  std::vector<std::shared_ptr<SwarmPool>> pools;
  std::vector<std::unique_ptr<SocketEndpoint>> endpoints;
  std::vector<PeerAddress> peers;
  for (int i = 0; i < n; ++i) {
    pools.push_back(std::make_shared<SwarmPool>());
    endpoints.push_back(std::make_unique<SocketEndpoint>("node-" + std::to_string(i), pools.back(), 0,
                                                         std::chrono::milliseconds(500)));
    peers.push_back({"node-" + std::to_string(i), "127.0.0.1", endpoints.back()->port()});
  }
  for (auto& e : endpoints) e->set_peers(peers);
  endpoints[5]->stop();
  const std::vector<RolloutPacket> batch{packet("node-0", 1)};
  const auto report = endpoints[0]->broadcast("node-0", batch);
  CHECK(report.peers == 7);
  CHECK(report.acknowledged == 6);
  CHECK(report.unreached == std::vector<std::string>{"node-5"});
  for (int i = 1; i < n; ++i) CHECK(pools[i]->size() == (i == 5 ? 0u : 1u));

  // A garbage frame is refused without taking the endpoint down.
  auto raw = net::connect_tcp("127.0.0.1", endpoints[1]->port(), std::chrono::milliseconds(500));
  REQUIRE(raw.valid());
  net::set_io_timeout(raw, std::chrono::milliseconds(1000));
  REQUIRE(net::write_frame(raw, "not a packet"));
  const auto reply = net::read_frame(raw);
  REQUIRE(reply.has_value());
  CHECK(reply->rfind("error", 0) == 0);
  CHECK(endpoints[1]->rejected_frames() == 1);
  const std::vector<RolloutPacket> again{packet("node-0", 2)};
  CHECK(endpoints[0]->broadcast("node-0", again).acknowledged == 6);
  for (auto& e : endpoints) e->stop();
}
