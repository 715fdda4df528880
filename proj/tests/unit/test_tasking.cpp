#include <doctest.h>

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <thread>

#include "fixtures.hpp"
#include "pathweaver/error.hpp"
#include "pathweaver/tasking.hpp"

using namespace pathweaver;
using nlohmann::json;

namespace {

struct FakeClock {
  std::int64_t t = 1000;
  Clock fn() {
    return [this] { return t; };
  }
};

Project grid_project(double radius = 300.0) {
  const auto net = fixtures::load(fixtures::grid(3, 3));
  return partition_project(net, net.frame.unproject({100, 100}), radius);
}

const std::string kFragment =
    R"({"type":"FeatureCollection","features":[{"type":"Feature","geometry":{"type":"Point","coordinates":[0,0]},"properties":{"kind":"curb","provenance":"hypothesized"}}]})";

std::filesystem::path temp_path(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("pathweaver_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_CASE("tasking: project radius constant") {
  CHECK(std::abs(kProjectRadiusM - 1207.0) <= 0.5);
  CHECK(kDefaultLeaseMs == 1'800'000);
}

TEST_CASE("tasking: one intersection gives one task covering the disc") {
  const auto net = fixtures::load(fixtures::plus());
  const Project p = partition_project(net, fixtures::kAnchor, 500.0);
  REQUIRE(p.tasks.size() == 1);
  CHECK(std::abs(signed_area(p.tasks[0].polygon)) ==
        doctest::Approx(std::abs(signed_area(circle_polygon({0, 0}, 500.0, 256)))));
  CHECK(std::abs(signed_area(p.tasks[0].polygon)) == doctest::Approx(std::numbers::pi * 500.0 * 500.0).epsilon(0.01));
}

TEST_CASE("tasking: five intersections tile the disc") {
  const Project p = grid_project(300.0);
  REQUIRE(p.tasks.size() == 5);
  double area = 0.0;
  for (const auto& t : p.tasks) area += std::abs(signed_area(t.polygon));
  CHECK(area == doctest::Approx(std::numbers::pi * 300.0 * 300.0).epsilon(0.01));

  // Random interior points fall in exactly one region.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  while (checked < 2000) {
    const Vec2 q{u(rng) * 290.0, u(rng) * 290.0};
    if (norm(q) > 290.0) continue;
    ++checked;
    int hits = 0;
    for (const auto& t : p.tasks) hits += point_strictly_inside(q + Vec2{100, 100}, t.polygon) ? 1 : 0;
    CHECK(hits <= 1);
  }
}

TEST_CASE("tasking: no intersections is an empty project") {
  const auto net = fixtures::load(fixtures::single());
  try {
    partition_project(net, fixtures::kAnchor, 1000.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyInput);
  }
}

TEST_CASE("tasking: project json round trip and clones") {
  const Project p = grid_project();
  const Project q = parse_project(project_json(p));
  CHECK(q.id == p.id);
  REQUIRE(q.tasks.size() == p.tasks.size());
  CHECK(q.tasks[2].polygon == p.tasks[2].polygon);
  CHECK(q.frame.same_as(p.frame));
  const Project c = clone_project(p, 2);
  CHECK(c.id == "project#r2");
  CHECK(c.tasks.size() == p.tasks.size());
}

TEST_CASE("locks: grant and rejection reasons") {
  FakeClock clk;
  TaskManager m(grid_project(), {}, clk.fn());
  const auto a = m.acquire("alice", 0);
  REQUIRE(a.ok);
  REQUIRE(a.token);
  CHECK(a.token->expires_at == clk.t + kDefaultLeaseMs);
  CHECK(a.token->nonce.size() == 16);

  CHECK(m.acquire("bob", 0).reason == reason::kTaskLockedByOther);
  CHECK(m.acquire("alice", 1).reason == reason::kClientHoldsOtherLock);
  CHECK(m.acquire("alice", 99).reason == reason::kNotFound);
  CHECK(m.status(0).state == TaskState::Locked);

  CHECK(m.relinquish(*a.token).ok);
  CHECK(m.status(0).state == TaskState::Available);
  CHECK(m.acquire("alice", 1).ok);
}

TEST_CASE("locks: relinquish is idempotent and nonces are checked") {
  FakeClock clk;
  TaskManager m(grid_project(), {}, clk.fn());
  const auto tok = *m.acquire("alice", 0).token;
  CHECK(m.relinquish(tok).ok);
  const auto before = m.snapshot();
  const auto again = m.relinquish(tok);
  CHECK(again.ok);
  CHECK(again.reason == reason::kAlreadyReleased);
  CHECK(m.snapshot() == before);

  const auto tok2 = *m.acquire("bob", 0).token;
  LockToken forged = tok2;
  forged.nonce = "0000000000000000";
  CHECK(m.relinquish(forged).reason == reason::kInvalidToken);
  LockToken impostor = tok2;
  impostor.client = "mallory";
  CHECK(m.relinquish(impostor).reason == reason::kInvalidToken);
  CHECK(m.status(0).state == TaskState::Locked);
}

TEST_CASE("locks: re-acquire refreshes the lease with a new nonce") {
  FakeClock clk;
  TaskManager m(grid_project(), {}, clk.fn());
  const auto first = *m.acquire("alice", 0).token;
  clk.t += 1000;
  const auto second = *m.acquire("alice", 0).token;
  CHECK(second.nonce != first.nonce);
  CHECK(second.expires_at == first.expires_at + 1000);
  CHECK(m.relinquish(first).reason == reason::kAlreadyReleased);
  CHECK(m.status(0).state == TaskState::Locked);
  CHECK(m.relinquish(second).ok);
}

TEST_CASE("locks: lease expiry frees the task") {
  FakeClock clk;
  TaskManagerOptions opt;
  opt.lease_ms = 10'000;
  TaskManager m(grid_project(), opt, clk.fn());
  const auto tok = *m.acquire("alice", 0).token;
  clk.t += 9'999;
  CHECK(m.status(0).state == TaskState::Locked);
  clk.t += 1;
  CHECK(m.status(0).state == TaskState::Available);
  const auto r = m.relinquish(tok);
  CHECK(r.ok);
  CHECK(r.reason == reason::kAlreadyReleased);
  // Expiry also frees the client.
  CHECK(m.acquire("alice", 1).ok);
}

TEST_CASE("commit: lifecycle, stamping and terminality") {
  FakeClock clk;
  TaskManager m(grid_project(), {}, clk.fn());
  const auto tok = *m.acquire("alice", 2).token;
  const TaskComment c{CompletionStatus::Complete, true, true, "all good"};
  const auto r = m.commit(tok, kFragment, c);
  REQUIRE(r.ok);
  CHECK(r.state == TaskState::Committed);
  const auto snap = m.snapshot();
  CHECK(snap[2].state == TaskState::Committed);
  REQUIRE(snap[2].comments.size() == 1);
  CHECK(snap[2].comments[0] == c);
  const json frag = json::parse(snap[2].fragments.at(0));
  CHECK(frag["features"][0]["properties"]["provenance"] == "human_edited");
  CHECK(frag["features"][0]["properties"]["kind"] == "curb");

  CHECK(m.acquire("bob", 2).reason == reason::kTaskCommitted);
  CHECK(m.acquire("alice", 2).reason == reason::kTaskCommitted);
  CHECK(m.commit(tok, kFragment, c).reason == reason::kTaskCommitted);
  CHECK(m.relinquish(tok).reason == reason::kAlreadyReleased);
  CHECK(m.status(2).state == TaskState::Committed);
  // The committing client is free again.
  CHECK(m.acquire("alice", 3).ok);
}

TEST_CASE("commit: expired token hands the edits back") {
  FakeClock clk;
  TaskManagerOptions opt;
  opt.lease_ms = 5'000;
  TaskManager m(grid_project(), opt, clk.fn());
  const auto tok = *m.acquire("alice", 1).token;
  clk.t += 6'000;
  const auto r = m.commit(tok, kFragment, {});
  CHECK_FALSE(r.ok);
  CHECK(r.reason == reason::kTokenExpired);
  REQUIRE(r.returned_fragment);
  CHECK(*r.returned_fragment == kFragment);
  CHECK(m.status(1).state == TaskState::Available);
}

TEST_CASE("commit: forged nonce changes nothing") {
  FakeClock clk;
  TaskManager m(grid_project(), {}, clk.fn());
  const auto tok = *m.acquire("alice", 1).token;
  const auto before = m.snapshot();
  const auto events = m.events().size();
  LockToken forged{1, "mallory", tok.nonce, 0};
  CHECK(m.commit(forged, kFragment, {}).reason == reason::kInvalidToken);
  forged = {1, "alice", "deadbeefdeadbeef", 0};
  CHECK(m.commit(forged, kFragment, {}).reason == reason::kInvalidToken);
  CHECK(m.snapshot() == before);
  CHECK(m.events().size() == events);
}

TEST_CASE("commit: comment and fragment validation") {
  CHECK_THROWS_AS(parse_comment(json{{"completion_status", "complete"}, {"imagery_ok", true}}), Error);
  CHECK_THROWS_AS(parse_comment(json{{"completion_status", "done"}, {"imagery_ok", true}, {"continue_next", false}}),
                  Error);
  const auto c = parse_comment(json{{"completion_status", "partial"}, {"imagery_ok", false}, {"continue_next", true}});
  CHECK(c.completion_status == CompletionStatus::Partial);
  CHECK_FALSE(c.imagery_ok);

  FakeClock clk;
  TaskManager m(grid_project(), {}, clk.fn());
  const auto tok = *m.acquire("alice", 0).token;
  const auto r = m.commit(tok, "[1,2]", {});
  CHECK(r.reason == reason::kValidation);
  CHECK(m.status(0).state == TaskState::Locked);
}

TEST_CASE("event log: file, replay, restart and corruption") {
  const auto path = temp_path("events.jsonl");
  FakeClock clk;
  const Project p = grid_project();
  TaskManagerOptions opt;
  opt.log_path = path;
  opt.lease_ms = 1'000;
  std::vector<TaskRecord> live;
  {
    TaskManager m(p, opt, clk.fn());
    const auto a = *m.acquire("alice", 0).token;
    m.acquire("bob", 1);
    clk.t += 2'000;
    m.acquire("carol", 1);  // reaps bob's lapsed lock
    m.commit(a, kFragment, {});
    live = m.snapshot();
  }
  const auto events = read_event_log(path);
  REQUIRE(events.size() == 5);
  CHECK(events[0]["seq"] == 1);
  CHECK(events[2]["kind"] == "expire");
  CHECK(replay_log(p, events) == live);
  CHECK(replay_log(p, {}) == TaskManager(p, {}, clk.fn()).snapshot());

  TaskManager again(p, opt, clk.fn(), events);
  CHECK(again.snapshot() == live);
  CHECK(again.acquire("alice", 3).ok);
  CHECK(read_event_log(path).back()["seq"] == 6);

  auto gap = events;
  gap.erase(gap.begin() + 2);
  try {
    replay_log(p, gap);
    FAIL("expected corruption");
  } catch (const CorruptionError& e) {
    CHECK(e.seq() == 3);
  }
  std::filesystem::remove(path);
}

TEST_CASE("event log: every prefix replays to the live state at that point") {
  const Project p = grid_project();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    FakeClock clk;
    TaskManagerOptions opt;
    opt.lease_ms = 3'000;
    opt.seed = seed;
    std::vector<std::pair<std::uint64_t, std::vector<TaskRecord>>> states;
    opt.observer = [&](const OpRecord& op, std::span<const TaskRecord> tasks) {
      states.emplace_back(op.log_seq, std::vector<TaskRecord>(tasks.begin(), tasks.end()));
    };
    TaskManager m(p, opt, clk.fn());
    std::mt19937_64 rng(seed);
    std::map<std::string, LockToken> tokens;
    for (int i = 0; i < 300; ++i) {
      clk.t += static_cast<std::int64_t>(rng() % 400);
      const std::string who = "c" + std::to_string(rng() % 4);
      const TaskId task = static_cast<TaskId>(rng() % p.tasks.size());
      switch (rng() % 4) {
        case 0:
          if (auto r = m.acquire(who, task); r.ok) tokens[who] = *r.token;
          break;
        case 1:
          if (tokens.contains(who)) m.relinquish(tokens[who]);
          break;
        case 2:
          if (tokens.contains(who) && rng() % 3 == 0) m.commit(tokens[who], kFragment, {});
          break;
        default:
          m.status(task);
      }
    }
    const auto events = m.events();
    for (const auto& [seq, state] : states) {
      CHECK(replay_log(p, std::span<const json>(events.data(), seq)) == state);
    }
  }
}

TEST_CASE("protocol: request lines") {
  FakeClock clk;
  TaskManager m(grid_project(), {}, clk.fn());
  const json a = json::parse(handle_request_line(m, R"({"op":"acquire","client":"alice","task":0})"));
  REQUIRE(a["ok"] == true);
  CHECK(a["state"] == "LOCKED");
  const std::string nonce = a["token"]["nonce"];
  const json b = json::parse(handle_request_line(m, R"({"op":"acquire","client":"bob","task":0})"));
  CHECK(b["ok"] == false);
  CHECK(b["reason"] == "task_locked_by_other");

  json commit{{"op", "commit"}, {"client", "alice"}, {"task", 0}, {"nonce", nonce}, {"fragment", json::parse(kFragment)}};
  commit["comment"] = {{"completion_status", "complete"}, {"imagery_ok", true}};
  CHECK(json::parse(handle_request_line(m, commit.dump()))["reason"] == "validation");
  commit["comment"]["continue_next"] = false;
  CHECK(json::parse(handle_request_line(m, commit.dump()))["ok"] == true);
  CHECK(json::parse(handle_request_line(m, R"({"op":"status","task":0})"))["state"] == "COMMITTED");
  CHECK(json::parse(handle_request_line(m, "not json"))["reason"] == "validation");
  CHECK(json::parse(handle_request_line(m, R"({"op":"explode"})"))["reason"] == "validation");
}

TEST_CASE("protocol: unix socket server") {
  FakeClock clk;
  TaskManager m(grid_project(), {}, clk.fn());
  const auto path = temp_path("sock");
  std::atomic<bool> stop{false};
  std::thread server([&] { serve_unix_socket(m, path, stop); });
  int fd = -1;
  for (int i = 0; i < 200 && fd < 0; ++i) {
    fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, path.c_str(), sizeof addr.sun_path - 1);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      ::close(fd);
      fd = -1;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  REQUIRE(fd >= 0);
  const std::string req = R"({"op":"acquire","client":"alice","task":1})"
                          "\n"
                          R"({"op":"status","task":1})"
                          "\n";
  REQUIRE(::write(fd, req.data(), req.size()) == static_cast<ssize_t>(req.size()));
  std::string got;
  char buf[1024];
  while (std::count(got.begin(), got.end(), '\n') < 2) {
    const ssize_t n = ::read(fd, buf, sizeof buf);
    REQUIRE(n > 0);
    got.append(buf, static_cast<std::size_t>(n));
  }
  ::close(fd);
  stop = true;
  server.join();
  const auto nl = got.find('\n');
  CHECK(json::parse(got.substr(0, nl))["ok"] == true);
  CHECK(json::parse(got.substr(nl + 1, got.find('\n', nl + 1) - nl - 1))["state"] == "LOCKED");
  CHECK_FALSE(std::filesystem::exists(path));
}

TEST_CASE("simulation: small concurrent run is clean") {
  SimulationConfig cfg;
  cfg.clients = 16;
  cfg.ops_per_client = 150;
  cfg.seed = 3;
  const auto rep = simulate(grid_project(), cfg);
  CHECK(rep.ops == 16u * 150u);
  CHECK(rep.violations.empty());
  for (std::size_t i = 0; i < std::min<std::size_t>(rep.violations.size(), 5); ++i) MESSAGE(rep.violations[i]);
  CHECK(rep.replay_equal);
  CHECK(rep.prefix_replay_equal);
  CHECK(rep.grants > 0);
  CHECK(rep.reasons.contains(reason::kInvalidToken));
}
