// Concurrent client simulation for the task manager, checked against a
// sequential model of the lock rules.
#include <algorithm>
#include <chrono>
#include <optional>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "pathweaver/error.hpp"
#include "pathweaver/tasking.hpp"

namespace pathweaver {

namespace {

// Sequential reference: what each operation should return given the history so far.
class LockModel {
 public:
  explicit LockModel(const Project& p) {
    for (const TaskRegion& t : p.tasks) tasks_[t.id];
  }

  // Returns a description of the disagreement, if any.
  std::optional<std::string> step(const OpRecord& op) {
    const auto it = tasks_.find(op.task);
    const TaskResponse& got = op.response;
    if (it == tasks_.end()) return expect(op, false, reason::kNotFound);
    Task& t = it->second;
    expire(t, op.now);
    switch (op.kind) {
      case OpKind::Acquire: {
        expire_client(op.client, op.now);
        if (t.committed) return expect(op, false, reason::kTaskCommitted);
        if (t.holder && *t.holder != op.client) return expect(op, false, reason::kTaskLockedByOther);
        if (!t.holder && holding_.contains(op.client)) return expect(op, false, reason::kClientHoldsOtherLock);
        if (auto bad = expect(op, true, "")) return bad;
        if (!got.token || got.token->expires_at <= op.now) return "grant without a live token";
        if (t.holder) ended_[t.nonce] = End::Released;
        t.holder = op.client;
        t.nonce = got.token->nonce;
        t.expires_at = got.token->expires_at;
        holding_[op.client] = op.task;
        owner_[t.nonce] = {op.task, op.client};
        ended_[t.nonce] = End::Active;
        return std::nullopt;
      }
      case OpKind::Relinquish: {
        if (t.holder && t.nonce == op.nonce && *t.holder == op.client) {
          release(t, End::Released);
          return expect(op, true, "");
        }
        if (issued_to(op)) return expect(op, true, reason::kAlreadyReleased);
        return expect(op, false, reason::kInvalidToken);
      }
      case OpKind::Commit: {
        if (t.holder && t.nonce == op.nonce && *t.holder == op.client) {
          release(t, End::Committed);
          t.committed = true;
          return expect(op, true, "");
        }
        if (issued_to(op)) {
          const End e = ended_.at(op.nonce);
          return expect(op, false,
                        e == End::Expired     ? reason::kTokenExpired
                        : e == End::Committed ? reason::kTaskCommitted
                                              : reason::kAlreadyReleased);
        }
        return expect(op, false, reason::kInvalidToken);
      }
      case OpKind::Status: {
        if (auto bad = expect(op, true, "")) return bad;
        const TaskState want = t.committed ? TaskState::Committed : t.holder ? TaskState::Locked : TaskState::Available;
        if (got.state != want) return fmt::format("status reported {}", got.state ? to_string(*got.state) : "none");
        return std::nullopt;
      }
    }
    return std::nullopt;
  }

 private:
  enum class End { Active, Released, Expired, Committed };
  struct Task {
    bool committed = false;
    std::optional<std::string> holder;
    std::string nonce;
    std::int64_t expires_at = 0;
  };

  static std::optional<std::string> expect(const OpRecord& op, bool ok, const std::string& why) {
    if (op.response.ok == ok && op.response.reason == why) return std::nullopt;
    return fmt::format("op {} {} by '{}' on task {}: expected ok={} reason='{}', got ok={} reason='{}'", op.index,
                       to_string(op.kind), op.client, op.task, ok, why, op.response.ok, op.response.reason);
  }

  bool issued_to(const OpRecord& op) const {
    const auto it = owner_.find(op.nonce);
    return it != owner_.end() && it->second.first == op.task && it->second.second == op.client;
  }

  void release(Task& t, End how) {
    ended_[t.nonce] = how;
    holding_.erase(*t.holder);
    t.holder.reset();
  }

  void expire(Task& t, std::int64_t now) {
    if (t.holder && now >= t.expires_at) release(t, End::Expired);
  }

  void expire_client(const std::string& client, std::int64_t now) {
    const auto h = holding_.find(client);
    if (h != holding_.end()) expire(tasks_.at(h->second), now);
  }

  std::map<TaskId, Task> tasks_;
  std::map<std::string, TaskId> holding_;
  std::map<std::string, std::pair<TaskId, std::string>> owner_;
  std::map<std::string, End> ended_;
};

std::string random_hex(std::mt19937_64& rng) { return fmt::format("{:016x}", rng()); }

}  // namespace

SimulationReport simulate(const Project& project, const SimulationConfig& cfg) {
  if (project.tasks.empty()) throw Error(ErrorKind::EmptyInput, "simulation needs at least one task");
  if (cfg.clients < 1 || cfg.ops_per_client < 0) throw Error(ErrorKind::Config, "bad simulation size");
  const auto started = std::chrono::steady_clock::now();

  SimulationReport rep;
  std::atomic<std::int64_t> clock{0};
  std::vector<OpRecord> history;
  std::vector<bool> committed_seen(project.tasks.size(), false);
  std::mt19937_64 pick_rng(cfg.seed * 7919 + 1);
  const std::uint64_t total_ops = static_cast<std::uint64_t>(cfg.clients) * static_cast<std::uint64_t>(cfg.ops_per_client);
  const std::uint64_t prefix_at = total_ops == 0 ? 0 : pick_rng() % total_ops;
  std::vector<TaskRecord> prefix_state;
  std::uint64_t prefix_seq = 0;
  bool prefix_taken = false;

  TaskManagerOptions opts;
  opts.lease_ms = cfg.lease_ms;
  opts.seed = cfg.seed;
  // Runs under the manager's lock, so it sees every operation at its
  // linearization point and the state right after it.
  opts.observer = [&](const OpRecord& op, std::span<const TaskRecord> tasks) {
    history.push_back(op);
    std::map<std::string, int> live_locks;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const TaskRecord& t = tasks[i];
      if ((t.state == TaskState::Locked) != t.lock.has_value()) {
        rep.violations.push_back(fmt::format("op {}: task {} state/lock mismatch", op.index, t.id));
      }
      if (t.state_at(op.now) == TaskState::Locked && ++live_locks[t.lock->client] > 1) {
        rep.violations.push_back(fmt::format("op {}: client '{}' holds two live locks", op.index, t.lock->client));
      }
      if (committed_seen[i] && t.state != TaskState::Committed) {
        rep.violations.push_back(fmt::format("op {}: committed task {} left COMMITTED", op.index, t.id));
      }
      if (t.state == TaskState::Committed) committed_seen[i] = true;
    }
    if (op.index == prefix_at) {
      prefix_state.assign(tasks.begin(), tasks.end());
      prefix_seq = op.log_seq;
      prefix_taken = true;
    }
  };
  TaskManager mgr(project, opts, [&clock] { return clock.load(); });

  const std::string fragment =
      R"({"type":"FeatureCollection","features":[{"type":"Feature","geometry":{"type":"Point","coordinates":[0,0]},"properties":{"kind":"curb"}}]})";
  std::vector<std::thread> threads;
  for (int c = 0; c < cfg.clients; ++c) {
    threads.emplace_back([&, c] {
      std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(c));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::uniform_int_distribution<std::size_t> task_pick(0, project.tasks.size() - 1);
      std::uniform_int_distribution<std::int64_t> step(0, cfg.max_step_ms);
      const std::string me = fmt::format("client-{}", c);
      std::optional<LockToken> held;
      std::optional<LockToken> stale;
      for (int k = 0; k < cfg.ops_per_client; ++k) {
        clock.fetch_add(step(rng));
        const double r = u(rng);
        const TaskId any = project.tasks[task_pick(rng)].id;
        if (r < cfg.forge_rate) {
          // Adversarial: a guessed nonce, or a real nonce presented by the wrong client.
          LockToken forged{any, me, random_hex(rng), 0};
          if (stale && u(rng) < 0.5) forged = {stale->task, me + "-impostor", stale->nonce, 0};
          if (u(rng) < 0.5) {
            mgr.relinquish(forged);
          } else {
            mgr.commit(forged, fragment, TaskComment{});
          }
        } else if (held) {
          const double s = u(rng);
          if (s < 0.12) {
            TaskComment cm{static_cast<CompletionStatus>(rng() % 3), u(rng) < 0.9, u(rng) < 0.5, "sim"};
            const TaskResponse resp = mgr.commit(*held, fragment, cm);
            if (resp.ok || resp.reason != reason::kValidation) {
              stale = held;
              held.reset();
            }
          } else if (s < 0.4) {
            mgr.relinquish(*held);
            stale = held;
            held.reset();
          } else if (s < 0.6) {
            mgr.acquire(me, any);  // expected rejection unless the old lock lapsed
          } else if (s < 0.7) {
            const TaskResponse resp = mgr.acquire(me, held->task);
            if (resp.ok) held = resp.token;
          } else if (s < 0.8 && stale) {
            if (u(rng) < 0.5) {
              mgr.relinquish(*stale);
            } else {
              mgr.commit(*stale, fragment, TaskComment{});
            }
          } else {
            mgr.status(held->task);
          }
        } else {
          if (u(rng) < 0.85) {
            const TaskResponse resp = mgr.acquire(me, any);
            if (resp.ok) held = resp.token;
          } else {
            mgr.status(any);
          }
        }
      }
    });
  }
  for (std::thread& t : threads) t.join();

  LockModel model(project);
  for (const OpRecord& op : history) {
    if (auto bad = model.step(op)) rep.violations.push_back(*bad);
    if (!op.response.reason.empty()) ++rep.reasons[op.response.reason];
    if (op.kind == OpKind::Acquire && op.response.ok) ++rep.grants;
    if (op.kind == OpKind::Commit && op.response.ok) ++rep.commits;
  }
  rep.ops = history.size();
  const std::vector<nlohmann::json> events = mgr.events();
  for (const nlohmann::json& ev : events) rep.expiries += ev.at("kind") == "expire" ? 1 : 0;
  rep.replay_equal = replay_log(project, events) == mgr.snapshot();
  if (prefix_taken) {
    const std::span<const nlohmann::json> prefix(events.data(), static_cast<std::size_t>(prefix_seq));
    rep.prefix_replay_equal = replay_log(project, prefix) == prefix_state;
  } else {
    rep.prefix_replay_equal = true;
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rep;
}

}  // namespace pathweaver
