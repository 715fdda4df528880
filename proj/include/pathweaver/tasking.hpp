#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathweaver/geometry.hpp"
#include "pathweaver/street_model.hpp"

namespace pathweaver {

/// 0.75 mile.
inline constexpr double kProjectRadiusM = 0.75 * 1609.344;
inline constexpr std::int64_t kDefaultLeaseMs = 30 * 60 * 1000;

using TaskId = std::int64_t;

struct TaskRegion {
  TaskId id = 0;
  NodeId intersection = 0;
  Vec2 site;
  Polygon polygon;  // local meters, counterclockwise
};

struct Project {
  std::string id = "project";
  LonLat center;
  LocalFrame frame;
  double radius_m = kProjectRadiusM;
  std::vector<TaskRegion> tasks;

  const TaskRegion* find(TaskId id) const;
};

/// One task per street intersection inside the disc, each the intersection's
/// Voronoi cell clipped to a 256-gon approximation of the disc.
Project partition_project(const StreetNetwork& net, LonLat center, double radius_m = kProjectRadiusM,
                          std::string project_id = "project");

/// Copy for redundant assignment: same regions under id "<id>#r<k>".
Project clone_project(const Project& p, int redundancy_index);

std::string project_json(const Project& p);
Project parse_project(std::string_view text);

enum class TaskState { Available, Locked, Committed };
const char* to_string(TaskState s);

enum class CompletionStatus { Complete, Partial, Skipped };
const char* to_string(CompletionStatus s);

struct TaskComment {
  CompletionStatus completion_status = CompletionStatus::Complete;
  bool imagery_ok = true;
  bool continue_next = true;
  std::string free_text;
  bool operator==(const TaskComment&) const = default;
};

/// Throws Validation unless completion_status, imagery_ok and continue_next are all present.
TaskComment parse_comment(const nlohmann::json& j);
nlohmann::json comment_json(const TaskComment& c);

struct LockToken {
  TaskId task = 0;
  std::string client;
  std::string nonce;
  std::int64_t expires_at = 0;  // ms
  bool operator==(const LockToken&) const = default;
};

struct Lock {
  std::string client;
  std::string nonce;
  std::int64_t acquired_at = 0;
  std::int64_t expires_at = 0;
  bool operator==(const Lock&) const = default;
};

/// Stored task state. A lock whose expiry has passed is still stored until
/// the next operation touching the task or its holder reaps it.
struct TaskRecord {
  TaskId id = 0;
  TaskState state = TaskState::Available;
  std::optional<Lock> lock;
  std::vector<TaskComment> comments;
  std::vector<std::string> fragments;  // stamped GeoJSON text
  bool operator==(const TaskRecord&) const = default;

  TaskState state_at(std::int64_t now) const;
};

// Response reasons.
namespace reason {
inline constexpr const char* kTaskLockedByOther = "task_locked_by_other";
inline constexpr const char* kClientHoldsOtherLock = "client_holds_other_lock";
inline constexpr const char* kTaskCommitted = "task_committed";
inline constexpr const char* kInvalidToken = "invalid_token";
inline constexpr const char* kAlreadyReleased = "already_released";
inline constexpr const char* kTokenExpired = "token_expired";
inline constexpr const char* kNotFound = "not_found";
inline constexpr const char* kValidation = "validation";
}  // namespace reason

struct TaskResponse {
  bool ok = false;
  std::string reason;  // empty on a plain success
  std::string message;
  std::optional<LockToken> token;
  std::optional<TaskState> state;
  std::optional<std::string> returned_fragment;  // edits handed back by a rejected commit
};

enum class OpKind { Acquire, Relinquish, Commit, Status };
const char* to_string(OpKind k);

/// One serialized operation, reported to the observer at its linearization point.
struct OpRecord {
  std::uint64_t index = 0;
  OpKind kind = OpKind::Status;
  std::string client;
  TaskId task = 0;
  std::string nonce;
  std::int64_t now = 0;
  std::uint64_t log_seq = 0;  // last event sequence number after the operation
  TaskResponse response;
};

using Clock = std::function<std::int64_t()>;
Clock wall_clock_ms();

struct TaskManagerOptions {
  std::int64_t lease_ms = kDefaultLeaseMs;
  std::uint64_t seed = 1;
  /// Append-only JSONL log; events are flushed on write and fsynced on commit.
  std::optional<std::filesystem::path> log_path;
  /// Called under the serialization lock after every operation.
  std::function<void(const OpRecord&, std::span<const TaskRecord>)> observer;
};

/// Serialized lock/commit state machine over one project's tasks.
class TaskManager {
 public:
  /// `prior_events` (from an earlier log) are replayed before accepting requests.
  TaskManager(Project project, TaskManagerOptions options = {}, Clock clock = wall_clock_ms(),
              std::span<const nlohmann::json> prior_events = {});
  ~TaskManager();
  TaskManager(const TaskManager&) = delete;
  TaskManager& operator=(const TaskManager&) = delete;

  TaskResponse acquire(const std::string& client, TaskId task);
  TaskResponse relinquish(const LockToken& token);
  /// `fragment` is graph GeoJSON; its features are stamped human_edited.
  TaskResponse commit(const LockToken& token, const std::string& fragment, const TaskComment& comment);
  TaskResponse status(TaskId task);

  std::vector<TaskRecord> snapshot() const;
  std::vector<nlohmann::json> events() const;
  const Project& project() const { return project_; }
  std::int64_t now() const { return clock_(); }

 private:
  enum class NonceEnd { Active, Released, Expired, Committed };
  struct NonceInfo {
    TaskId task = 0;
    std::string client;
    NonceEnd end = NonceEnd::Active;
  };

  TaskRecord* find(TaskId id);
  void reap(TaskRecord& t, std::int64_t now);
  void reap_client(const std::string& client, std::int64_t now);
  std::string fresh_nonce();
  void append(const std::string& kind, nlohmann::json payload, std::int64_t now, bool sync);
  void apply(const nlohmann::json& event);
  TaskResponse finish(OpKind kind, const std::string& client, TaskId task, const std::string& nonce,
                      std::int64_t now, TaskResponse r);

  Project project_;
  TaskManagerOptions options_;
  Clock clock_;
  mutable std::mutex mu_;
  std::vector<TaskRecord> tasks_;
  std::map<TaskId, std::size_t> index_;
  std::map<std::string, TaskId> held_;  // client -> task of its stored lock
  std::map<std::string, NonceInfo> nonces_;
  std::vector<nlohmann::json> events_;
  std::uint64_t seq_ = 0;
  std::uint64_t ops_ = 0;
  std::mt19937_64 rng_;
  std::FILE* log_ = nullptr;
};

/// Rebuilds task states from the project and an event log. Throws
/// CorruptionError at the first sequence gap.
std::vector<TaskRecord> replay_log(const Project& project, std::span<const nlohmann::json> events);
std::vector<nlohmann::json> read_event_log(const std::filesystem::path& path);

/// One request line in, one response line out.
std::string handle_request_line(TaskManager& m, std::string_view line);
nlohmann::json response_json(const TaskResponse& r);

/// Serves the line protocol on a Unix stream socket until `stop` becomes true.
void serve_unix_socket(TaskManager& m, const std::filesystem::path& socket_path, const std::atomic<bool>& stop);

struct SimulationConfig {
  int clients = 100;
  int ops_per_client = 200;
  std::uint64_t seed = 1;
  std::int64_t lease_ms = 5000;
  std::int64_t max_step_ms = 40;  // simulated clock advance per operation
  double forge_rate = 0.1;
};

struct SimulationReport {
  std::uint64_t ops = 0;
  std::uint64_t grants = 0;
  std::uint64_t commits = 0;
  std::uint64_t expiries = 0;
  std::map<std::string, std::uint64_t> reasons;
  std::vector<std::string> violations;  // invariant breaches and model disagreements
  bool replay_equal = false;
  bool prefix_replay_equal = false;
  double seconds = 0.0;
};

/// Concurrent scripted clients against one manager on a simulated clock,
/// checked against a sequential model of the lock rules.
SimulationReport simulate(const Project& project, const SimulationConfig& cfg);

}  // namespace pathweaver
