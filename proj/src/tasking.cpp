// Task partitioning and the lease-lock state machine with its event log.
#include "pathweaver/tasking.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>

#include <fmt/format.h>

#include "pathweaver/error.hpp"
#include "pathweaver/metrics.hpp"

namespace pathweaver {

using nlohmann::json;
using nlohmann::ordered_json;

const TaskRegion* Project::find(TaskId id) const {
  for (const TaskRegion& t : tasks)
    if (t.id == id) return &t;
  return nullptr;
}

Project partition_project(const StreetNetwork& net, LonLat center, double radius_m, std::string project_id) {
  if (!(radius_m > 0.0)) throw Error(ErrorKind::Config, "project radius must be positive");
  Project p;
  p.id = std::move(project_id);
  p.center = center;
  p.frame = net.frame;
  p.radius_m = radius_m;
  const Vec2 c = net.frame.project(center);

  std::vector<NodeId> ids;
  std::vector<Vec2> sites;
  for (NodeId id : find_intersections(net, 3)) {
    const Vec2 s = net.node(id).local_xy;
    if (distance(s, c) <= radius_m) {
      ids.push_back(id);
      sites.push_back(s);
    }
  }
  if (sites.empty()) throw Error(ErrorKind::EmptyInput, "no street intersections within the project radius");

  const Polygon disc = circle_polygon(c, radius_m, 256);
  const Box box{c - Vec2{radius_m, radius_m}, c + Vec2{radius_m, radius_m}};
  const VoronoiPartition part = voronoi_partition(sites, box);
  for (const VoronoiCell& cell : part.cells) {
    // Merged duplicate sites keep the first intersection id.
    const auto it = std::find(sites.begin(), sites.end(), cell.center);
    TaskRegion t;
    t.id = static_cast<TaskId>(p.tasks.size());
    t.intersection = ids[static_cast<std::size_t>(it - sites.begin())];
    t.site = cell.center;
    t.polygon = clip_convex(cell.polygon, disc);
    p.tasks.push_back(std::move(t));
  }
  return p;
}

Project clone_project(const Project& p, int redundancy_index) {
  Project out = p;
  out.id = fmt::format("{}#r{}", p.id, redundancy_index);
  return out;
}

std::string project_json(const Project& p) {
  ordered_json tasks = ordered_json::array();
  for (const TaskRegion& t : p.tasks) {
    ordered_json ring = ordered_json::array();
    for (Vec2 v : t.polygon) ring.push_back({v.x, v.y});
    tasks.push_back({{"id", t.id}, {"intersection", t.intersection}, {"site", {t.site.x, t.site.y}}, {"polygon", ring}});
  }
  const ordered_json j{{"id", p.id},
                       {"center", {p.center.lon, p.center.lat}},
                       {"anchor", {p.frame.anchor().lon, p.frame.anchor().lat}},
                       {"radius_m", p.radius_m},
                       {"tasks", tasks}};
  return j.dump(2) + "\n";
}

Project parse_project(std::string_view text) {
  try {
    const json j = json::parse(text);
    Project p;
    p.id = j.at("id").get<std::string>();
    p.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
    p.frame = LocalFrame(LonLat{j.at("anchor").at(0).get<double>(), j.at("anchor").at(1).get<double>()});
    p.radius_m = j.at("radius_m").get<double>();
    for (const json& t : j.at("tasks")) {
      TaskRegion r;
      r.id = t.at("id").get<TaskId>();
      r.intersection = t.at("intersection").get<NodeId>();
      r.site = {t.at("site").at(0).get<double>(), t.at("site").at(1).get<double>()};
      for (const json& v : t.at("polygon")) r.polygon.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      p.tasks.push_back(std::move(r));
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("project: ") + e.what());
  }
}

const char* to_string(TaskState s) {
  switch (s) {
    case TaskState::Available: return "AVAILABLE";
    case TaskState::Locked: return "LOCKED";
    case TaskState::Committed: return "COMMITTED";
  }
  return "?";
}

const char* to_string(CompletionStatus s) {
  switch (s) {
    case CompletionStatus::Complete: return "complete";
    case CompletionStatus::Partial: return "partial";
    case CompletionStatus::Skipped: return "skipped";
  }
  return "?";
}

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::Acquire: return "acquire";
    case OpKind::Relinquish: return "relinquish";
    case OpKind::Commit: return "commit";
    case OpKind::Status: return "status";
  }
  return "?";
}

TaskComment parse_comment(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Validation, "comment must be an object");
  for (const char* k : {"completion_status", "imagery_ok", "continue_next"}) {
    if (!j.contains(k)) throw Error(ErrorKind::Validation, std::string("comment is missing '") + k + "'");
  }
  TaskComment c;
  const json& st = j.at("completion_status");
  if (!st.is_string()) throw Error(ErrorKind::Validation, "completion_status must be a string");
  const std::string s = st.get<std::string>();
  if (s == "complete") {
    c.completion_status = CompletionStatus::Complete;
  } else if (s == "partial") {
    c.completion_status = CompletionStatus::Partial;
  } else if (s == "skipped") {
    c.completion_status = CompletionStatus::Skipped;
  } else {
    throw Error(ErrorKind::Validation, "unknown completion_status '" + s + "'");
  }
  if (!j.at("imagery_ok").is_boolean() || !j.at("continue_next").is_boolean()) {
    throw Error(ErrorKind::Validation, "imagery_ok and continue_next must be booleans");
  }
  c.imagery_ok = j.at("imagery_ok").get<bool>();
  c.continue_next = j.at("continue_next").get<bool>();
  if (j.contains("free_text")) {
    if (!j.at("free_text").is_string()) throw Error(ErrorKind::Validation, "free_text must be a string");
    c.free_text = j.at("free_text").get<std::string>();
  }
  return c;
}

json comment_json(const TaskComment& c) {
  return {{"completion_status", to_string(c.completion_status)},
          {"imagery_ok", c.imagery_ok},
          {"continue_next", c.continue_next},
          {"free_text", c.free_text}};
}

TaskState TaskRecord::state_at(std::int64_t now) const {
  if (state == TaskState::Locked && lock && now >= lock->expires_at) return TaskState::Available;
  return state;
}

Clock wall_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

namespace {

// Sets provenance on every feature; the schema check stops at "features is an array of objects".
std::string stamp_fragment(const std::string& fragment) {
  json j;
  try {
    j = json::parse(fragment);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("fragment is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("features") || !j.at("features").is_array()) {
    throw Error(ErrorKind::Validation, "fragment must be a FeatureCollection");
  }
  for (json& f : j.at("features")) {
    if (!f.is_object()) throw Error(ErrorKind::Validation, "fragment features must be objects");
    if (!f.contains("properties") || !f.at("properties").is_object()) f["properties"] = json::object();
    f["properties"]["provenance"] = "human_edited";
  }
  return j.dump();
}

void apply_event(std::vector<TaskRecord>& tasks, const std::map<TaskId, std::size_t>& index, const json& ev) {
  const std::string kind = ev.at("kind").get<std::string>();
  const json& p = ev.at("payload");
  const auto it = index.find(p.at("task").get<TaskId>());
  if (it == index.end()) throw Error(ErrorKind::Corruption, "event references unknown task");
  TaskRecord& t = tasks[it->second];
  if (kind == "acquire") {
    t.state = TaskState::Locked;
    t.lock = Lock{p.at("client").get<std::string>(), p.at("nonce").get<std::string>(),
                  p.at("acquired_at").get<std::int64_t>(), p.at("expires_at").get<std::int64_t>()};
  } else if (kind == "relinquish" || kind == "expire") {
    t.state = TaskState::Available;
    t.lock.reset();
  } else if (kind == "commit") {
    t.state = TaskState::Committed;
    t.lock.reset();
    t.comments.push_back(parse_comment(p.at("comment")));
    t.fragments.push_back(p.at("fragment").get<std::string>());
  } else {
    throw Error(ErrorKind::Corruption, "unknown event kind '" + kind + "'");
  }
}

std::vector<TaskRecord> initial_records(const Project& project, std::map<TaskId, std::size_t>& index) {
  std::vector<TaskRecord> out;
  for (const TaskRegion& r : project.tasks) {
    index.emplace(r.id, out.size());
    TaskRecord t;
    t.id = r.id;
    out.push_back(std::move(t));
  }
  return out;
}

void check_seq(const json& ev, std::uint64_t expected) {
  std::uint64_t seq = 0;
  try {
    seq = ev.at("seq").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw CorruptionError(expected, fmt::format("event log: event {} has no sequence number", expected));
  }
  if (seq != expected) {
    throw CorruptionError(expected, fmt::format("event log gap: expected seq {}, found {}", expected, seq));
  }
}

}  // namespace

std::vector<TaskRecord> replay_log(const Project& project, std::span<const json> events) {
  std::map<TaskId, std::size_t> index;
  std::vector<TaskRecord> tasks = initial_records(project, index);
  std::uint64_t expected = 1;
  for (const json& ev : events) {
    check_seq(ev, expected++);
    try {
      apply_event(tasks, index, ev);
    } catch (const json::exception& e) {
      throw CorruptionError(expected - 1, std::string("event log: malformed event: ") + e.what());
    }
  }
  return tasks;
}

std::vector<json> read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open event log " + path.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw CorruptionError(out.size() + 1, "event log: unparsable line: " + std::string(e.what()));
    }
  }
  return out;
}

TaskManager::TaskManager(Project project, TaskManagerOptions options, Clock clock, std::span<const json> prior_events)
    : project_(std::move(project)), options_(std::move(options)), clock_(std::move(clock)), rng_(options_.seed) {
  if (options_.lease_ms <= 0) throw Error(ErrorKind::Config, "lease must be positive");
  tasks_ = initial_records(project_, index_);
  for (const json& ev : prior_events) {
    check_seq(ev, seq_ + 1);
    apply(ev);
    events_.push_back(ev);
    seq_ = ev.at("seq").get<std::uint64_t>();
  }
  if (options_.log_path) {
    log_ = std::fopen(options_.log_path->c_str(), "a");
    if (!log_) throw Error(ErrorKind::Io, "cannot open event log " + options_.log_path->string());
  }
}

TaskManager::~TaskManager() {
  if (log_) std::fclose(log_);
}

TaskRecord* TaskManager::find(TaskId id) {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &tasks_[it->second];
}

void TaskManager::apply(const json& ev) {
  apply_event(tasks_, index_, ev);
  const std::string kind = ev.at("kind").get<std::string>();
  const json& p = ev.at("payload");
  const TaskId task = p.at("task").get<TaskId>();
  const std::string nonce = p.at("nonce").get<std::string>();
  if (kind == "acquire") {
    const std::string client = p.at("client").get<std::string>();
    // A refresh replaces the client's previous nonce on the same task.
    for (auto& [n, info] : nonces_) {
      if (info.task == task && info.end == NonceEnd::Active) info.end = NonceEnd::Released;
    }
    nonces_[nonce] = NonceInfo{task, client, NonceEnd::Active};
    held_[client] = task;
    return;
  }
  auto it = nonces_.find(nonce);
  if (it == nonces_.end()) return;
  it->second.end = kind == "relinquish" ? NonceEnd::Released
                   : kind == "expire"   ? NonceEnd::Expired
                                        : NonceEnd::Committed;
  const auto h = held_.find(it->second.client);
  if (h != held_.end() && h->second == task) held_.erase(h);
}

void TaskManager::append(const std::string& kind, json payload, std::int64_t now, bool sync) {
  json ev{{"seq", seq_ + 1}, {"ts", now}, {"kind", kind}, {"payload", std::move(payload)}};
  apply(ev);
  ++seq_;
  if (log_) {
    const std::string line = ev.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0) {
      throw Error(ErrorKind::Io, "event log write failed");
    }
    if (sync && ::fsync(::fileno(log_)) != 0) throw Error(ErrorKind::Io, "event log fsync failed");
  }
  events_.push_back(std::move(ev));
}

void TaskManager::reap(TaskRecord& t, std::int64_t now) {
  if (t.state == TaskState::Locked && t.lock && now >= t.lock->expires_at) {
    append("expire", {{"task", t.id}, {"nonce", t.lock->nonce}}, now, false);
  }
}

void TaskManager::reap_client(const std::string& client, std::int64_t now) {
  const auto h = held_.find(client);
  if (h == held_.end()) return;
  if (TaskRecord* t = find(h->second)) reap(*t, now);
}

std::string TaskManager::fresh_nonce() {
  for (;;) {
    std::string n = fmt::format("{:016x}", rng_());
    if (!nonces_.contains(n)) return n;
  }
}

TaskResponse TaskManager::finish(OpKind kind, const std::string& client, TaskId task, const std::string& nonce,
                                 std::int64_t now, TaskResponse r) {
  if (options_.observer) {
    OpRecord rec{ops_, kind, client, task, nonce, now, seq_, r};
    options_.observer(rec, tasks_);
  }
  ++ops_;
  return r;
}

TaskResponse TaskManager::acquire(const std::string& client, TaskId task) {
  std::lock_guard lock(mu_);
  const std::int64_t now = clock_();
  TaskResponse r;
  TaskRecord* t = find(task);
  if (!t) {
    r.reason = reason::kNotFound;
    r.message = fmt::format("no task {}", task);
    return finish(OpKind::Acquire, client, task, "", now, r);
  }
  reap(*t, now);
  reap_client(client, now);
  r.state = t->state;
  if (t->state == TaskState::Committed) {
    r.reason = reason::kTaskCommitted;
    r.message = fmt::format("task {} is already committed", task);
  } else if (t->lock && t->lock->client != client) {
    r.reason = reason::kTaskLockedByOther;
    r.message = fmt::format("task {} is locked by another client until {}", task, t->lock->expires_at);
  } else if (!t->lock && held_.contains(client)) {
    r.reason = reason::kClientHoldsOtherLock;
    r.message = fmt::format("relinquish task {} before acquiring another", held_.at(client));
  } else {
    // Fresh grant, or a refresh of the caller's own lock with a new nonce.
    const std::string nonce = fresh_nonce();
    const std::int64_t expires = now + options_.lease_ms;
    append("acquire",
           {{"task", task}, {"client", client}, {"nonce", nonce}, {"acquired_at", now}, {"expires_at", expires}}, now,
           false);
    r.ok = true;
    r.state = TaskState::Locked;
    r.token = LockToken{task, client, nonce, expires};
  }
  return finish(OpKind::Acquire, client, task, "", now, r);
}

TaskResponse TaskManager::relinquish(const LockToken& token) {
  std::lock_guard lock(mu_);
  const std::int64_t now = clock_();
  TaskResponse r;
  TaskRecord* t = find(token.task);
  if (!t) {
    r.reason = reason::kNotFound;
    r.message = fmt::format("no task {}", token.task);
    return finish(OpKind::Relinquish, token.client, token.task, token.nonce, now, r);
  }
  reap(*t, now);
  const auto info = nonces_.find(token.nonce);
  const bool ours = info != nonces_.end() && info->second.task == token.task && info->second.client == token.client;
  if (ours && t->lock && t->lock->nonce == token.nonce) {
    append("relinquish", {{"task", t->id}, {"nonce", token.nonce}}, now, false);
    r.ok = true;
  } else if (ours) {
    r.ok = true;
    r.reason = reason::kAlreadyReleased;
    r.message = "lock was already released";
  } else {
    r.reason = reason::kInvalidToken;
    r.message = "token does not match any lock issued for this task and client";
  }
  r.state = t->state;
  return finish(OpKind::Relinquish, token.client, token.task, token.nonce, now, r);
}

TaskResponse TaskManager::commit(const LockToken& token, const std::string& fragment, const TaskComment& comment) {
  std::lock_guard lock(mu_);
  const std::int64_t now = clock_();
  TaskResponse r;
  TaskRecord* t = find(token.task);
  if (!t) {
    r.reason = reason::kNotFound;
    r.message = fmt::format("no task {}", token.task);
    return finish(OpKind::Commit, token.client, token.task, token.nonce, now, r);
  }
  reap(*t, now);
  const auto info = nonces_.find(token.nonce);
  const bool ours = info != nonces_.end() && info->second.task == token.task && info->second.client == token.client;
  if (ours && t->lock && t->lock->nonce == token.nonce) {
    std::string stamped;
    try {
      stamped = stamp_fragment(fragment);
    } catch (const Error& e) {
      r.reason = reason::kValidation;
      r.message = e.what();
      r.state = t->state;
      r.returned_fragment = fragment;
      return finish(OpKind::Commit, token.client, token.task, token.nonce, now, r);
    }
    append("commit",
           {{"task", t->id}, {"nonce", token.nonce}, {"comment", comment_json(comment)}, {"fragment", stamped}}, now,
           true);
    r.ok = true;
  } else if (ours) {
    r.returned_fragment = fragment;
    switch (info->second.end) {
      case NonceEnd::Expired:
        r.reason = reason::kTokenExpired;
        r.message = "lease expired; edits returned, re-acquire the task and commit again";
        break;
      case NonceEnd::Committed:
        r.reason = reason::kTaskCommitted;
        r.message = "task was already committed with this token";
        break;
      default:
        r.reason = reason::kAlreadyReleased;
        r.message = "lock was released; edits returned, re-acquire the task and commit again";
        break;
    }
  } else {
    r.reason = reason::kInvalidToken;
    r.message = "token does not match any lock issued for this task and client";
  }
  r.state = t->state;
  return finish(OpKind::Commit, token.client, token.task, token.nonce, now, r);
}

TaskResponse TaskManager::status(TaskId task) {
  std::lock_guard lock(mu_);
  const std::int64_t now = clock_();
  TaskResponse r;
  const TaskRecord* t = find(task);
  if (!t) {
    r.reason = reason::kNotFound;
    r.message = fmt::format("no task {}", task);
  } else {
    r.ok = true;
    r.state = t->state_at(now);
  }
  return finish(OpKind::Status, "", task, "", now, r);
}

std::vector<TaskRecord> TaskManager::snapshot() const {
  std::lock_guard lock(mu_);
  return tasks_;
}

std::vector<json> TaskManager::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

}  // namespace pathweaver
