// Line-delimited JSON protocol for the task manager and its Unix socket server.
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "pathweaver/error.hpp"
#include "pathweaver/tasking.hpp"

namespace pathweaver {

using nlohmann::json;

json response_json(const TaskResponse& r) {
  json j{{"ok", r.ok}};
  if (!r.reason.empty()) j["reason"] = r.reason;
  if (!r.message.empty()) j["message"] = r.message;
  if (r.token) {
    j["token"] = {{"task", r.token->task},
                  {"client", r.token->client},
                  {"nonce", r.token->nonce},
                  {"expires_at", r.token->expires_at}};
  }
  if (r.state) j["state"] = to_string(*r.state);
  if (r.returned_fragment) j["fragment"] = *r.returned_fragment;
  return j;
}

namespace {

json error_response(const std::string& reason, const std::string& message) {
  return {{"ok", false}, {"reason", reason}, {"message", message}};
}

LockToken token_of(const json& req) {
  LockToken t;
  t.task = req.at("task").get<TaskId>();
  t.client = req.at("client").get<std::string>();
  t.nonce = req.at("nonce").get<std::string>();
  return t;
}

}  // namespace

std::string handle_request_line(TaskManager& m, std::string_view line) {
  json out;
  try {
    const json req = json::parse(line);
    const std::string op = req.at("op").get<std::string>();
    if (op == "acquire") {
      out = response_json(m.acquire(req.at("client").get<std::string>(), req.at("task").get<TaskId>()));
    } else if (op == "relinquish") {
      out = response_json(m.relinquish(token_of(req)));
    } else if (op == "commit") {
      if (!req.contains("comment")) throw Error(ErrorKind::Validation, "commit needs a comment");
      const TaskComment c = parse_comment(req.at("comment"));
      const json& frag = req.contains("fragment") ? req.at("fragment") : json(nullptr);
      const std::string text = frag.is_string() ? frag.get<std::string>() : frag.dump();
      out = response_json(m.commit(token_of(req), text, c));
    } else if (op == "status") {
      out = response_json(m.status(req.at("task").get<TaskId>()));
    } else {
      out = error_response(reason::kValidation, "unknown op '" + op + "'");
    }
  } catch (const json::exception& e) {
    out = error_response(reason::kValidation, std::string("malformed request: ") + e.what());
  } catch (const Error& e) {
    out = error_response(e.kind() == ErrorKind::NotFound ? reason::kNotFound : reason::kValidation, e.what());
  }
  return out.dump();
}

namespace {

bool write_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    const ssize_t n = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

void serve_connection(TaskManager& m, int fd, const std::atomic<bool>& stop) {
  std::string buf;
  char chunk[4096];
  while (!stop.load()) {
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    if (ready < 0 && errno != EINTR) break;
    if (ready <= 0) continue;
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buf.find('\n')) != std::string::npos) {
      const std::string line = buf.substr(0, nl);
      buf.erase(0, nl + 1);
      if (line.empty()) continue;
      if (!write_all(fd, handle_request_line(m, line) + "\n")) {
        ::close(fd);
        return;
      }
    }
  }
  ::close(fd);
}

}  // namespace

void serve_unix_socket(TaskManager& m, const std::filesystem::path& socket_path, const std::atomic<bool>& stop) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  const std::string path = socket_path.string();
  if (path.size() >= sizeof addr.sun_path) throw Error(ErrorKind::Config, "socket path too long: " + path);
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);

  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorKind::Io, std::string("socket: ") + std::strerror(errno));
  ::unlink(path.c_str());
  if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 128) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw Error(ErrorKind::Io, "cannot listen on " + path + ": " + err);
  }
  std::vector<std::thread> sessions;
  while (!stop.load()) {
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    if (ready <= 0) continue;
    const int client = ::accept(fd, nullptr, nullptr);
    if (client < 0) continue;
    sessions.emplace_back(serve_connection, std::ref(m), client, std::cref(stop));
  }
  for (std::thread& t : sessions) t.join();
  ::close(fd);
  ::unlink(path.c_str());
}

}  // namespace pathweaver
