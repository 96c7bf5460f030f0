#pragma once

// Client side of the external-expert wire protocol.
//
// Newline-delimited JSON records over a byte stream (child process stdio or
// a TCP socket). Keys appear in a fixed order and numbers use the shortest
// round-trip representation, so records are byte-stable:
//
//   {"id":1,"op":"info"}
//   {"id":1,"ok":true,"L":3,"V_model":20,"tokens":"ACDEFGHIKLMNPQRSTVWY"}
//   {"id":2,"op":"score_and_grad","sequences":[[0,4,2]]}
//   {"id":2,"ok":true,"values":[1.5],"grads":[[0.25, ...]]}
//   {"id":3,"ok":false,"error":"token index 25 >= V_model 20"}
//   {"id":4,"op":"shutdown"}
//   {"id":4,"ok":true}
//
// Gradients are flattened row-major L x V_model grids in the model's token
// order. Responses may arrive out of order and are matched by id.

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "ppde/error.hpp"
#include "ppde/experts.hpp"
#include "ppde/seqspace.hpp"

namespace ppde::wire {

using ordered_json = nlohmann::ordered_json;

struct Request {
  std::int64_t id = 0;
  std::string op;  // "score_and_grad" | "info" | "shutdown"
  std::vector<std::vector<std::int64_t>> sequences;
  bool operator==(const Request&) const = default;
};

struct Info {
  std::size_t length = 0;
  std::size_t model_vocab_size = 0;
  std::string tokens;
  bool operator==(const Info&) const = default;
};

struct Response {
  std::int64_t id = 0;
  bool ok = true;
  std::vector<double> values;
  std::vector<std::vector<double>> grads;
  std::optional<Info> info;
  std::optional<std::string> error;
  bool operator==(const Response&) const = default;
};

inline bool known_op(std::string_view op) {
  return op == "score_and_grad" || op == "info" || op == "shutdown";
}

inline std::string serialize(const Request& r) {
  ordered_json j;
  j["id"] = r.id;
  j["op"] = r.op;
  if (r.op == "score_and_grad") j["sequences"] = r.sequences;
  return j.dump();
}

inline std::string serialize(const Response& r) {
  ordered_json j;
  j["id"] = r.id;
  j["ok"] = r.ok;
  if (!r.ok) {
    j["error"] = r.error.value_or("");
  } else if (r.info) {
    j["L"] = r.info->length;
    j["V_model"] = r.info->model_vocab_size;
    j["tokens"] = r.info->tokens;
  } else if (!r.values.empty() || !r.grads.empty()) {
    j["values"] = r.values;
    j["grads"] = r.grads;
  }
  return j.dump();
}

namespace detail {

inline ordered_json parse_object(std::string_view line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("malformed JSON record");
  }
  if (!j.is_object()) throw ProtocolError("record is not a JSON object");
  return j;
}

inline std::int64_t get_id(const ordered_json& j) {
  if (!j.contains("id") || !j["id"].is_number_integer()) throw ProtocolError("missing integer id");
  return j["id"].get<std::int64_t>();
}

}  // namespace detail

inline Request parse_request(std::string_view line) {
  const auto j = detail::parse_object(line);
  Request r;
  r.id = detail::get_id(j);
  if (!j.contains("op") || !j["op"].is_string()) throw ProtocolError("missing op");
  r.op = j["op"].get<std::string>();
  if (!known_op(r.op)) throw ProtocolError("unknown op '" + r.op + "'");
  if (r.op == "score_and_grad") {
    if (!j.contains("sequences") || !j["sequences"].is_array()) {
      throw ProtocolError("score_and_grad needs a sequences array");
    }
    try {
      r.sequences = j["sequences"].get<std::vector<std::vector<std::int64_t>>>();
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("sequences must be lists of integers");
    }
  }
  return r;
}

inline Response parse_response(std::string_view line) {
  const auto j = detail::parse_object(line);
  Response r;
  r.id = detail::get_id(j);
  if (!j.contains("ok") || !j["ok"].is_boolean()) throw ProtocolError("missing ok flag");
  r.ok = j["ok"].get<bool>();
  try {
    if (!r.ok) {
      r.error = j.contains("error") ? j["error"].get<std::string>() : std::string();
      return r;
    }
    if (j.contains("tokens")) {
      r.info = Info{j.at("L").get<std::size_t>(), j.at("V_model").get<std::size_t>(),
                    j.at("tokens").get<std::string>()};
    }
    if (j.contains("values")) r.values = j["values"].get<std::vector<double>>();
    if (j.contains("grads")) r.grads = j["grads"].get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("bad response field: ") + e.what());
  }
  if (r.values.size() != r.grads.size()) throw ProtocolError("values and grads differ in length");
  return r;
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void write_line(std::string_view line) = 0;
  // Blocks up to the timeout; throws ExternalExpertFailure on EOF or timeout.
  virtual std::string read_line(std::chrono::milliseconds timeout) = 0;
};

// Line I/O over a pair of file descriptors.
class FdTransport : public Transport {
 public:
  FdTransport(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}
  ~FdTransport() override { close_fds(); }
  FdTransport(const FdTransport&) = delete;
  FdTransport& operator=(const FdTransport&) = delete;

  void write_line(std::string_view line) override {
    std::string buf(line);
    buf.push_back('\n');
    std::size_t off = 0;
    while (off < buf.size()) {
      ssize_t n = write_bytes(buf.data() + off, buf.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ExternalExpertFailure(std::string("write to expert failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw ExternalExpertFailure("timed out waiting for expert response");
      pollfd pfd{read_fd_, POLLIN, 0};
      int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw ExternalExpertFailure(std::string("poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) throw ExternalExpertFailure("timed out waiting for expert response");
      char chunk[4096];
      ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ExternalExpertFailure(std::string("read from expert failed: ") + std::strerror(errno));
      }
      if (n == 0) throw ExternalExpertFailure("expert closed the connection");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 protected:
  virtual ssize_t write_bytes(const char* data, std::size_t n) { return ::write(write_fd_, data, n); }
  void close_fds() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    read_fd_ = write_fd_ = -1;
  }
  int read_fd_;
  int write_fd_;

 private:
  std::string buffer_;
};

// Spawns `/bin/sh -c command` and talks over its stdin/stdout.
class ProcessTransport final : public FdTransport {
 public:
  explicit ProcessTransport(const std::string& command) : FdTransport(-1, -1) {
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) {
      throw ExternalExpertFailure("pipe() failed");
    }
    pid_ = ::fork();
    if (pid_ < 0) throw ExternalExpertFailure("fork() failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    read_fd_ = from_child[0];
    write_fd_ = to_child[1];
    ::fcntl(read_fd_, F_SETFD, FD_CLOEXEC);
    ::fcntl(write_fd_, F_SETFD, FD_CLOEXEC);
  }

  ~ProcessTransport() override {
    close_fds();  // EOF on stdin asks the server to exit
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

 private:
  pid_t pid_ = -1;
};

class TcpTransport final : public FdTransport {
 public:
  TcpTransport(const std::string& host, const std::string& port) : FdTransport(-1, -1) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw ExternalExpertFailure("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
    }
    int fd = -1;
    for (addrinfo* p = res; p; p = p->ai_next) {
      fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw ExternalExpertFailure("cannot connect to " + host + ":" + port);
    read_fd_ = write_fd_ = fd;
  }

 protected:
  ssize_t write_bytes(const char* data, std::size_t n) override {
    return ::send(write_fd_, data, n, MSG_NOSIGNAL);
  }
};

// "exec:<shell command>" or "tcp:<host>:<port>".
inline std::unique_ptr<Transport> connect_endpoint(const std::string& endpoint) {
  if (endpoint.rfind("exec:", 0) == 0) return std::make_unique<ProcessTransport>(endpoint.substr(5));
  if (endpoint.rfind("tcp:", 0) == 0) {
    const std::string rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw InvalidArgument("tcp endpoint needs host:port");
    return std::make_unique<TcpTransport>(rest.substr(0, colon), rest.substr(colon + 1));
  }
  throw InvalidArgument("endpoint must start with exec: or tcp: (got '" + endpoint + "')");
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

// Blocking request/response over one connection. Concurrent callers are
// serialized; replies are matched by id and out-of-order replies buffered.
class Client {
 public:
  explicit Client(std::unique_ptr<Transport> transport,
                  std::chrono::milliseconds timeout = std::chrono::seconds(60))
      : transport_(std::move(transport)), timeout_(timeout) {}

  ~Client() {
    try {
      std::lock_guard lock(mu_);
      transport_->write_line(serialize(Request{next_id_++, "shutdown", {}}));
    } catch (...) {
    }
  }

  Response call(const std::string& op, std::vector<std::vector<std::int64_t>> sequences = {}) {
    std::lock_guard lock(mu_);
    const Request req{next_id_++, op, std::move(sequences)};
    transport_->write_line(serialize(req));
    for (;;) {
      if (auto it = pending_.find(req.id); it != pending_.end()) {
        Response r = std::move(it->second);
        pending_.erase(it);
        return r;
      }
      Response r;
      try {
        r = parse_response(transport_->read_line(timeout_));
      } catch (const ProtocolError& e) {
        throw ExternalExpertFailure(std::string("protocol violation: ") + e.what());
      }
      if (r.id == req.id) return r;
      if (r.id == -1) {
        throw ExternalExpertFailure("expert rejected a request: " + r.error.value_or(""));
      }
      pending_.emplace(r.id, std::move(r));
    }
  }

  Info info() {
    Response r = call("info");
    if (!r.ok || !r.info) throw ExternalExpertFailure("info failed: " + r.error.value_or(""));
    return *r.info;
  }

 private:
  std::unique_ptr<Transport> transport_;
  std::chrono::milliseconds timeout_;
  std::mutex mu_;
  std::int64_t next_id_ = 1;
  std::map<std::int64_t, Response> pending_;
};

// Hands out one connection per concurrent caller. Chains run sequentially,
// so each running chain holds its own connection for the duration of a
// call; idle connections are reused. Without a factory every caller shares
// the seed connection (Client serializes them).
class ClientPool {
 public:
  using Factory = std::function<std::unique_ptr<Transport>()>;

  explicit ClientPool(std::shared_ptr<Client> seed, Factory factory = {})
      : factory_(std::move(factory)) {
    idle_.push_back(std::move(seed));
  }

  static std::shared_ptr<ClientPool> for_endpoint(const std::string& endpoint) {
    return std::make_shared<ClientPool>(std::make_shared<Client>(connect_endpoint(endpoint)),
                                        [endpoint] { return connect_endpoint(endpoint); });
  }

  class Lease {
   public:
    Lease(ClientPool* pool, std::shared_ptr<Client> c) : pool_(pool), client_(std::move(c)) {}
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    ~Lease() {
      if (pool_) pool_->release(std::move(client_));
    }
    Client& operator*() const { return *client_; }
    Client* operator->() const { return client_.get(); }

   private:
    ClientPool* pool_;
    std::shared_ptr<Client> client_;
  };

  Lease acquire() {
    std::unique_lock lock(mu_);
    if (!factory_) return Lease(nullptr, idle_.front());
    if (!idle_.empty()) {
      auto c = std::move(idle_.back());
      idle_.pop_back();
      return Lease(this, std::move(c));
    }
    lock.unlock();
    auto c = std::make_shared<Client>(factory_());
    lock.lock();
    ++opened_;
    return Lease(this, std::move(c));
  }

  // Connections opened beyond the seed.
  std::size_t extra_connections() const {
    std::lock_guard lock(mu_);
    return opened_;
  }

 private:
  void release(std::shared_ptr<Client> c) {
    std::lock_guard lock(mu_);
    idle_.push_back(std::move(c));
  }

  Factory factory_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Client>> idle_;
  std::size_t opened_ = 0;
};

// Expert backed by a wire peer. Sequences are remapped into the model's
// token order; returned gradients are pulled back onto canonical columns.
class ExternalExpert final : public Expert {
 public:
  ExternalExpert(std::shared_ptr<Client> client, const Vocabulary& canonical)
      : ExternalExpert(std::make_shared<ClientPool>(std::move(client)), canonical) {}

  ExternalExpert(std::shared_ptr<ClientPool> pool, const Vocabulary& canonical)
      : pool_(std::move(pool)), info_(pool_->acquire()->info()),
        map_(PermutationMap::from_orders(canonical, info_.tokens)) {
    if (info_.model_vocab_size != info_.tokens.size()) {
      throw ExternalExpertFailure("info V_model disagrees with its token string");
    }
  }

  ExpertKind kind() const override { return ExpertKind::external; }
  std::size_t length() const override { return info_.length; }
  std::size_t vocab_size() const override { return map_.canonical_size(); }
  const Info& info() const noexcept { return info_; }
  const PermutationMap& permutation() const noexcept { return map_; }
  const ClientPool& pool() const noexcept { return *pool_; }

  ScoreGrad score_and_grad(const OneHotSequence& x) const override {
    std::vector<std::int64_t> seq(x.length());
    for (std::size_t i = 0; i < x.length(); ++i) seq[i] = map_.to_model(x.token(i));
    Response r = pool_->acquire()->call("score_and_grad", {std::move(seq)});
    if (!r.ok) throw ExternalExpertFailure("expert error: " + r.error.value_or(""));
    if (r.values.size() != 1 || r.grads.size() != 1) {
      throw ExternalExpertFailure("expected one value and one gradient");
    }
    if (r.grads[0].size() != info_.length * info_.model_vocab_size) {
      throw ExternalExpertFailure("gradient has " + std::to_string(r.grads[0].size()) +
                                  " entries, expected L*V_model");
    }
    Grid model_grad(info_.length, info_.model_vocab_size);
    std::copy(r.grads[0].begin(), r.grads[0].end(), model_grad.data().begin());
    return {r.values[0], pull_back_grid(model_grad, map_)};
  }

 private:
  std::shared_ptr<ClientPool> pool_;
  Info info_;
  PermutationMap map_;
};

}  // namespace ppde::wire
