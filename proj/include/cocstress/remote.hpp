// Copyright 2026 The cocstress Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Backends that talk to an out-of-process model adapter: a long-lived child
// process speaking line-delimited JSON on stdin/stdout, or an HTTP endpoint
// accepting one JSON request per POST.

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <future>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "cocstress/modelio.hpp"

extern char ** environ;

namespace cocstress
{

/// Fills `request.frames` for a remote backend: inline base64 PPM payloads,
/// or the given on-disk paths.
inline std::vector<FramePayload> inline_payloads(std::span<const Image> frames)
{
  std::vector<FramePayload> out;
  out.reserve(frames.size());
  for (const auto & f : frames) {
    FramePayload p;
    p.inline_ppm_base64 = base64_encode(encode_ppm(f));
    out.push_back(std::move(p));
  }
  return out;
}

class StdioBackend : public Backend
{
public:
  /// `argv[0]` is resolved through PATH.
  explicit StdioBackend(std::vector<std::string> argv, int timeout_ms = 120000)
  : timeout_ms_(timeout_ms)
  {
    if (argv.empty()) {
      throw ConfigError("stdio backend: empty command");
    }
    // A dead child must surface as a connection error, not kill the harness.
    ::signal(SIGPIPE, SIG_IGN);
    spawn(argv);
    reader_ = std::thread([this] { read_loop(); });
  }

  StdioBackend(const StdioBackend &) = delete;
  StdioBackend & operator=(const StdioBackend &) = delete;

  ~StdioBackend() override
  {
    {
      std::lock_guard<std::mutex> lk(write_mu_);
      if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
      }
    }
    int status = 0;
    bool exited = false;
    for (int i = 0; i < 100 && !exited; ++i) {
      exited = ::waitpid(pid_, &status, WNOHANG) == pid_;
      if (!exited) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    if (!exited) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
    if (reader_.joinable()) reader_.join();
    if (from_child_ >= 0) ::close(from_child_);
  }

  InferenceResponse infer(const InferenceJob & job) override
  {
    InferenceRequest req = job.request;
    validate_request(req);
    req.id = fmt::format("r{}", next_id_.fetch_add(1));

    std::future<std::string> reply;
    {
      std::lock_guard<std::mutex> lk(pending_mu_);
      if (closed_) {
        throw BackendError(BackendErrorCode::connection_failure, "adapter process has exited: " + close_reason_);
      }
      reply = pending_[req.id].get_future();
    }
    const auto start = std::chrono::steady_clock::now();
    const std::string line = serialize_request(req) + "\n";
    if (!write_all(line)) {
      drop(req.id);
      throw BackendError(BackendErrorCode::connection_failure, "write to adapter failed");
    }
    if (reply.wait_for(std::chrono::milliseconds(timeout_ms_)) != std::future_status::ready) {
      drop(req.id);
      throw BackendError(
        BackendErrorCode::timeout,
        fmt::format("clip '{}': no reply within {} ms", req.clip_id, timeout_ms_));
    }
    const std::string text = reply.get();  // rethrows routed BackendErrors
    const double elapsed =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return decode_response(req, text, elapsed);
  }

  bool needs_frame_payloads() const override { return true; }
  std::string name() const override { return "stdio"; }

private:
  void spawn(const std::vector<std::string> & argv)
  {
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) {
      throw BackendError(BackendErrorCode::connection_failure, std::string("pipe: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&fa, out_pipe[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&fa, in_pipe[1]);
    posix_spawn_file_actions_addclose(&fa, out_pipe[0]);

    std::vector<char *> args;
    for (const auto & a : argv) args.push_back(const_cast<char *>(a.c_str()));
    args.push_back(nullptr);
    const int rc = ::posix_spawnp(&pid_, args[0], &fa, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
      ::close(in_pipe[1]);
      ::close(out_pipe[0]);
      throw BackendError(
        BackendErrorCode::connection_failure, "cannot start adapter '" + argv[0] + "': " + std::strerror(rc));
    }
    ::fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
  }

  bool write_all(const std::string & s)
  {
    std::lock_guard<std::mutex> lk(write_mu_);
    if (to_child_ < 0) return false;
    std::size_t off = 0;
    while (off < s.size()) {
      const ssize_t n = ::write(to_child_, s.data() + off, s.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  void drop(const std::string & id)
  {
    std::lock_guard<std::mutex> lk(pending_mu_);
    pending_.erase(id);
  }

  void fail(std::promise<std::string> & p, BackendErrorCode code, const std::string & msg)
  {
    p.set_exception(std::make_exception_ptr(BackendError(code, msg)));
  }

  void route(const std::string & line)
  {
    std::lock_guard<std::mutex> lk(pending_mu_);
    if (pending_.empty()) return;  // late reply to a timed-out request
    std::string id;
    try {
      id = parse_wire_message(line).id();
    } catch (const BackendError &) {
      // Unparseable: charge it to the oldest outstanding request.
      auto it = oldest();
      fail(it->second, BackendErrorCode::malformed_response, "unparseable reply: " + line.substr(0, 200));
      pending_.erase(it);
      return;
    }
    auto it = pending_.find(id);
    if (it == pending_.end()) {
      if (!id.empty()) return;
      it = oldest();
    }
    it->second.set_value(line);
    pending_.erase(it);
  }

  std::map<std::string, std::promise<std::string>>::iterator oldest()
  {
    auto best = pending_.begin();
    auto seq = [](const std::string & id) { return std::stoull(id.substr(1)); };
    for (auto it = pending_.begin(); it != pending_.end(); ++it) {
      if (seq(it->first) < seq(best->first)) best = it;
    }
    return best;
  }

  void read_loop()
  {
    std::string buf;
    char chunk[65536];
    while (true) {
      const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t pos;
      while ((pos = buf.find('\n')) != std::string::npos) {
        std::string line = buf.substr(0, pos);
        buf.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) route(line);
      }
    }
    std::lock_guard<std::mutex> lk(pending_mu_);
    closed_ = true;
    close_reason_ = "stdout closed";
    for (auto & [id, p] : pending_) {
      fail(p, BackendErrorCode::connection_failure, "adapter closed its output before replying");
    }
    pending_.clear();
  }

  int timeout_ms_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::thread reader_;
  std::mutex write_mu_;
  std::mutex pending_mu_;
  std::map<std::string, std::promise<std::string>> pending_;
  bool closed_ = false;
  std::string close_reason_;
  std::atomic<std::uint64_t> next_id_{0};
};

/// Splits "http://host:port/path" into the client base and request path.
struct HttpEndpoint
{
  std::string base;  // scheme://host:port
  std::string path = "/infer";

  static HttpEndpoint parse(const std::string & url)
  {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos || url.substr(0, scheme_end) != "http") {
      throw ConfigError("endpoint must be an http:// URL, got '" + url + "'");
    }
    HttpEndpoint e;
    const auto slash = url.find('/', scheme_end + 3);
    e.base = url.substr(0, slash);
    if (slash != std::string::npos && slash + 1 < url.size()) e.path = url.substr(slash);
    if (e.base.size() <= scheme_end + 3) {
      throw ConfigError("endpoint has no host: '" + url + "'");
    }
    return e;
  }
};

class HttpBackend : public Backend
{
public:
  HttpBackend(const std::string & endpoint, int timeout_ms = 120000, int retries = 2)
  : endpoint_(HttpEndpoint::parse(endpoint)), timeout_ms_(timeout_ms), retries_(retries)
  {
  }

  InferenceResponse infer(const InferenceJob & job) override
  {
    InferenceRequest req = job.request;
    validate_request(req);
    req.id = fmt::format("h{}", next_id_.fetch_add(1));
    const std::string body = serialize_request(req);

    for (int attempt = 0;; ++attempt) {
      httplib::Client cli(endpoint_.base);
      const auto to = std::chrono::milliseconds(timeout_ms_);
      cli.set_connection_timeout(to);
      cli.set_read_timeout(to);
      cli.set_write_timeout(to);

      const auto start = std::chrono::steady_clock::now();
      auto res = cli.Post(endpoint_.path, body, "application/json");
      const double elapsed =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (!res) {
        const auto err = res.error();
        const bool timed_out =
          err == httplib::Error::ConnectionTimeout ||
          (err == httplib::Error::Read && elapsed >= 0.9 * timeout_ms_);
        const auto code = timed_out ? BackendErrorCode::timeout : BackendErrorCode::connection_failure;
        if (attempt < retries_ && code == BackendErrorCode::connection_failure) {
          std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
          continue;
        }
        throw BackendError(
          code, fmt::format("clip '{}': {} ({})", req.clip_id, httplib::to_string(err), endpoint_.base));
      }
      if (res->status != 200) {
        std::string detail = fmt::format("HTTP {}", res->status);
        try {
          auto msg = parse_wire_message(res->body);
          if (msg.error) detail += ": " + msg.error->code + ": " + msg.error->message;
        } catch (const BackendError &) {
        }
        throw BackendError(BackendErrorCode::remote_error, fmt::format("clip '{}': {}", req.clip_id, detail));
      }
      return decode_response(req, res->body, elapsed);
    }
  }

  bool needs_frame_payloads() const override { return true; }
  std::string name() const override { return "http"; }

private:
  HttpEndpoint endpoint_;
  int timeout_ms_;
  int retries_;
  std::atomic<std::uint64_t> next_id_{0};
};

}  // namespace cocstress
