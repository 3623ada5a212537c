#include "spikesplit/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "spikesplit/error.hpp"

namespace spikesplit {

namespace {

std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

/// false on orderly EOF before any byte; throws RetryableError on partial reads.
bool read_exact(int fd, std::uint8_t* buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw RetryableError("connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw RetryableError(errno_text("recv"));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void write_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t r = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw RetryableError(errno_text("send"));
    }
    sent += static_cast<std::size_t>(r);
  }
}

/// Reads one frame's bytes. Header problems that prevent resynchronisation
/// surface as WireFormatError before the body is read.
std::optional<std::vector<std::uint8_t>> read_frame_bytes(int fd) {
  std::vector<std::uint8_t> buf(kHeaderBytes);
  if (!read_exact(fd, buf.data(), kHeaderBytes)) return std::nullopt;
  const std::size_t total = *frame_size(buf);
  buf.resize(total);
  if (!read_exact(fd, buf.data() + kHeaderBytes, total - kHeaderBytes)) {
    throw RetryableError("connection closed mid-frame");
  }
  return buf;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw std::invalid_argument("endpoint must be host:port, got '" + std::string(text) + "'");
  }
  Endpoint e;
  e.host = std::string(text.substr(0, colon));
  const std::string port(text.substr(colon + 1));
  std::size_t used = 0;
  unsigned long p = 0;
  try {
    p = std::stoul(port, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port.size() || p > 65535) throw std::invalid_argument("bad port in endpoint '" + std::string(text) + "'");
  e.port = static_cast<std::uint16_t>(p);
  return e;
}

std::optional<Endpoint> Endpoint::from_env() {
  const char* v = std::getenv("SPIKESPLIT_ENDPOINT");
  if (!v || !*v) return std::nullopt;
  return parse(v);
}

std::string Endpoint::to_string() const {
  return host + ":" + std::to_string(port);
}

SessionStats& SessionStats::operator+=(const SessionStats& o) {
  frames_sent += o.frames_sent;
  payload_bytes_total += o.payload_bytes_total;
  header_overhead_bytes += o.header_overhead_bytes;
  round_trips += o.round_trips;
  return *this;
}

CloudServer::CloudServer(Endpoint bind) : bind_(std::move(bind)) {}

CloudServer::~CloudServer() { stop(); }

void CloudServer::add_model(std::shared_ptr<const Model> model, std::size_t split) {
  if (running_) throw StateError("add_model after start");
  if (!model) throw std::invalid_argument("null model");
  model->arch().check_split(split);
  models_[{model->arch().id, split}] = std::move(model);
}

void CloudServer::start() {
  if (running_) return;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(bind_.port);
  if (const int rc = ::getaddrinfo(bind_.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw std::runtime_error("cannot resolve " + bind_.to_string() + ": " + ::gai_strerror(rc));
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw std::runtime_error(errno_text("socket"));
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
    const std::string msg = errno_text("bind/listen");
    ::freeaddrinfo(res);
    ::close(fd);
    throw std::runtime_error(msg + " on " + bind_.to_string());
  }
  ::freeaddrinfo(res);
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  listen_fd_ = fd;
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void CloudServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

void CloudServer::wait() {
  while (running_) {
    ::poll(nullptr, 0, 100);
  }
}

void CloudServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 100);
    if (rc <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) continue;
      if (!running_) break;
      continue;
    }
    set_nodelay(fd);
    std::lock_guard lock(mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    conn_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void CloudServer::serve_connection(int fd) {
  try {
    while (running_) {
      std::optional<std::vector<std::uint8_t>> bytes;
      try {
        bytes = read_frame_bytes(fd);
      } catch (const WireFormatError& e) {
        // The header cannot be trusted, so the stream cannot be resynchronised.
        const auto reply = serialize(SpikeFrame::from_error(0, 0, ProtocolCode::malformed_frame, e.what()));
        write_all(fd, reply);
        break;
      }
      if (!bytes) break;
      SpikeFrame reply;
      try {
        reply = handle(deserialize(*bytes));
      } catch (const WireFormatError& e) {
        reply = SpikeFrame::from_error(0, 0, ProtocolCode::malformed_frame, e.what());
      }
      write_all(fd, serialize(reply));
      ++served_;
    }
  } catch (const std::exception&) {
    // Connection-level failure; drop this client only.
  }
  std::lock_guard lock(mu_);
  std::erase(conn_fds_, fd);
  ::close(fd);
}

SpikeFrame CloudServer::handle(const SpikeFrame& req) const {
  if (req.kind != FrameKind::spikes) {
    return SpikeFrame::from_error(req.arch_id, req.split_point, ProtocolCode::unexpected_frame,
                                  "server accepts spike frames only");
  }
  const auto it = models_.find({req.arch_id, req.split_point});
  if (it == models_.end()) {
    return SpikeFrame::from_error(req.arch_id, req.split_point, ProtocolCode::unknown_model,
                                  "no model for arch id " + std::to_string(req.arch_id) + " split " +
                                      std::to_string(req.split_point));
  }
  const Model& model = *it->second;
  const Shape3 expected = model.transmitted_shape(req.split_point);
  const Shape3 got{req.c, req.h, req.w};
  if (got != expected || req.timesteps == 0) {
    return SpikeFrame::from_error(req.arch_id, req.split_point, ProtocolCode::shape_mismatch,
                                  "split " + std::to_string(req.split_point) + " expects " +
                                      spikesplit::to_string(expected) + ", frame declares " +
                                      spikesplit::to_string(got) + " T=" + std::to_string(req.timesteps));
  }
  try {
    const Tensor logits = model.run_cloud(req.spikes().unpack(), req.split_point);
    std::vector<float> out(logits.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(logits[i]);
    return SpikeFrame::from_logits(req.arch_id, req.split_point, out);
  } catch (const std::exception& e) {
    return SpikeFrame::from_error(req.arch_id, req.split_point, ProtocolCode::internal, e.what());
  }
}

EdgeClient::EdgeClient(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}

EdgeClient::~EdgeClient() { close(); }

void EdgeClient::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void EdgeClient::ensure_connected() {
  if (fd_ >= 0) return;
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(endpoint_.port);
  if (const int rc = ::getaddrinfo(endpoint_.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw RetryableError("cannot resolve " + endpoint_.to_string() + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw RetryableError("cannot connect to " + endpoint_.to_string());
  set_nodelay(fd);
  fd_ = fd;
}

SpikeFrame EdgeClient::request_raw(std::span<const std::uint8_t> bytes) {
  ensure_connected();
  try {
    write_all(fd_, bytes);
    auto reply = read_frame_bytes(fd_);
    if (!reply) throw RetryableError("server closed the connection");
    ++stats_.round_trips;
    return deserialize(*reply);
  } catch (const RetryableError&) {
    close();
    throw;
  } catch (const WireFormatError& e) {
    close();
    throw ProtocolError(ProtocolCode::malformed_frame, std::string("malformed reply: ") + e.what());
  }
}

SpikeFrame EdgeClient::request(const SpikeFrame& frame) {
  const auto bytes = serialize(frame);
  SpikeFrame reply = request_raw(bytes);
  ++stats_.frames_sent;
  stats_.payload_bytes_total += frame.payload.size();
  stats_.header_overhead_bytes += kFrameOverhead;
  return reply;
}

std::vector<float> edge_infer(EdgeClient& client, const Model& model, std::size_t split, const Tensor& image,
                              std::size_t timesteps) {
  Tensor batch = image;
  if (image.rank() == 3) batch = image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
  if (batch.rank() != 4 || batch.dim(0) != 1) {
    throw ShapeError("edge_infer takes one image, got " + dims_to_string(image.dims()));
  }
  const Tensor spikes = model.run_edge(batch, timesteps, split);
  const auto frame = SpikeFrame::from_spikes(model.arch().id, split, SpikeTensor::pack(spikes));
  const SpikeFrame reply = client.request(frame);
  if (reply.kind == FrameKind::error) {
    throw ProtocolError(reply.error_code(), "server error (" + std::string(to_string(reply.error_code())) +
                                                "): " + reply.error_message());
  }
  if (reply.kind != FrameKind::logits) throw ProtocolError(ProtocolCode::unexpected_frame, "expected logits frame");
  return reply.logits();
}

std::vector<float> local_logits(const Model& model, const Tensor& image, std::size_t timesteps) {
  Tensor batch = image;
  if (image.rank() == 3) batch = image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
  const Tensor logits = model.infer(batch, timesteps);
  std::vector<float> out(logits.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(logits[i]);
  return out;
}

}  // namespace spikesplit
