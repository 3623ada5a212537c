#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "spikesplit/network.hpp"
#include "spikesplit/wire.hpp"

namespace spikesplit {

/// host:port. Port 0 asks the server for an ephemeral port.
struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  static Endpoint parse(std::string_view text);
  /// $SPIKESPLIT_ENDPOINT when set.
  static std::optional<Endpoint> from_env();
  std::string to_string() const;
};

/// Transport failure worth retrying on a fresh connection.
class RetryableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The peer answered with an error frame or an unexpected frame.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ProtocolCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ProtocolCode code() const { return code_; }

 private:
  ProtocolCode code_;
};

struct SessionStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t payload_bytes_total = 0;
  std::uint64_t header_overhead_bytes = 0;
  std::uint64_t round_trips = 0;

  SessionStats& operator+=(const SessionStats& o);
  friend bool operator==(const SessionStats&, const SessionStats&) = default;
};

/// Serves the cloud half of one or more split models over TCP.
///
/// Each connection gets its own thread and handles one request at a time.
/// Models are shared read-only across connections.
class CloudServer {
 public:
  explicit CloudServer(Endpoint bind = {});
  ~CloudServer();
  CloudServer(const CloudServer&) = delete;
  CloudServer& operator=(const CloudServer&) = delete;

  /// Registers the suffix of `model` for frames tagged (arch id, split). Call before start().
  void add_model(std::shared_ptr<const Model> model, std::size_t split);

  void start();
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();
  bool running() const { return running_; }
  std::uint16_t port() const { return port_; }
  std::uint64_t requests_served() const { return served_; }

 private:
  void accept_loop();
  void serve_connection(int fd);
  SpikeFrame handle(const SpikeFrame& request) const;

  Endpoint bind_;
  std::map<std::pair<std::uint16_t, std::size_t>, std::shared_ptr<const Model>> models_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> served_{0};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> workers_;
};

/// Synchronous edge-side client; reconnects lazily after a transport failure.
class EdgeClient {
 public:
  explicit EdgeClient(Endpoint endpoint);
  ~EdgeClient();
  EdgeClient(const EdgeClient&) = delete;
  EdgeClient& operator=(const EdgeClient&) = delete;

  /// Sends one frame and waits for the reply frame. Updates stats on success.
  SpikeFrame request(const SpikeFrame& frame);
  /// Raw bytes out, one reply frame back (for protocol testing).
  SpikeFrame request_raw(std::span<const std::uint8_t> bytes);

  const SessionStats& stats() const { return stats_; }
  void close();

 private:
  void ensure_connected();

  Endpoint endpoint_;
  int fd_ = -1;
  SessionStats stats_;
};

/// Runs the edge half of `model` at `split` on one image (C, H, W) or (1, C, H, W),
/// ships the spikes and returns the server's float32 logits.
std::vector<float> edge_infer(EdgeClient& client, const Model& model, std::size_t split, const Tensor& image,
                              std::size_t timesteps);

/// Monolithic logits rounded to float32, the precision used on the wire.
std::vector<float> local_logits(const Model& model, const Tensor& image, std::size_t timesteps);

}  // namespace spikesplit
