#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "photon/model.hpp"
#include "photon/session.hpp"

namespace httplib {
class Server;
}

namespace photon {

inline constexpr std::uint16_t kDefaultTransferPort = 48852;
inline constexpr std::size_t kDefaultChunkSize = 64 * 1024;
inline constexpr std::size_t kMinChunkSize = 4096;
inline constexpr std::size_t kMaxChunkSize = 4 * 1024 * 1024;

struct ServerConfig {
    std::string bind_address = "0.0.0.0";
    std::uint16_t transfer_port = kDefaultTransferPort;
    std::size_t chunk_size = kDefaultChunkSize;
    std::size_t max_concurrent_streams = 4;
    // How long stop() lets in-flight bodies run before cutting them off.
    std::chrono::milliseconds stop_grace{5000};
};

/// Throws Error(InvalidConfig).
void validate(const ServerConfig& config);

/// Process-wide accounting of body buffers: at most `slots` buffers of
/// `chunk_size` bytes exist at once.
class ChunkBudget {
public:
    ChunkBudget(std::size_t slots, std::size_t chunk_size) : slots_(slots), chunk_size_(chunk_size) {}

    class Lease {
    public:
        Lease() = default;
        explicit Lease(ChunkBudget* owner);
        Lease(Lease&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)), buffer_(std::move(other.buffer_)) {}
        Lease& operator=(Lease&&) = delete;
        ~Lease();

        explicit operator bool() const noexcept { return owner_ != nullptr; }
        char* data() noexcept { return buffer_.get(); }
        std::size_t size() const noexcept { return owner_ ? owner_->chunk_size_ : 0; }

    private:
        ChunkBudget* owner_ = nullptr;
        std::unique_ptr<char[]> buffer_;
    };

    /// Empty lease when every slot is taken.
    Lease try_acquire();

    std::size_t in_use_bytes() const noexcept { return in_use_.load() * chunk_size_; }
    std::size_t peak_bytes() const noexcept { return peak_.load() * chunk_size_; }
    std::size_t limit_bytes() const noexcept { return slots_ * chunk_size_; }

private:
    const std::size_t slots_;
    const std::size_t chunk_size_;
    std::atomic<std::size_t> in_use_{0};
    std::atomic<std::size_t> peak_{0};
};

/// The sender's HTTP endpoint set:
///   GET  /photon/v1/health
///   POST /photon/v1/request
///   GET  /photon/v1/{code}/index
///   GET  /photon/v1/{code}/file/{ordinal}   (Range supported)
///   POST /photon/v1/{code}/done
/// Anything addressed with a code that is not active gets an empty 404.
class TransferServer {
public:
    TransferServer(ServerConfig config, PeerIdentity identity, ShareSet share, ApprovalPolicy policy,
                   std::chrono::milliseconds decision_timeout = kDefaultDecisionTimeout,
                   std::shared_ptr<RandomSource> rng = std::make_shared<SecureRandom>());
    ~TransferServer();
    TransferServer(const TransferServer&) = delete;
    TransferServer& operator=(const TransferServer&) = delete;

    /// Binds and starts serving; Idle -> Serving. Throws Error(PortInUse).
    void start();
    /// Idempotent. Returns once in-flight bodies finished or the grace ran out.
    void stop();

    bool running() const noexcept { return running_.load(); }
    std::uint16_t port() const noexcept { return config_.transfer_port; }
    const ServerConfig& config() const noexcept { return config_; }
    const PeerIdentity& identity() const noexcept { return identity_; }
    const ShareSet& share() const noexcept { return share_; }
    SessionManager& sessions() noexcept { return sessions_; }
    const ChunkBudget& budget() const noexcept { return budget_; }

    void set_policy(ApprovalPolicy policy) noexcept { policy_.store(policy); }

    std::uint64_t bytes_served() const noexcept { return bytes_served_.load(); }
    /// Ordinals of file requests that were served (2xx), in arrival order.
    std::vector<std::uint64_t> file_request_log() const;

private:
    void install_routes();

    ServerConfig config_;
    PeerIdentity identity_;
    ShareSet share_;
    std::atomic<ApprovalPolicy> policy_;
    std::chrono::milliseconds decision_timeout_;
    SessionManager sessions_;
    ChunkBudget budget_;
    std::unique_ptr<httplib::Server> http_;
    std::thread listener_;
    std::atomic<bool> running_{false};
    std::atomic<bool> stopping_{false};
    std::atomic<std::int64_t> cutoff_ns_{0};
    std::atomic<std::uint64_t> bytes_served_{0};
    mutable std::mutex log_mu_;
    std::vector<std::uint64_t> file_log_;
};

/// A TCP port that was free on `address` a moment ago (bind to port 0).
std::uint16_t pick_free_port(const std::string& address = "127.0.0.1");

/// Constructs and starts a server.
std::unique_ptr<TransferServer> start_server(const ServerConfig& config, const PeerIdentity& identity,
                                             ShareSet share, ApprovalPolicy policy,
                                             std::chrono::milliseconds decision_timeout = kDefaultDecisionTimeout);

}  // namespace photon
