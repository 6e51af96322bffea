#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "photon/client.hpp"
#include "photon/discovery.hpp"
#include "photon/history.hpp"
#include "photon/server.hpp"
#include "photon/session.hpp"

namespace httplib {
class Server;
}

namespace photon {

inline constexpr std::uint16_t kDefaultControlPort = 48853;
inline constexpr std::string_view kVersion = "1.0.0";

struct AppConfig {
    std::string display_name;
    std::uint16_t transfer_port = kDefaultTransferPort;
    std::uint16_t control_port = kDefaultControlPort;
    std::uint16_t discovery_port = kDiscoveryPort;
    std::filesystem::path download_dir;
    ApprovalPolicy approval_policy = ApprovalPolicy::Manual;
    std::size_t chunk_size = kDefaultChunkSize;
    std::chrono::milliseconds decision_timeout = kDefaultDecisionTimeout;
    std::filesystem::path history_path;
    std::filesystem::path ui_dir;  // static assets served at "/"
    // Bearer token for the control API; empty disables the check.
    std::string control_token;
};

/// Ports distinct and nonzero, download_dir creatable and writable.
/// Throws Error(InvalidConfig).
void validate(const AppConfig& config);

/// Fan-out of control-plane events to any number of subscribers. Events are
/// delivered to every subscriber in publish order.
class EventBus {
public:
    struct Subscriber {
        std::mutex mu;
        std::condition_variable cv;
        std::deque<std::string> queue;
        bool closed = false;
    };

    std::shared_ptr<Subscriber> subscribe();
    void unsubscribe(const std::shared_ptr<Subscriber>& sub);
    /// {"type":..., "session":..., "data":...}
    void publish(std::string_view type, std::string_view session, nlohmann::json data);
    void close_all();
    std::uint64_t published() const noexcept { return published_.load(); }

private:
    std::mutex mu_;
    std::vector<std::shared_ptr<Subscriber>> subs_;
    std::atomic<std::uint64_t> published_{0};
};

/// Long-running node: the loopback control API plus whatever share and
/// receive pipelines it was asked to run.
class Daemon {
public:
    Daemon(AppConfig config, PeerIdentity identity);
    ~Daemon();
    Daemon(const Daemon&) = delete;
    Daemon& operator=(const Daemon&) = delete;

    /// Binds 127.0.0.1:control_port. Throws Error(PortInUse).
    void start();
    void stop();
    /// Blocks until stop() is called from elsewhere.
    void wait();

    const AppConfig& config() const noexcept { return config_; }
    const PeerIdentity& identity() const noexcept { return identity_; }
    EventBus& events() noexcept { return bus_; }
    HistoryStore& history() noexcept { return history_; }

private:
    struct Share;
    struct Fetch;

    void install_routes();
    nlohmann::json state_json();
    nlohmann::json transfers_json();
    void start_share(const std::vector<std::filesystem::path>& paths);
    void stop_share();
    void progress_ticker(std::stop_token stop);
    void start_fetch(const DiscoveredPeer& peer, const std::filesystem::path& dest, const std::string& id);
    void record(const HistoryRecord& record);

    AppConfig config_;
    PeerIdentity identity_;
    EventBus bus_;
    HistoryStore history_;
    std::unique_ptr<httplib::Server> http_;
    std::thread listener_;
    std::atomic<bool> running_{false};

    std::mutex mu_;
    std::condition_variable stopped_cv_;
    std::unique_ptr<Share> share_;
    std::map<std::string, std::shared_ptr<Fetch>> fetches_;
    std::vector<DiscoveredPeer> last_peers_;
    std::jthread ticker_;
};

}  // namespace photon
