#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "photon/discovery.hpp"
#include "photon/model.hpp"
#include "photon/session.hpp"
#include "photon/state.hpp"

namespace photon {

struct PermissionResult {
    enum class Kind { Granted, Denied, TimedOut };
    Kind kind = Kind::Denied;
    std::optional<SecretCode> code;
    std::string index_path;
};

struct FileReport {
    std::uint64_t ordinal = 0;
    std::string name;
    std::filesystem::path path;  // final file, or the .part when unverified
    std::uint64_t bytes_received = 0;
    double duration = 0.0;  // seconds, monotonic
    bool sha256_ok = false;
    bool resumed = false;
    std::optional<std::string> error;
};

struct TransferReport {
    std::vector<FileReport> files;
    std::uint64_t total_bytes = 0;
    double wall_duration = 0.0;
    double mean_throughput = 0.0;  // bytes per second
};

/// Recomputes the aggregate fields from `files` and the wall time.
void finalize_report(TransferReport& report, double wall_seconds);

struct ReceiveEvent {
    // state | transfer_progress | file_done
    std::string type;
    ReceiverState state = ReceiverState::Discovering;
    std::uint64_t ordinal = 0;
    std::string name;
    std::uint64_t file_bytes = 0;
    std::uint64_t file_size = 0;
    std::uint64_t total_done = 0;
    std::uint64_t total_bytes = 0;
    double throughput = 0.0;  // bytes per second over the current file
    std::string detail;
};
using ReceiveObserver = std::function<void(const ReceiveEvent&)>;

/// Counters another thread may read at any time.
struct ReceiveProgress {
    std::atomic<ReceiverState> state{ReceiverState::Discovering};
    std::atomic<std::uint64_t> ordinal{0};
    std::atomic<std::uint64_t> bytes_done{0};
    std::atomic<std::uint64_t> total_bytes{0};
};

struct ClientOptions {
    std::chrono::milliseconds connect_timeout{3000};
    // Handshake replies can wait for a human; keep this above the sender's decision timeout.
    std::chrono::milliseconds handshake_timeout{kDefaultDecisionTimeout + std::chrono::seconds(5)};
    std::chrono::milliseconds read_timeout{15000};
    std::chrono::milliseconds progress_interval{100};
    ReceiveObserver observer;
    ReceiveProgress* progress = nullptr;
    // Set from another thread to abandon the transfer.
    const std::atomic<bool>* cancel = nullptr;
    // Test hook: drop the connection once this many body bytes arrived in one download.
    std::optional<std::uint64_t> abort_after_bytes;
};

/// POST /photon/v1/request. Throws Error(ConnectError | ProtocolError | Busy).
PermissionResult request_permission(const DiscoveredPeer& peer, const PeerIdentity& self,
                                    std::chrono::milliseconds timeout);

/// Throws Error(AuthError) on 404, Error(ProtocolError) on an invalid index.
FileIndex fetch_index(const DiscoveredPeer& peer, const SecretCode& code,
                      const ClientOptions& options = {});

/// Streams one entry into dest_dir/<name>.part, verifies, renames.
/// Throws Error(ChecksumMismatch | AuthError | IoError | Interrupted | ConnectError | ProtocolError).
FileReport download_file(const DiscoveredPeer& peer, const SecretCode& code, const FileEntry& entry,
                         const std::filesystem::path& dest_dir, bool resume, const ClientOptions& options = {});

/// POST done. Returns false if the sender did not acknowledge.
bool send_done(const DiscoveredPeer& peer, const SecretCode& code, const ClientOptions& options = {});

struct ReceiveOutcome {
    enum class Kind { Done, Denied, Failed };
    Kind kind = Kind::Failed;
    ReceiverState state = ReceiverState::Discovering;
    FileIndex index;
    TransferReport report;
    std::string reason;  // set when Failed
};

/// request -> index -> every file in ordinal order -> done.
ReceiveOutcome receive_all(const DiscoveredPeer& peer, const PeerIdentity& self,
                           const std::filesystem::path& dest_dir, const ClientOptions& options = {});

/// "name.ext" -> "name (1).ext", "name (2).ext", ... until free in `dir`.
std::filesystem::path unique_destination(const std::filesystem::path& dir, const std::string& name);

/// Peer record for a sender known by address rather than discovery.
DiscoveredPeer direct_peer(const std::string& host, std::uint16_t port);

}  // namespace photon
