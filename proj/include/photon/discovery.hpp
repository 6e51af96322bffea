#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <stop_token>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "photon/model.hpp"

namespace photon {

inline constexpr std::uint16_t kDiscoveryPort = 48851;
inline constexpr std::size_t kMaxDatagramBytes = 1024;
inline constexpr std::string_view kDiscoveryMagic = "PHOTON/1";
inline constexpr std::chrono::milliseconds kDefaultDiscoveryWindow{2000};

struct ProbeMessage {
    std::string peer_id;
    std::string display_name;

    friend bool operator==(const ProbeMessage&, const ProbeMessage&) = default;
};

struct AnnounceMessage {
    std::string peer_id;
    std::string display_name;
    Platform platform = Platform::Other;
    std::uint16_t transfer_port = 0;

    friend bool operator==(const AnnounceMessage&, const AnnounceMessage&) = default;
};

using DiscoveryMessage = std::variant<ProbeMessage, AnnounceMessage>;

/// Compact JSON, keys in wire order. Throws Error(Oversize) past 1024 bytes
/// and Error(Malformed) for fields that break the message rules.
std::string encode_message(const DiscoveryMessage& msg);

/// Throws Error(BadMagic | Malformed | UnknownType).
DiscoveryMessage decode_message(std::string_view datagram);

struct Endpoint {
    std::string address;  // dotted IPv4
    std::uint16_t port = 0;

    friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

struct DiscoveredPeer {
    std::string peer_id;
    std::string display_name;
    Platform platform = Platform::Other;
    std::uint16_t transfer_port = 0;
    // Where the announce actually came from; transfers target this host.
    Endpoint source;
    std::chrono::steady_clock::time_point seen_at{};
};

struct ResponderOptions {
    std::uint16_t port = kDiscoveryPort;
    std::string bind_address = "0.0.0.0";
};

/// Answers probes with a unicast announce until stopped. The socket is bound
/// in the constructor (Error(PortInUse) if taken); a background thread
/// serves until stop() or destruction.
class Responder {
public:
    Responder(PeerIdentity identity, std::uint16_t transfer_port, ResponderOptions options = {});
    ~Responder();
    Responder(const Responder&) = delete;
    Responder& operator=(const Responder&) = delete;

    void stop();
    std::uint16_t port() const noexcept { return bound_port_; }
    std::uint64_t announces_sent() const noexcept { return announces_.load(); }
    std::uint64_t datagrams_dropped() const noexcept { return dropped_.load(); }

private:
    void serve(std::stop_token stop);

    PeerIdentity identity_;
    std::uint16_t transfer_port_;
    int fd_ = -1;
    std::uint16_t bound_port_ = 0;
    std::atomic<std::uint64_t> announces_{0};
    std::atomic<std::uint64_t> dropped_{0};
    std::jthread thread_;
};

/// Blocking form: binds, then serves on the calling thread until `stop` is
/// requested. Returns within ~100 ms of the request.
void run_responder(const PeerIdentity& identity, std::uint16_t transfer_port, std::stop_token stop,
                   ResponderOptions options = {});

struct ProbeOptions {
    std::uint16_t port = kDiscoveryPort;
    // Empty: limited broadcast, every interface's broadcast address, and loopback.
    std::vector<std::string> targets;
};

/// Broadcasts one probe, gathers announces for `window`, drops our own id,
/// keeps the latest announce per peer id, sorts by name then id.
std::vector<DiscoveredPeer> probe_and_collect(const PeerIdentity& self, std::chrono::milliseconds window,
                                              const ProbeOptions& options = {});

/// IPv4 broadcast addresses of interfaces that are up. Throws
/// Error(NoInterface) if no IPv4 interface is up at all.
std::vector<std::string> broadcast_targets();

}  // namespace photon
