#include "photon/discovery.hpp"

#include <arpa/inet.h>
#include <ifaddrs.h>
#include <net/if.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstring>
#include <map>
#include <tuple>

#include "json.hpp"
#include "photon/error.hpp"

namespace photon {

using ojson = nlohmann::ordered_json;

namespace {

struct FdGuard {
    int fd;
    ~FdGuard() {
        if (fd >= 0) ::close(fd);
    }
};

void check_fields(std::string_view peer_id, std::string_view name) {
    if (!is_lower_hex(peer_id, 32)) throw Error(Errc::Malformed, "peer_id must be 32 lowercase hex");
    if (name.size() > kMaxDisplayNameBytes) throw Error(Errc::Oversize, "display_name longer than 64 bytes");
}

sockaddr_in make_addr(const std::string& address, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1) {
        throw Error(Errc::InvalidConfig, "not an IPv4 address: " + address);
    }
    return addr;
}

Endpoint endpoint_of(const sockaddr_in& addr) {
    std::array<char, INET_ADDRSTRLEN> buf{};
    ::inet_ntop(AF_INET, &addr.sin_addr, buf.data(), buf.size());
    return Endpoint{buf.data(), ntohs(addr.sin_port)};
}

int bind_udp(const std::string& address, std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw Error(Errc::IoError, std::string("socket: ") + std::strerror(errno));
    auto addr = make_addr(address, port);
    if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        int err = errno;
        ::close(fd);
        if (err == EADDRINUSE) throw Error(Errc::PortInUse, std::to_string(port));
        throw Error(Errc::IoError, std::string("bind: ") + std::strerror(err));
    }
    return fd;
}

}  // namespace

std::string encode_message(const DiscoveryMessage& msg) {
    ojson j;
    j["magic"] = std::string(kDiscoveryMagic);
    if (const auto* probe = std::get_if<ProbeMessage>(&msg)) {
        check_fields(probe->peer_id, probe->display_name);
        j["type"] = "probe";
        j["peer_id"] = probe->peer_id;
        j["display_name"] = probe->display_name;
    } else {
        const auto& ann = std::get<AnnounceMessage>(msg);
        check_fields(ann.peer_id, ann.display_name);
        if (ann.transfer_port == 0) throw Error(Errc::Malformed, "transfer_port must be nonzero");
        j["type"] = "announce";
        j["peer_id"] = ann.peer_id;
        j["display_name"] = ann.display_name;
        j["platform"] = std::string(to_string(ann.platform));
        j["transfer_port"] = ann.transfer_port;
    }
    std::string out;
    try {
        out = j.dump();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Malformed, e.what());
    }
    if (out.size() > kMaxDatagramBytes) throw Error(Errc::Oversize, std::to_string(out.size()) + " bytes");
    return out;
}

DiscoveryMessage decode_message(std::string_view datagram) {
    if (datagram.size() > kMaxDatagramBytes) throw Error(Errc::Malformed, "datagram over 1024 bytes");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(datagram);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Malformed, e.what());
    }
    if (!j.is_object()) throw Error(Errc::Malformed, "not a JSON object");
    auto magic = j.find("magic");
    if (magic == j.end() || !magic->is_string() || magic->get<std::string>() != kDiscoveryMagic) {
        throw Error(Errc::BadMagic, "magic mismatch");
    }
    try {
        auto type = j.at("type").get<std::string>();
        auto peer_id = j.at("peer_id").get<std::string>();
        auto name = j.at("display_name").get<std::string>();
        if (!is_lower_hex(peer_id, 32)) throw Error(Errc::Malformed, "peer_id must be 32 lowercase hex");
        if (name.size() > kMaxDisplayNameBytes) throw Error(Errc::Malformed, "display_name too long");
        if (type == "probe") return ProbeMessage{std::move(peer_id), std::move(name)};
        if (type == "announce") {
            auto platform = platform_from_string(j.at("platform").get<std::string>());
            auto port = j.at("transfer_port").get<std::int64_t>();
            if (port < 1 || port > 65535) throw Error(Errc::Malformed, "transfer_port out of range");
            return AnnounceMessage{std::move(peer_id), std::move(name), platform, static_cast<std::uint16_t>(port)};
        }
        throw Error(Errc::UnknownType, type);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Malformed, e.what());
    }
}

Responder::Responder(PeerIdentity identity, std::uint16_t transfer_port, ResponderOptions options)
    : identity_(std::move(identity)), transfer_port_(transfer_port) {
    fd_ = bind_udp(options.bind_address, options.port);
    sockaddr_in local{};
    socklen_t len = sizeof local;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&local), &len);
    bound_port_ = ntohs(local.sin_port);
    thread_ = std::jthread([this](std::stop_token stop) { serve(stop); });
}

Responder::~Responder() {
    stop();
    if (fd_ >= 0) ::close(fd_);
}

void Responder::stop() {
    if (thread_.joinable()) {
        thread_.request_stop();
        thread_.join();
    }
}

void Responder::serve(std::stop_token stop) {
    const auto announce = encode_message(
        AnnounceMessage{identity_.peer_id, identity_.display_name, identity_.platform, transfer_port_});
    std::array<char, 2048> buf{};
    while (!stop.stop_requested()) {
        pollfd pfd{fd_, POLLIN, 0};
        int ready = ::poll(&pfd, 1, 100);
        if (ready <= 0) continue;
        sockaddr_in from{};
        socklen_t from_len = sizeof from;
        auto got = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &from_len);
        if (got < 0) continue;
        try {
            auto msg = decode_message(std::string_view(buf.data(), static_cast<std::size_t>(got)));
            const auto* probe = std::get_if<ProbeMessage>(&msg);
            if (probe == nullptr || probe->peer_id == identity_.peer_id) {
                ++dropped_;
                continue;
            }
        } catch (const Error&) {
            ++dropped_;
            continue;
        }
        if (::sendto(fd_, announce.data(), announce.size(), 0, reinterpret_cast<const sockaddr*>(&from),
                     from_len) >= 0) {
            ++announces_;
        }
    }
}

void run_responder(const PeerIdentity& identity, std::uint16_t transfer_port, std::stop_token stop,
                   ResponderOptions options) {
    Responder responder(identity, transfer_port, std::move(options));
    while (!stop.stop_requested()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    responder.stop();
}

std::vector<std::string> broadcast_targets() {
    ifaddrs* list = nullptr;
    if (::getifaddrs(&list) != 0) throw Error(Errc::NoInterface, std::strerror(errno));
    std::vector<std::string> out;
    bool any_ipv4 = false;
    for (auto* it = list; it != nullptr; it = it->ifa_next) {
        if (it->ifa_addr == nullptr || it->ifa_addr->sa_family != AF_INET) continue;
        if ((it->ifa_flags & IFF_UP) == 0) continue;
        any_ipv4 = true;
        if ((it->ifa_flags & IFF_BROADCAST) != 0 && it->ifa_broadaddr != nullptr) {
            auto addr = endpoint_of(*reinterpret_cast<const sockaddr_in*>(it->ifa_broadaddr)).address;
            if (std::find(out.begin(), out.end(), addr) == out.end()) out.push_back(addr);
        }
    }
    ::freeifaddrs(list);
    if (!any_ipv4) throw Error(Errc::NoInterface, "no IPv4 interface is up");
    return out;
}

std::vector<DiscoveredPeer> probe_and_collect(const PeerIdentity& self, std::chrono::milliseconds window,
                                              const ProbeOptions& options) {
    if (window.count() <= 0) throw Error(Errc::InvalidConfig, "discovery window must be positive");

    std::vector<std::string> targets = options.targets;
    if (targets.empty()) {
        targets.push_back("255.255.255.255");
        for (auto& b : broadcast_targets()) targets.push_back(std::move(b));
        targets.push_back("127.0.0.1");
    }

    FdGuard sock{bind_udp("0.0.0.0", 0)};
    int yes = 1;
    ::setsockopt(sock.fd, SOL_SOCKET, SO_BROADCAST, &yes, sizeof yes);

    const auto probe = encode_message(ProbeMessage{self.peer_id, self.display_name});
    for (const auto& target : targets) {
        auto addr = make_addr(target, options.port);
        // Unreachable targets (no default route, etc.) are skipped.
        ::sendto(sock.fd, probe.data(), probe.size(), 0, reinterpret_cast<const sockaddr*>(&addr), sizeof addr);
    }

    std::map<std::string, DiscoveredPeer> latest;
    std::array<char, 2048> buf{};
    const auto deadline = std::chrono::steady_clock::now() + window;
    for (;;) {
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) break;
        pollfd pfd{sock.fd, POLLIN, 0};
        if (::poll(&pfd, 1, static_cast<int>(remaining.count())) <= 0) continue;
        sockaddr_in from{};
        socklen_t from_len = sizeof from;
        auto got = ::recvfrom(sock.fd, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &from_len);
        if (got < 0) continue;
        try {
            auto msg = decode_message(std::string_view(buf.data(), static_cast<std::size_t>(got)));
            auto* ann = std::get_if<AnnounceMessage>(&msg);
            if (ann == nullptr || ann->peer_id == self.peer_id) continue;
            DiscoveredPeer peer{ann->peer_id,    ann->display_name,   ann->platform,
                                ann->transfer_port, endpoint_of(from), std::chrono::steady_clock::now()};
            latest.insert_or_assign(peer.peer_id, std::move(peer));
        } catch (const Error&) {
            continue;
        }
    }

    std::vector<DiscoveredPeer> peers;
    peers.reserve(latest.size());
    for (auto& [_, peer] : latest) peers.push_back(std::move(peer));
    std::sort(peers.begin(), peers.end(), [](const DiscoveredPeer& a, const DiscoveredPeer& b) {
        return std::tie(a.display_name, a.peer_id) < std::tie(b.display_name, b.peer_id);
    });
    return peers;
}

}  // namespace photon
