#include "photon/server.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <sys/socket.h>
#include <unistd.h>

#include <charconv>

#include "httplib.h"
#include "json.hpp"
#include "photon/error.hpp"

namespace photon {

namespace {

std::int64_t now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void not_found(httplib::Response& res) {
    res.status = 404;
    res.body.clear();
}

std::optional<std::uint64_t> parse_ordinal(const std::string& s) {
    if (s.empty() || s.size() > 19) return std::nullopt;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

struct FileStream {
    int fd = -1;
    ChunkBudget::Lease lease;
    SessionHandle session;

    FileStream(int f, ChunkBudget::Lease l, SessionHandle s) : fd(f), lease(std::move(l)), session(std::move(s)) {}
    ~FileStream() {
        if (fd >= 0) ::close(fd);
    }
};

}  // namespace

void validate(const ServerConfig& config) {
    in_addr probe{};
    if (::inet_pton(AF_INET, config.bind_address.c_str(), &probe) != 1) {
        throw Error(Errc::InvalidConfig, "bind_address is not IPv4: " + config.bind_address);
    }
    if (config.transfer_port == 0) throw Error(Errc::InvalidConfig, "transfer_port must be nonzero");
    if (config.chunk_size < kMinChunkSize || config.chunk_size > kMaxChunkSize) {
        throw Error(Errc::InvalidConfig, "chunk_size must be within [4096, 4 MiB]");
    }
    if (config.max_concurrent_streams == 0) throw Error(Errc::InvalidConfig, "max_concurrent_streams must be >= 1");
}

ChunkBudget::Lease::Lease(ChunkBudget* owner) : owner_(owner), buffer_(new char[owner->chunk_size_]) {}

ChunkBudget::Lease::~Lease() {
    if (owner_ != nullptr) {
        buffer_.reset();
        owner_->in_use_.fetch_sub(1);
    }
}

ChunkBudget::Lease ChunkBudget::try_acquire() {
    auto current = in_use_.load();
    do {
        if (current >= slots_) return Lease{};
    } while (!in_use_.compare_exchange_weak(current, current + 1));
    auto now = current + 1;
    auto peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    return Lease(this);
}

TransferServer::TransferServer(ServerConfig config, PeerIdentity identity, ShareSet share, ApprovalPolicy policy,
                               std::chrono::milliseconds decision_timeout, std::shared_ptr<RandomSource> rng)
    : config_(std::move(config)),
      identity_(std::move(identity)),
      share_(std::move(share)),
      policy_(policy),
      decision_timeout_(decision_timeout),
      sessions_(share_.index, std::move(rng)),
      budget_(config_.max_concurrent_streams, config_.chunk_size) {
    validate(config_);
    if (share_.sources.size() != share_.index.entries.size()) {
        throw Error(Errc::InvalidIndex, "share sources do not match index entries");
    }
    validate_index(share_.index);
}

TransferServer::~TransferServer() { stop(); }

std::vector<std::uint64_t> TransferServer::file_request_log() const {
    std::lock_guard lock(log_mu_);
    return file_log_;
}

void TransferServer::install_routes() {
    auto& svr = *http_;

    svr.Get("/photon/v1/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"serving"})", "application/json");
    });

    svr.Post("/photon/v1/request", [this](const httplib::Request& req, httplib::Response& res) {
        PeerIdentity receiver;
        try {
            receiver = identity_from_json(req.body);
        } catch (const Error&) {
            res.status = 400;
            return;
        }
        HandshakeOutcome outcome;
        try {
            outcome = sessions_.submit_request(receiver, policy_.load(), decision_timeout_);
        } catch (const Error& e) {
            if (e.code() == Errc::Busy || e.code() == Errc::InvalidTransition) {
                res.status = 409;
                return;
            }
            throw;
        }
        nlohmann::ordered_json body;
        switch (outcome.kind) {
            case HandshakeOutcome::Kind::Granted:
                body["status"] = "granted";
                body["code"] = outcome.code->value;
                body["index_path"] = "/photon/v1/" + outcome.code->value + "/index";
                break;
            case HandshakeOutcome::Kind::Denied:
                body["status"] = "denied";
                break;
            case HandshakeOutcome::Kind::TimedOut:
                res.status = 408;
                return;
        }
        res.set_content(body.dump(), "application/json");
    });

    svr.Get(R"(/photon/v1/([^/]+)/index)", [this](const httplib::Request& req, httplib::Response& res) {
        auto session = sessions_.find(req.matches[1].str());
        if (!session) return not_found(res);
        res.set_content(index_to_json(session->index), "application/json");
    });

    svr.Get(R"(/photon/v1/([^/]+)/file/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        auto session = sessions_.find(req.matches[1].str());
        if (!session) return not_found(res);
        auto ordinal = parse_ordinal(req.matches[2].str());
        if (!ordinal || *ordinal >= session->index.entries.size()) return not_found(res);

        const auto& entry = session->index.entries[*ordinal];
        const auto& source = share_.sources[*ordinal];
        auto lease = budget_.try_acquire();
        if (!lease) {
            res.status = 503;
            res.set_header("Retry-After", "1");
            return;
        }
        int fd = ::open(source.c_str(), O_RDONLY | O_CLOEXEC);
        if (fd < 0) {
            res.status = 500;
            return;
        }
        {
            std::lock_guard lock(log_mu_);
            file_log_.push_back(*ordinal);
        }
        auto stream = std::make_shared<FileStream>(fd, std::move(lease), session);
        res.set_content_provider(
            static_cast<std::size_t>(entry.size_bytes), entry.mime.value_or("application/octet-stream"),
            [this, stream](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
                if (stopping_.load() && now_ns() > cutoff_ns_.load()) return false;
                auto want = std::min(length, stream->lease.size());
                auto got = ::pread(stream->fd, stream->lease.data(), want, static_cast<off_t>(offset));
                // Short file on disk: abort the body rather than send fewer bytes than promised.
                if (got <= 0) return false;
                if (!sink.write(stream->lease.data(), static_cast<std::size_t>(got))) return false;
                stream->session->bytes_served.fetch_add(static_cast<std::uint64_t>(got));
                bytes_served_.fetch_add(static_cast<std::uint64_t>(got));
                return true;
            });
    });

    svr.Post(R"(/photon/v1/([^/]+)/done)", [this](const httplib::Request& req, httplib::Response& res) {
        auto code = req.matches[1].str();
        if (!is_lower_hex(code, 32)) return not_found(res);
        try {
            sessions_.complete_session(code);
        } catch (const Error&) {
            return not_found(res);
        }
        res.set_content(R"({"status":"completed"})", "application/json");
    });
}

void TransferServer::start() {
    if (running_.load()) return;
    http_ = std::make_unique<httplib::Server>();
    const auto workers = config_.max_concurrent_streams + 4;
    http_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
    http_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    http_->set_keep_alive_timeout(2);
    http_->set_tcp_nodelay(true);
    install_routes();

    if (!http_->bind_to_port(config_.bind_address, config_.transfer_port)) {
        http_.reset();
        throw Error(Errc::PortInUse, std::to_string(config_.transfer_port));
    }
    sessions_.start_serving();
    running_.store(true);
    listener_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
}

void TransferServer::stop() {
    if (!running_.exchange(false)) return;
    cutoff_ns_.store(now_ns() + std::chrono::duration_cast<std::chrono::nanoseconds>(config_.stop_grace).count());
    stopping_.store(true);
    sessions_.stop();
    http_->stop();
    if (listener_.joinable()) listener_.join();
    http_.reset();
}

std::uint16_t pick_free_port(const std::string& address) {
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw Error(Errc::IoError, "socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = 0;
    ::inet_pton(AF_INET, address.c_str(), &addr.sin_addr);
    socklen_t len = sizeof addr;
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        ::close(fd);
        throw Error(Errc::IoError, "cannot find a free port");
    }
    ::close(fd);
    return ntohs(addr.sin_port);
}

std::unique_ptr<TransferServer> start_server(const ServerConfig& config, const PeerIdentity& identity,
                                             ShareSet share, ApprovalPolicy policy,
                                             std::chrono::milliseconds decision_timeout) {
    auto server = std::make_unique<TransferServer>(config, identity, std::move(share), policy, decision_timeout);
    server->start();
    return server;
}

}  // namespace photon
