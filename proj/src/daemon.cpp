#include "photon/daemon.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>

#include "httplib.h"
#include "photon/error.hpp"

namespace photon {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

json identity_json(const PeerIdentity& id) {
    return {{"peer_id", id.peer_id},
            {"display_name", id.display_name},
            {"platform", std::string(to_string(id.platform))},
            {"protocol_version", id.protocol_version}};
}

json peer_json(const DiscoveredPeer& p) {
    return {{"peer_id", p.peer_id},
            {"display_name", p.display_name},
            {"platform", std::string(to_string(p.platform))},
            {"address", p.source.address},
            {"transfer_port", p.transfer_port}};
}

std::string snake(std::string_view camel) {
    std::string out;
    for (char c : camel) {
        if (std::isupper(static_cast<unsigned char>(c))) {
            if (!out.empty()) out.push_back('_');
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else {
            out.push_back(c);
        }
    }
    return out;
}

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, std::string_view message) {
    reply(res, status, json{{"error", message}});
}

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

constexpr std::string_view kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>photon</title></head>
<body><h1>photon daemon</h1>
<p>The web control panel is not installed. Start the daemon with <code>--ui-dir</code> pointing at the built assets.</p>
<p>Control API: <code>/api/health</code>, <code>/api/state</code>, <code>/api/peers</code>, <code>/api/share</code>,
<code>/api/requests</code>, <code>/api/fetch</code>, <code>/api/transfers</code>, <code>/api/history</code>, <code>/api/events</code>.</p>
</body></html>
)";

}  // namespace

void validate(const AppConfig& config) {
    if (config.transfer_port == 0 || config.control_port == 0) throw Error(Errc::InvalidConfig, "ports must be nonzero");
    if (config.transfer_port == config.control_port || config.transfer_port == config.discovery_port ||
        config.control_port == config.discovery_port) {
        throw Error(Errc::InvalidConfig, "transfer, control and discovery ports must be distinct");
    }
    if (config.chunk_size < kMinChunkSize || config.chunk_size > kMaxChunkSize) {
        throw Error(Errc::InvalidConfig, "chunk_size must be within [4096, 4 MiB]");
    }
    std::error_code ec;
    fs::create_directories(config.download_dir, ec);
    if (ec || !fs::is_directory(config.download_dir)) {
        throw Error(Errc::InvalidConfig, "download_dir not usable: " + config.download_dir.string());
    }
    if (::access(config.download_dir.c_str(), W_OK) != 0) {
        throw Error(Errc::InvalidConfig, "download_dir not writable: " + config.download_dir.string());
    }
}

// ---- EventBus ----

std::shared_ptr<EventBus::Subscriber> EventBus::subscribe() {
    auto sub = std::make_shared<Subscriber>();
    std::lock_guard lock(mu_);
    subs_.push_back(sub);
    return sub;
}

void EventBus::unsubscribe(const std::shared_ptr<Subscriber>& sub) {
    std::lock_guard lock(mu_);
    subs_.erase(std::remove(subs_.begin(), subs_.end(), sub), subs_.end());
}

void EventBus::publish(std::string_view type, std::string_view session, json data) {
    json event{{"type", type}, {"session", session}, {"data", std::move(data)}};
    auto text = event.dump(-1, ' ', false, json::error_handler_t::replace);
    std::lock_guard lock(mu_);
    ++published_;
    for (auto& sub : subs_) {
        {
            std::lock_guard sl(sub->mu);
            sub->queue.push_back(text);
        }
        sub->cv.notify_one();
    }
}

void EventBus::close_all() {
    std::lock_guard lock(mu_);
    for (auto& sub : subs_) {
        {
            std::lock_guard sl(sub->mu);
            sub->closed = true;
        }
        sub->cv.notify_all();
    }
}

// ---- Daemon ----

struct Daemon::Share {
    struct Tracking {
        std::mutex mu;
        std::string request_id;
        PeerIdentity receiver;
        Clock::time_point granted_at{};
        bool granted = false;
        bool finished = false;
    };

    std::unique_ptr<TransferServer> server;
    std::unique_ptr<Responder> responder;
    std::shared_ptr<Tracking> tracking = std::make_shared<Tracking>();
};

struct Daemon::Fetch {
    std::string id;
    DiscoveredPeer peer;
    fs::path dest;
    ReceiveProgress progress;
    std::atomic<bool> cancel{false};
    std::atomic<bool> done{false};
    std::mutex mu;
    FileIndex index;
    std::map<std::uint64_t, std::uint64_t> file_bytes;
    std::optional<ReceiveOutcome> outcome;
    std::thread thread;
};

namespace {
fs::path history_path_for(const AppConfig& config) {
    return config.history_path.empty() ? default_data_dir() / "history.jsonl" : config.history_path;
}
}  // namespace

Daemon::Daemon(AppConfig config, PeerIdentity identity)
    : config_(std::move(config)), identity_(std::move(identity)), history_(history_path_for(config_)) {
    if (config_.control_token.empty()) {
        if (const char* token = std::getenv("PHOTON_CONTROL_TOKEN"); token != nullptr) config_.control_token = token;
    }
    validate(config_);
}

Daemon::~Daemon() { stop(); }

void Daemon::record(const HistoryRecord& record) {
    try {
        history_.append(record);
    } catch (const Error& e) {
        bus_.publish("warning", "", json{{"message", e.what()}});
    }
}

void Daemon::start_share(const std::vector<fs::path>& paths) {
    auto set = build_share_set(paths);
    auto share = std::make_unique<Share>();
    ServerConfig sc;
    sc.transfer_port = config_.transfer_port;
    sc.chunk_size = config_.chunk_size;
    share->server = std::make_unique<TransferServer>(sc, identity_, std::move(set), config_.approval_policy,
                                                     config_.decision_timeout);

    auto tracking = share->tracking;
    auto index = share->server->share().index;
    auto* bus = &bus_;
    auto record_fn = [this](const HistoryRecord& r) { record(r); };
    auto make_record = [index](const PeerIdentity& receiver, Outcome outcome, std::string reason, double duration) {
        HistoryRecord r;
        r.timestamp = rfc3339_utc_now();
        r.direction = Direction::Sent;
        r.peer_name = receiver.display_name;
        r.peer_id = receiver.peer_id;
        if (outcome == Outcome::Completed) {
            for (const auto& e : index.entries) r.files.push_back(HistoryFile{e.name, e.size_bytes});
            r.total_bytes = index.total_bytes;
        }
        r.duration_seconds = duration;
        r.outcome = outcome;
        r.reason = std::move(reason);
        return r;
    };

    share->server->sessions().set_observer([tracking, bus, record_fn, make_record](const SessionEvent& ev) {
        std::lock_guard lock(tracking->mu);
        if (ev.type == "state") {
            bus->publish("state", tracking->request_id,
                         json{{"role", "sending"}, {"state", std::string(to_string(ev.state))}});
            if (ev.state == SenderState::Terminated && tracking->granted && !tracking->finished) {
                tracking->finished = true;
                record_fn(make_record(tracking->receiver, Outcome::Failed, "sender stopped",
                                      since(tracking->granted_at)));
                bus->publish("failed", tracking->request_id, json{{"role", "sending"}, {"reason", "sender stopped"}});
            }
            return;
        }
        json data{{"role", "sending"}, {"receiver", identity_json(ev.receiver)}};
        if (ev.type == "request_received") {
            tracking->request_id = ev.request_id;
            tracking->receiver = ev.receiver;
            tracking->granted = false;
            tracking->finished = false;
            data["request_id"] = ev.request_id;
        } else if (ev.type == "granted") {
            tracking->granted = true;
            tracking->granted_at = Clock::now();
        } else if (ev.type == "denied") {
            record_fn(make_record(ev.receiver, Outcome::Denied, "", 0));
        } else if (ev.type == "expired") {
            record_fn(make_record(ev.receiver, Outcome::Failed, "decision timeout", 0));
        } else if (ev.type == "completed") {
            tracking->finished = true;
            record_fn(make_record(ev.receiver, Outcome::Completed, "", since(tracking->granted_at)));
        }
        bus->publish(ev.type, ev.request_id, std::move(data));
    });

    share->server->start();
    try {
        share->responder = std::make_unique<Responder>(identity_, share->server->port(),
                                                       ResponderOptions{config_.discovery_port, "0.0.0.0"});
    } catch (...) {
        share->server->stop();
        throw;
    }
    share_ = std::move(share);
    bus_.publish("share_started", "",
                 json{{"files", share_->server->share().index.entries.size()},
                      {"total_bytes", share_->server->share().index.total_bytes}});
}

void Daemon::stop_share() {
    if (!share_) return;
    share_->responder.reset();
    share_->server->stop();
    share_.reset();
    bus_.publish("share_stopped", "", json::object());
}

void Daemon::progress_ticker(std::stop_token stop) {
    while (!stop.stop_requested()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        std::lock_guard lock(mu_);
        if (!share_) continue;
        auto& sessions = share_->server->sessions();
        if (sessions.state() != SenderState::Active) continue;
        std::lock_guard tl(share_->tracking->mu);
        if (share_->tracking->finished) continue;
        for (const auto& s : sessions.sessions()) {
            bus_.publish("transfer_progress", s->request_id,
                         json{{"role", "sending"},
                              {"bytes_done", s->bytes_served.load()},
                              {"total_bytes", s->index.total_bytes}});
        }
    }
}

void Daemon::start_fetch(const DiscoveredPeer& peer, const fs::path& dest, const std::string& id) {
    auto fetch = std::make_shared<Fetch>();
    fetch->id = id;
    fetch->peer = peer;
    fetch->dest = dest;
    fetches_[id] = fetch;

    fetch->thread = std::thread([this, fetch] {
        ClientOptions options;
        options.progress = &fetch->progress;
        options.cancel = &fetch->cancel;
        options.handshake_timeout = config_.decision_timeout + std::chrono::seconds(5);
        options.observer = [this, fetch](const ReceiveEvent& ev) {
            if (ev.type == "state") {
                bus_.publish("state", fetch->id, json{{"role", "receiving"}, {"state", std::string(to_string(ev.state))}});
                if (ev.state == ReceiverState::Fetching) bus_.publish("granted", fetch->id, json{{"role", "receiving"}});
                if (ev.state == ReceiverState::Denied) bus_.publish("denied", fetch->id, json{{"role", "receiving"}});
                return;
            }
            {
                std::lock_guard lock(fetch->mu);
                fetch->file_bytes[ev.ordinal] = ev.file_bytes;
            }
            bus_.publish(ev.type, fetch->id,
                         json{{"role", "receiving"},
                              {"ordinal", ev.ordinal},
                              {"name", ev.name},
                              {"file_bytes", ev.file_bytes},
                              {"file_size", ev.file_size},
                              {"bytes_done", ev.total_done},
                              {"total_bytes", ev.total_bytes},
                              {"throughput", ev.throughput},
                              {"detail", ev.detail}});
        };
        auto start = Clock::now();
        auto outcome = receive_all(fetch->peer, identity_, fetch->dest, options);

        HistoryRecord r;
        r.timestamp = rfc3339_utc_now();
        r.direction = Direction::Received;
        r.peer_name = fetch->peer.display_name;
        r.peer_id = fetch->peer.peer_id;
        for (const auto& f : outcome.report.files) {
            if (f.sha256_ok) r.files.push_back(HistoryFile{f.name, outcome.index.entries.at(f.ordinal).size_bytes});
        }
        for (const auto& f : r.files) r.total_bytes += f.size_bytes;
        r.duration_seconds = since(start);
        switch (outcome.kind) {
            case ReceiveOutcome::Kind::Done: r.outcome = Outcome::Completed; break;
            case ReceiveOutcome::Kind::Denied: r.outcome = Outcome::Denied; break;
            case ReceiveOutcome::Kind::Failed:
                r.outcome = Outcome::Failed;
                r.reason = outcome.reason;
                break;
        }
        record(r);
        {
            std::lock_guard lock(fetch->mu);
            fetch->index = outcome.index;
            fetch->outcome = outcome;
        }
        if (outcome.kind == ReceiveOutcome::Kind::Done) {
            bus_.publish("completed", fetch->id,
                         json{{"role", "receiving"}, {"total_bytes", outcome.report.total_bytes},
                              {"mean_throughput", outcome.report.mean_throughput}});
        } else if (outcome.kind == ReceiveOutcome::Kind::Failed) {
            bus_.publish("failed", fetch->id, json{{"role", "receiving"}, {"reason", outcome.reason}});
        }
        fetch->done.store(true);
    });
}

json Daemon::state_json() {
    json out;
    out["identity"] = identity_json(identity_);
    if (share_) {
        auto state = share_->server->sessions().state();
        out["state"] = snake(to_string(state));
        out["sender_state"] = std::string(to_string(state));
        const auto& index = share_->server->share().index;
        json files = json::array();
        for (const auto& e : index.entries) files.push_back({{"name", e.name}, {"size_bytes", e.size_bytes}});
        out["share"] = {{"files", index.entries.size()},
                        {"total_bytes", index.total_bytes},
                        {"entries", std::move(files)},
                        {"transfer_port", share_->server->port()}};
    } else {
        out["state"] = "idle";
        out["sender_state"] = nullptr;
        out["share"] = nullptr;
    }
    bool receiving = false;
    for (auto& [_, f] : fetches_) receiving = receiving || !f->done.load();
    out["receiving"] = receiving;
    out["approval_policy"] = std::string(to_string(config_.approval_policy));
    return out;
}

json Daemon::transfers_json() {
    json list = json::array();
    if (share_) {
        auto state = share_->server->sessions().state();
        for (const auto& s : share_->server->sessions().sessions()) {
            list.push_back({{"id", s->request_id},
                            {"role", "sending"},
                            {"peer", identity_json(s->receiver)},
                            {"state", std::string(to_string(state))},
                            {"bytes_done", s->bytes_served.load()},
                            {"total_bytes", s->index.total_bytes}});
        }
    }
    for (auto& [id, f] : fetches_) {
        std::lock_guard lock(f->mu);
        json item{{"id", id},
                  {"role", "receiving"},
                  {"peer", peer_json(f->peer)},
                  {"state", std::string(to_string(f->progress.state.load()))},
                  {"bytes_done", f->progress.bytes_done.load()},
                  {"total_bytes", f->progress.total_bytes.load()},
                  {"dest", f->dest.string()}};
        json files = json::array();
        for (const auto& [ordinal, bytes] : f->file_bytes) files.push_back({{"ordinal", ordinal}, {"bytes", bytes}});
        item["files"] = std::move(files);
        if (f->outcome) {
            item["outcome"] = f->outcome->kind == ReceiveOutcome::Kind::Done     ? "completed"
                              : f->outcome->kind == ReceiveOutcome::Kind::Denied ? "denied"
                                                                                 : "failed";
            if (!f->outcome->reason.empty()) item["reason"] = f->outcome->reason;
        }
        list.push_back(std::move(item));
    }
    return list;
}

void Daemon::install_routes() {
    auto& svr = *http_;

    svr.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (config_.control_token.empty() || req.path.rfind("/api/", 0) != 0) {
            return httplib::Server::HandlerResponse::Unhandled;
        }
        if (req.get_header_value("Authorization") != "Bearer " + config_.control_token) {
            fail(res, 401, "missing or wrong bearer token");
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    svr.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, json{{"status", "ok"}, {"version", kVersion}});
    });

    svr.Get("/api/state", [this](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(mu_);
        reply(res, 200, state_json());
    });

    svr.Get("/api/peers", [this](const httplib::Request& req, httplib::Response& res) {
        long window = 2000;
        if (req.has_param("window_ms")) {
            try {
                window = std::stol(req.get_param_value("window_ms"));
            } catch (...) {
                return fail(res, 400, "window_ms must be an integer");
            }
        }
        if (window <= 0 || window > 30000) return fail(res, 400, "window_ms must be within 1..30000");
        std::vector<DiscoveredPeer> peers;
        try {
            ProbeOptions opts;
            opts.port = config_.discovery_port;
            peers = probe_and_collect(identity_, std::chrono::milliseconds(window), opts);
        } catch (const Error& e) {
            return fail(res, 503, e.what());
        }
        json list = json::array();
        for (const auto& p : peers) list.push_back(peer_json(p));
        {
            std::lock_guard lock(mu_);
            last_peers_ = std::move(peers);
        }
        reply(res, 200, list);
    });

    svr.Post("/api/share", [this](const httplib::Request& req, httplib::Response& res) {
        std::vector<fs::path> paths;
        try {
            auto body = json::parse(req.body);
            for (const auto& p : body.at("paths")) paths.emplace_back(p.get<std::string>());
        } catch (const json::exception& e) {
            return fail(res, 400, e.what());
        }
        std::lock_guard lock(mu_);
        if (share_) {
            auto state = share_->server->sessions().state();
            if (state != SenderState::Completed && state != SenderState::Terminated) {
                return fail(res, 409, "already sharing");
            }
            stop_share();
        }
        try {
            start_share(paths);
        } catch (const Error& e) {
            int status = e.code() == Errc::PortInUse ? 409 : 400;
            return fail(res, status, e.what());
        }
        reply(res, 200, state_json());
    });

    svr.Post("/api/stop-share", [this](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(mu_);
        if (!share_) return fail(res, 409, "not sharing");
        stop_share();
        reply(res, 200, json{{"status", "stopped"}});
    });

    svr.Get("/api/requests", [this](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(mu_);
        json list = json::array();
        if (share_) {
            for (const auto& r : share_->server->sessions().requests()) {
                auto secs = std::chrono::duration_cast<std::chrono::seconds>(r.received_at.time_since_epoch()).count();
                list.push_back({{"request_id", r.request_id},
                                {"receiver", identity_json(r.receiver)},
                                {"received_at", secs},
                                {"state", std::string(to_string(r.state))}});
            }
        }
        reply(res, 200, list);
    });

    svr.Post(R"(/api/requests/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
        Decision decision;
        try {
            auto d = json::parse(req.body).at("decision").get<std::string>();
            if (d == "approve") {
                decision = Decision::Approve;
            } else if (d == "deny") {
                decision = Decision::Deny;
            } else {
                return fail(res, 400, "decision must be approve or deny");
            }
        } catch (const json::exception& e) {
            return fail(res, 400, e.what());
        }
        TransferServer* server = nullptr;
        {
            std::lock_guard lock(mu_);
            if (share_) server = share_->server.get();
            if (server == nullptr) return fail(res, 404, "no such request");
            // Decide while holding mu_ so the share cannot be torn down underneath.
            try {
                server->sessions().decide_request(req.matches[1].str(), decision);
            } catch (const Error& e) {
                if (e.code() == Errc::UnknownRequest) return fail(res, 404, "no such request");
                return fail(res, 409, "request expired or already decided");
            }
        }
        reply(res, 200, json{{"status", "acknowledged"}});
    });

    svr.Post("/api/fetch", [this](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            return fail(res, 400, e.what());
        }
        fs::path dest = body.contains("dest") && body["dest"].is_string() ? fs::path(body["dest"].get<std::string>())
                                                                          : config_.download_dir;
        std::optional<DiscoveredPeer> peer;
        if (body.contains("host") && body.contains("port")) {
            try {
                peer = direct_peer(body["host"].get<std::string>(), body["port"].get<std::uint16_t>());
            } catch (const json::exception& e) {
                return fail(res, 400, e.what());
            }
        } else {
            if (!body.contains("peer_id") || !body["peer_id"].is_string()) return fail(res, 400, "peer_id required");
            auto wanted = body["peer_id"].get<std::string>();
            auto lookup = [&]() -> std::optional<DiscoveredPeer> {
                std::lock_guard lock(mu_);
                for (const auto& p : last_peers_) {
                    if (p.peer_id == wanted) return p;
                }
                return std::nullopt;
            };
            peer = lookup();
            if (!peer) {
                try {
                    ProbeOptions opts;
                    opts.port = config_.discovery_port;
                    auto found = probe_and_collect(identity_, kDefaultDiscoveryWindow, opts);
                    std::lock_guard lock(mu_);
                    last_peers_ = std::move(found);
                } catch (const Error&) {
                }
                peer = lookup();
            }
            if (!peer) return fail(res, 404, "peer not found");
        }
        std::lock_guard lock(mu_);
        for (auto& [_, f] : fetches_) {
            if (!f->done.load()) return fail(res, 409, "a receive is already running");
        }
        std::string id = "rx-" + std::to_string(fetches_.size() + 1);
        start_fetch(*peer, dest, id);
        reply(res, 202, json{{"transfer_id", id}});
    });

    svr.Get("/api/transfers", [this](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(mu_);
        reply(res, 200, transfers_json());
    });

    svr.Get("/api/history", [this](const httplib::Request&, httplib::Response& res) {
        std::vector<std::string> warnings;
        auto records = history_.read_all([&](const std::string& w) { warnings.push_back(w); });
        json list = json::array();
        for (auto it = records.rbegin(); it != records.rend(); ++it) list.push_back(json::parse(history_to_json(*it)));
        reply(res, 200, list);
    });

    svr.Get("/api/events", [this](const httplib::Request&, httplib::Response& res) {
        auto sub = bus_.subscribe();
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [sub](std::size_t, httplib::DataSink& sink) {
                std::unique_lock lock(sub->mu);
                sub->cv.wait_for(lock, std::chrono::seconds(1), [&] { return !sub->queue.empty() || sub->closed; });
                if (sub->closed) return false;
                if (sub->queue.empty()) {
                    lock.unlock();
                    static constexpr std::string_view ping = ": ping\n\n";
                    return sink.write(ping.data(), ping.size());
                }
                std::string frame;
                while (!sub->queue.empty()) {
                    frame += "data: " + sub->queue.front() + "\n\n";
                    sub->queue.pop_front();
                }
                lock.unlock();
                return sink.write(frame.data(), frame.size());
            },
            [this, sub](bool) { bus_.unsubscribe(sub); });
    });

    std::error_code ec;
    if (!config_.ui_dir.empty() && fs::is_directory(config_.ui_dir, ec)) {
        svr.set_mount_point("/", config_.ui_dir.string());
    } else {
        svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(std::string(kPlaceholderPage), "text/html");
        });
    }
}

void Daemon::start() {
    if (running_.load()) return;
    http_ = std::make_unique<httplib::Server>();
    http_->new_task_queue = [] { return new httplib::ThreadPool(16); };
    http_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    http_->set_keep_alive_timeout(2);
    install_routes();
    if (!http_->bind_to_port("127.0.0.1", config_.control_port)) {
        http_.reset();
        throw Error(Errc::PortInUse, std::to_string(config_.control_port));
    }
    running_.store(true);
    listener_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
    ticker_ = std::jthread([this](std::stop_token stop) { progress_ticker(stop); });
}

void Daemon::stop() {
    if (!running_.exchange(false)) return;
    ticker_.request_stop();
    if (ticker_.joinable()) ticker_.join();
    std::vector<std::shared_ptr<Fetch>> fetches;
    {
        std::lock_guard lock(mu_);
        stop_share();
        for (auto& [_, f] : fetches_) {
            f->cancel.store(true);
            fetches.push_back(f);
        }
    }
    for (auto& f : fetches) {
        if (f->thread.joinable()) f->thread.join();
    }
    bus_.close_all();
    http_->stop();
    if (listener_.joinable()) listener_.join();
    http_.reset();
    stopped_cv_.notify_all();
}

void Daemon::wait() {
    std::unique_lock lock(mu_);
    stopped_cv_.wait(lock, [this] { return !running_.load(); });
}

}  // namespace photon
