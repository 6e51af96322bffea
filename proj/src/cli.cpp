#include "photon/cli.hpp"

#include <unistd.h>

#include <charconv>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "photon/bench.hpp"
#include "photon/daemon.hpp"
#include "photon/error.hpp"

namespace photon {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using namespace std::chrono_literals;

std::atomic<bool>& interrupt_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}

fs::path default_download_dir() {
    if (const char* xdg = std::getenv("XDG_DOWNLOAD_DIR"); xdg != nullptr && *xdg != '\0') return xdg;
    if (const char* home = std::getenv("HOME"); home != nullptr && *home != '\0') {
        std::error_code ec;
        fs::path dl = fs::path(home) / "Downloads";
        if (fs::is_directory(dl, ec)) return dl;
    }
    return fs::current_path();
}

std::string default_display_name() {
    char buf[256] = {};
    if (::gethostname(buf, sizeof buf - 1) != 0 || buf[0] == '\0') return "photon";
    std::string name(buf);
    if (name.size() > kMaxDisplayNameBytes) name.resize(kMaxDisplayNameBytes);
    return name;
}

namespace {

struct Globals {
    std::string history_path;
    std::uint16_t discovery_port = kDiscoveryPort;
};

HistoryStore open_history(const Globals& g) {
    return HistoryStore(g.history_path.empty() ? default_data_dir() / "history.jsonl" : fs::path(g.history_path));
}

void record_history(const Globals& g, const HistoryRecord& record, std::ostream& err) {
    try {
        open_history(g).append(record);
    } catch (const Error& e) {
        err << "warning: could not write history: " << e.what() << "\n";
    }
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string mb_per_s(double bytes_per_second) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << bytes_per_second / 1e6 << " MB/s";
    return os.str();
}

std::string describe(const PeerIdentity& id) {
    return id.display_name + " (" + std::string(to_string(id.platform)) + ", " + id.peer_id + ")";
}

PeerIdentity make_identity(const std::string& name) {
    SecureRandom rng;
    return new_peer_identity(name.empty() ? default_display_name() : name, host_platform(), rng);
}

// ---- send ----

struct SendArgs {
    std::vector<std::string> paths;
    std::string name;
    std::uint16_t port = kDefaultTransferPort;
    bool auto_approve = false;
    int sessions = 1;
    double decision_timeout = 60;
};

int cmd_send(const SendArgs& a, const Globals& g, CliIo io) {
    ShareSet share;
    PeerIdentity self;
    try {
        std::vector<fs::path> paths(a.paths.begin(), a.paths.end());
        share = build_share_set(paths);
        self = make_identity(a.name);
    } catch (const Error& e) {
        io.err << "error: " << e.what() << "\n";
        return kExitError;
    }

    struct Stamped {
        SessionEvent ev;
        Clock::time_point at;
    };
    struct Shared {
        std::mutex mu;
        std::deque<Stamped> events;
    } shared;

    auto timeout = std::chrono::milliseconds(static_cast<long>(a.decision_timeout * 1000));
    auto policy = a.auto_approve ? ApprovalPolicy::AutoApprove : ApprovalPolicy::Manual;
    ServerConfig config;
    config.transfer_port = a.port;

    std::unique_ptr<Responder> responder;
    int completed = 0;
    int exit_code = kExitOk;
    bool announced = false;

    while (completed < a.sessions) {
        std::unique_ptr<TransferServer> server;
        try {
            server = std::make_unique<TransferServer>(config, self, share, policy, timeout);
            server->sessions().set_observer([&shared](const SessionEvent& ev) {
                if (ev.type == "state") return;
                std::lock_guard lock(shared.mu);
                shared.events.push_back(Stamped{ev, Clock::now()});
            });
            server->start();
            if (!responder) {
                responder = std::make_unique<Responder>(self, server->port(), ResponderOptions{g.discovery_port, "0.0.0.0"});
            }
        } catch (const Error& e) {
            io.err << "error: " << e.what() << "\n";
            return kExitError;
        }
        if (!announced) {
            io.out << "serving " << share.index.entries.size() << " files (" << share.index.total_bytes
                   << " bytes) as " << self.display_name << std::endl;
            announced = true;
        }

        Clock::time_point granted_at = Clock::now();
        PeerIdentity receiver;
        bool session_over = false;
        bool denied = false;
        while (!session_over) {
            if (interrupt_flag().load()) {
                auto state = server->sessions().state();
                server->stop();
                if (state == SenderState::Active) {
                    record_history(g, HistoryRecord{rfc3339_utc_now(), Direction::Sent, receiver.display_name,
                                                    receiver.peer_id, {}, 0, seconds_since(granted_at),
                                                    Outcome::Failed, "interrupted"},
                                   io.err);
                }
                io.err << "interrupted\n";
                return kExitError;
            }
            std::optional<SessionEvent> ev;
            Clock::time_point at;
            {
                std::lock_guard lock(shared.mu);
                if (!shared.events.empty()) {
                    ev = std::move(shared.events.front().ev);
                    at = shared.events.front().at;
                    shared.events.pop_front();
                }
            }
            if (!ev) {
                std::this_thread::sleep_for(20ms);
                continue;
            }
            if (ev->type == "request_received") {
                receiver = ev->receiver;
                io.out << "request from " << describe(ev->receiver) << std::endl;
                if (policy == ApprovalPolicy::Manual) {
                    io.out << "accept? [y/N] " << std::flush;
                    std::string answer;
                    if (!std::getline(io.in, answer)) answer.clear();
                    bool yes = answer == "y" || answer == "Y" || answer == "yes";
                    try {
                        server->sessions().decide_request(ev->request_id, yes ? Decision::Approve : Decision::Deny);
                    } catch (const Error&) {
                        io.out << "request already expired" << std::endl;
                    }
                }
            } else if (ev->type == "granted") {
                granted_at = at;
                io.out << "sending to " << ev->receiver.display_name << std::endl;
            } else if (ev->type == "denied") {
                io.out << "denied " << ev->receiver.display_name << std::endl;
                record_history(g, HistoryRecord{rfc3339_utc_now(), Direction::Sent, ev->receiver.display_name,
                                                ev->receiver.peer_id, {}, 0, 0, Outcome::Denied, ""},
                               io.err);
                denied = true;
                session_over = true;
            } else if (ev->type == "expired") {
                io.out << "no decision in time for " << ev->receiver.display_name << std::endl;
                record_history(g, HistoryRecord{rfc3339_utc_now(), Direction::Sent, ev->receiver.display_name,
                                                ev->receiver.peer_id, {}, 0, 0, Outcome::Failed, "decision timeout"},
                               io.err);
            } else if (ev->type == "completed") {
                double secs = std::chrono::duration<double>(at - granted_at).count();
                HistoryRecord r{rfc3339_utc_now(), Direction::Sent, ev->receiver.display_name, ev->receiver.peer_id,
                                {}, share.index.total_bytes, secs, Outcome::Completed, ""};
                for (const auto& e : share.index.entries) r.files.push_back(HistoryFile{e.name, e.size_bytes});
                record_history(g, r, io.err);
                io.out << "completed: " << share.index.total_bytes << " bytes to " << ev->receiver.display_name
                       << " in " << std::fixed << std::setprecision(2) << secs << " s" << std::endl;
                ++completed;
                session_over = true;
            }
        }
        server->stop();
        if (denied) {
            exit_code = kExitDenied;
            break;
        }
    }
    return exit_code;
}

// ---- receive / peers ----

struct ReceiveArgs {
    std::string from;
    std::string dest;
    double timeout = 2.0;
    bool auto_pick = false;
    std::string name;
};

std::vector<DiscoveredPeer> discover(const PeerIdentity& self, double timeout_s, const Globals& g) {
    ProbeOptions opts;
    opts.port = g.discovery_port;
    return probe_and_collect(self, std::chrono::milliseconds(static_cast<long>(timeout_s * 1000)), opts);
}

void print_peers(const std::vector<DiscoveredPeer>& peers, std::ostream& out, bool numbered) {
    for (std::size_t i = 0; i < peers.size(); ++i) {
        const auto& p = peers[i];
        if (numbered) out << "[" << i + 1 << "] ";
        out << p.display_name << "  " << to_string(p.platform) << "  " << p.source.address << ":" << p.transfer_port
            << "  " << p.peer_id << "\n";
    }
    out << std::flush;
}

int cmd_receive(const ReceiveArgs& a, const Globals& g, CliIo io) {
    PeerIdentity self;
    std::vector<DiscoveredPeer> peers;
    try {
        self = make_identity(a.name);
        peers = discover(self, a.timeout, g);
    } catch (const Error& e) {
        io.err << "error: " << e.what() << "\n";
        return kExitError;
    }
    if (!a.from.empty()) {
        std::erase_if(peers, [&](const DiscoveredPeer& p) { return p.peer_id != a.from; });
    }
    if (peers.empty()) {
        io.out << "no peers found" << std::endl;
        return kExitNoPeers;
    }
    DiscoveredPeer peer = peers.front();
    if (peers.size() > 1 && a.from.empty() && !a.auto_pick) {
        print_peers(peers, io.out, true);
        io.out << "select peer [1-" << peers.size() << "]: " << std::flush;
        std::string line;
        std::getline(io.in, line);
        std::size_t choice = 0;
        auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), choice);
        if (ec != std::errc{} || ptr != line.data() + line.size() || choice < 1 || choice > peers.size()) {
            io.err << "error: invalid selection\n";
            return kExitError;
        }
        peer = peers[choice - 1];
    }

    fs::path dest = a.dest.empty() ? default_download_dir() : fs::path(a.dest);
    io.out << "requesting files from " << peer.display_name << " ..." << std::endl;

    ClientOptions options;
    options.cancel = &interrupt_flag();
    options.progress_interval = 500ms;
    options.observer = [&io](const ReceiveEvent& ev) {
        if (ev.type == "transfer_progress") {
            int pct = ev.file_size == 0 ? 100 : static_cast<int>(100 * ev.file_bytes / ev.file_size);
            io.out << ev.name << "  " << pct << "%  " << mb_per_s(ev.throughput) << std::endl;
        } else if (ev.type == "file_done") {
            io.out << ev.name << "  100%  " << mb_per_s(ev.throughput) << "  "
                   << (ev.detail == "ok" ? "verified" : "failed: " + ev.detail) << std::endl;
        }
    };
    auto start = Clock::now();
    auto outcome = receive_all(peer, self, dest, options);

    HistoryRecord r{rfc3339_utc_now(), Direction::Received, peer.display_name, peer.peer_id, {}, 0,
                    seconds_since(start), Outcome::Completed, ""};
    for (const auto& f : outcome.report.files) {
        if (f.sha256_ok) {
            r.files.push_back(HistoryFile{f.name, outcome.index.entries.at(f.ordinal).size_bytes});
            r.total_bytes += r.files.back().size_bytes;
        }
    }
    switch (outcome.kind) {
        case ReceiveOutcome::Kind::Done:
            record_history(g, r, io.err);
            io.out << "received " << r.files.size() << " files (" << r.total_bytes << " bytes) in " << std::fixed
                   << std::setprecision(2) << outcome.report.wall_duration << " s, "
                   << mb_per_s(outcome.report.mean_throughput) << " into " << dest.string() << std::endl;
            return kExitOk;
        case ReceiveOutcome::Kind::Denied:
            r.outcome = Outcome::Denied;
            r.duration_seconds = 0;
            record_history(g, r, io.err);
            io.out << "request denied by " << peer.display_name << std::endl;
            return kExitDenied;
        case ReceiveOutcome::Kind::Failed:
            break;
    }
    r.outcome = Outcome::Failed;
    r.reason = outcome.reason;
    record_history(g, r, io.err);
    io.err << "transfer failed: " << outcome.reason << "\n";
    return kExitError;
}

int cmd_peers(double timeout, const Globals& g, CliIo io) {
    try {
        auto peers = discover(make_identity(""), timeout, g);
        if (peers.empty()) {
            io.out << "no peers found" << std::endl;
            return kExitNoPeers;
        }
        print_peers(peers, io.out, false);
        return kExitOk;
    } catch (const Error& e) {
        io.err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

// ---- bench ----

struct BenchArgs {
    std::string sizes = "1,10,100";
    std::string target = "loopback";
    int reps = 3;
    std::string out;
    std::string format;
    bool serve = false;
    std::uint16_t port = kDefaultTransferPort;
    int sessions = 0;
    std::string workdir;
    std::uint64_t seed = 42;
};

std::vector<std::uint64_t> parse_sizes(const std::string& text) {
    std::vector<std::uint64_t> sizes;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc{} || ptr != item.data() + item.size()) {
            throw Error(Errc::InvalidConfig, "bad size: " + item);
        }
        sizes.push_back(v);
    }
    if (sizes.empty()) throw Error(Errc::EmptySizes, "no sizes given");
    return sizes;
}

int cmd_bench(const BenchArgs& a, CliIo io) {
    try {
        auto sizes = parse_sizes(a.sizes);
        if (a.serve) {
            io.out << "serving benchmark payloads on port " << a.port << std::endl;
            serve_benchmark(sizes, a.port, a.sessions, a.workdir, a.seed, interrupt_flag());
            return kExitOk;
        }
        std::string fmt_text = a.format;
        if (fmt_text.empty()) {
            auto ext = fs::path(a.out).extension().string();
            fmt_text = ext == ".csv" ? "csv" : ext == ".json" ? "json" : "table";
        }
        auto format = parse_report_format(fmt_text);
        if (!format) throw Error(Errc::InvalidConfig, "unknown format: " + fmt_text);

        BenchOptions opts;
        opts.sizes_mb = sizes;
        opts.target = a.target;
        opts.repetitions = a.reps;
        opts.workdir = a.workdir;
        opts.seed = a.seed;
        auto report = run_benchmark(opts);
        auto text = format_report(report, *format);
        if (a.out.empty()) {
            io.out << text;
        } else {
            std::ofstream f(a.out, std::ios::binary | std::ios::trunc);
            f << text;
            if (!f) throw Error(Errc::IoError, "cannot write " + a.out);
            if (*format != ReportFormat::Table) io.out << format_report(report, ReportFormat::Table);
            io.out << "report written to " << a.out << std::endl;
        }
        return kExitOk;
    } catch (const Error& e) {
        io.err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

// ---- daemon ----

struct DaemonArgs {
    std::uint16_t control_port = kDefaultControlPort;
    std::uint16_t transfer_port = kDefaultTransferPort;
    std::string name;
    std::string dest;
    bool auto_approve = false;
    std::string ui_dir;
    double decision_timeout = 60;
};

int cmd_daemon(const DaemonArgs& a, const Globals& g, CliIo io) {
    try {
        AppConfig config;
        config.display_name = a.name.empty() ? default_display_name() : a.name;
        config.transfer_port = a.transfer_port;
        config.control_port = a.control_port;
        config.discovery_port = g.discovery_port;
        config.download_dir = a.dest.empty() ? default_download_dir() : fs::path(a.dest);
        config.approval_policy = a.auto_approve ? ApprovalPolicy::AutoApprove : ApprovalPolicy::Manual;
        config.decision_timeout = std::chrono::milliseconds(static_cast<long>(a.decision_timeout * 1000));
        config.history_path = g.history_path;
        config.ui_dir = a.ui_dir;
        Daemon daemon(config, make_identity(config.display_name));
        daemon.start();
        io.out << "photon daemon " << kVersion << " as " << daemon.identity().display_name
               << ", control API on http://127.0.0.1:" << config.control_port << std::endl;
        while (!interrupt_flag().load()) std::this_thread::sleep_for(100ms);
        daemon.stop();
        io.out << "stopped" << std::endl;
        return kExitOk;
    } catch (const Error& e) {
        io.err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

// ---- history ----

int cmd_history(bool as_json, const Globals& g, CliIo io) {
    auto records = open_history(g).read_all([&](const std::string& w) { io.err << "warning: " << w << "\n"; });
    if (records.empty()) {
        if (!as_json) io.out << "no transfers yet" << std::endl;
        return kExitOk;
    }
    for (auto it = records.rbegin(); it != records.rend(); ++it) {
        const auto& r = *it;
        if (as_json) {
            io.out << history_to_json(r) << "\n";
            continue;
        }
        io.out << r.timestamp << "  " << to_string(r.direction) << "  " << to_string(r.outcome);
        if (!r.reason.empty()) io.out << "(" << r.reason << ")";
        io.out << "  " << r.peer_name << "  " << r.files.size() << " files  " << r.total_bytes << " bytes  "
               << std::fixed << std::setprecision(2) << r.duration_seconds << " s\n";
    }
    io.out << std::flush;
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, CliIo io) {
    CLI::App app{"LAN peer-to-peer file transfer", "photon"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(kVersion));

    Globals g;
    app.add_option("--history", g.history_path, "history.jsonl location");
    app.add_option("--discovery-port", g.discovery_port, "UDP discovery port")->check(CLI::Range(1, 65535));

    SendArgs send;
    auto* send_cmd = app.add_subcommand("send", "share files and wait for a receiver");
    send_cmd->add_option("paths", send.paths, "files or directories")->required();
    send_cmd->add_option("--name", send.name, "display name");
    send_cmd->add_option("--port", send.port, "TCP transfer port")->check(CLI::Range(1, 65535));
    send_cmd->add_flag("--auto-approve", send.auto_approve, "accept every request without asking");
    send_cmd->add_option("--sessions", send.sessions, "sessions to serve before exiting")->check(CLI::PositiveNumber);
    send_cmd->add_option("--decision-timeout", send.decision_timeout, "seconds to wait for an answer")
        ->check(CLI::PositiveNumber);

    ReceiveArgs recv;
    auto* recv_cmd = app.add_subcommand("receive", "discover a sender and download its files");
    recv_cmd->add_option("--from", recv.from, "peer id to fetch from");
    recv_cmd->add_option("--dest", recv.dest, "download directory");
    recv_cmd->add_option("--timeout", recv.timeout, "discovery window in seconds")->check(CLI::PositiveNumber);
    recv_cmd->add_flag("--auto", recv.auto_pick, "take the first peer instead of asking");
    recv_cmd->add_option("--name", recv.name, "display name");

    double peers_timeout = 2.0;
    auto* peers_cmd = app.add_subcommand("peers", "list senders on the LAN");
    peers_cmd->add_option("--timeout", peers_timeout, "discovery window in seconds")->check(CLI::PositiveNumber);

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "measure transfer time against file size");
    bench_cmd->add_option("--sizes", bench.sizes, "comma-separated sizes in MB");
    bench_cmd->add_option("--target", bench.target, "loopback or HOST:PORT");
    bench_cmd->add_option("--reps", bench.reps, "repetitions per size")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--out", bench.out, "write the report here");
    bench_cmd->add_option("--format", bench.format, "table, csv or json")
        ->check(CLI::IsMember({"table", "csv", "json"}));
    bench_cmd->add_flag("--serve", bench.serve, "serve payloads for a remote bench run");
    bench_cmd->add_option("--port", bench.port, "transfer port for --serve")->check(CLI::Range(1, 65535));
    bench_cmd->add_option("--sessions", bench.sessions, "sessions to serve with --serve, 0 for unlimited");
    bench_cmd->add_option("--workdir", bench.workdir, "payload directory");
    bench_cmd->add_option("--seed", bench.seed, "payload seed");

    DaemonArgs daemon;
    auto* daemon_cmd = app.add_subcommand("daemon", "run the control API for the web UI");
    daemon_cmd->add_option("--control-port", daemon.control_port, "loopback control port")
        ->check(CLI::Range(1, 65535));
    daemon_cmd->add_option("--port", daemon.transfer_port, "TCP transfer port")->check(CLI::Range(1, 65535));
    daemon_cmd->add_option("--name", daemon.name, "display name");
    daemon_cmd->add_option("--dest", daemon.dest, "download directory");
    daemon_cmd->add_flag("--auto-approve", daemon.auto_approve, "accept every request without asking");
    daemon_cmd->add_option("--ui-dir", daemon.ui_dir, "built web UI assets");
    daemon_cmd->add_option("--decision-timeout", daemon.decision_timeout, "seconds to wait for an answer")
        ->check(CLI::PositiveNumber);

    bool history_json = false;
    auto* history_cmd = app.add_subcommand("history", "show past transfers, newest first");
    history_cmd->add_flag("--json", history_json, "raw JSON records");

    std::vector<const char*> argv{"photon"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e, io.out, io.err);
        return rc == 0 ? kExitOk : kExitError;
    }

    if (*send_cmd) return cmd_send(send, g, io);
    if (*recv_cmd) return cmd_receive(recv, g, io);
    if (*peers_cmd) return cmd_peers(peers_timeout, g, io);
    if (*bench_cmd) return cmd_bench(bench, io);
    if (*daemon_cmd) return cmd_daemon(daemon, g, io);
    if (*history_cmd) return cmd_history(history_json, g, io);
    return kExitError;
}

}  // namespace photon
