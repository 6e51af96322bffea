#include "photon/client.hpp"

#include <fstream>

#include "httplib.h"
#include "json.hpp"
#include "photon/error.hpp"

namespace photon {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

httplib::Client make_client(const DiscoveredPeer& peer, const ClientOptions& options,
                            std::chrono::milliseconds read_timeout) {
    httplib::Client cli(peer.source.address, peer.transfer_port);
    cli.set_connection_timeout(options.connect_timeout);
    cli.set_read_timeout(read_timeout);
    cli.set_write_timeout(options.read_timeout);
    cli.set_keep_alive(true);
    cli.set_tcp_nodelay(true);
    return cli;
}

[[noreturn]] void throw_transport(httplib::Error err, const std::string& what) {
    if (err == httplib::Error::Connection) throw Error(Errc::ConnectError, what + ": " + httplib::to_string(err));
    if (err == httplib::Error::Canceled) throw Error(Errc::Interrupted, what + ": download aborted");
    throw Error(Errc::IoError, what + ": " + httplib::to_string(err));
}

std::string code_path(const SecretCode& code) { return "/photon/v1/" + code.value; }

FileIndex fetch_index_with(httplib::Client& cli, const SecretCode& code) {
    auto res = cli.Get(code_path(code) + "/index");
    if (!res) throw_transport(res.error(), "index");
    if (res->status == 404) throw Error(Errc::AuthError, "code rejected");
    if (res->status != 200) throw Error(Errc::ProtocolError, "index status " + std::to_string(res->status));
    try {
        return index_from_json(res->body);
    } catch (const Error& e) {
        throw Error(Errc::ProtocolError, e.what());
    }
}

struct Throttle {
    std::chrono::milliseconds interval;
    Clock::time_point last{};
    bool due() {
        auto now = Clock::now();
        if (now - last < interval) return false;
        last = now;
        return true;
    }
};

// Parses "bytes a-b/n" and returns a.
std::optional<std::uint64_t> content_range_start(const std::string& header) {
    auto sp = header.find(' ');
    auto dash = header.find('-');
    if (sp == std::string::npos || dash == std::string::npos || dash < sp) return std::nullopt;
    try {
        return std::stoull(header.substr(sp + 1, dash - sp - 1));
    } catch (...) {
        return std::nullopt;
    }
}

std::uint64_t hash_prefix(const fs::path& part, std::uint64_t length, Sha256& hasher) {
    std::ifstream in(part, std::ios::binary);
    std::vector<char> block(1 << 16);
    std::uint64_t done = 0;
    while (in && done < length) {
        auto want = static_cast<std::streamsize>(std::min<std::uint64_t>(block.size(), length - done));
        in.read(block.data(), want);
        auto got = static_cast<std::size_t>(in.gcount());
        if (got == 0) break;
        hasher.update(std::string_view(block.data(), got));
        done += got;
    }
    return done;
}

// Fills `report` as it goes so a caller sees partial progress after a throw.
void download_into(httplib::Client& cli, const SecretCode& code, const FileEntry& entry, const fs::path& dest_dir,
                   bool resume, const ClientOptions& options, std::uint64_t total_before, std::uint64_t total_bytes,
                   FileReport& report) {
    const auto start = Clock::now();
    report.ordinal = entry.index;
    report.name = entry.name;
    if (!is_valid_file_name(entry.name)) throw Error(Errc::ProtocolError, "unsafe file name '" + entry.name + "'");

    std::error_code ec;
    fs::create_directories(dest_dir, ec);
    const fs::path part = dest_dir / (entry.name + ".part");
    report.path = part;

    Sha256 hasher;
    std::uint64_t have = 0;
    if (resume && fs::exists(part, ec)) {
        auto existing = fs::file_size(part, ec);
        if (!ec && existing <= entry.size_bytes && existing > 0) {
            have = hash_prefix(part, existing, hasher);
            report.resumed = true;
        }
    }
    if (have == 0) hasher = Sha256();

    std::ofstream out;
    auto open_part = [&](bool append) {
        out.close();
        out.clear();
        out.open(part, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
        if (!out) throw Error(Errc::IoError, "cannot write " + part.string());
    };
    open_part(have > 0);

    std::uint64_t received = have;
    std::uint64_t this_request = 0;
    Throttle throttle{options.progress_interval};
    auto progress = [&](bool force) {
        if (options.progress) {
            options.progress->ordinal.store(entry.index);
            options.progress->bytes_done.store(total_before + received);
        }
        if (!options.observer || (!force && !throttle.due())) return;
        ReceiveEvent ev;
        ev.type = "transfer_progress";
        ev.state = ReceiverState::Fetching;
        ev.ordinal = entry.index;
        ev.name = entry.name;
        ev.file_bytes = received;
        ev.file_size = entry.size_bytes;
        ev.total_done = total_before + received;
        ev.total_bytes = total_bytes;
        auto elapsed = seconds_since(start);
        ev.throughput = elapsed > 0 ? static_cast<double>(received - have) / elapsed : 0.0;
        options.observer(ev);
    };

    if (received < entry.size_bytes) {
        const auto path = code_path(code) + "/file/" + std::to_string(entry.index);
        for (int attempt = 0; attempt < 2; ++attempt) {
            httplib::Headers headers;
            if (received > 0) headers.emplace("Range", "bytes=" + std::to_string(received) + "-");
            int status = 0;
            bool restart = false;
            auto res = cli.Get(
                path, headers,
                [&](const httplib::Response& r) {
                    status = r.status;
                    if (r.status == 206) {
                        auto startpos = content_range_start(r.get_header_value("Content-Range"));
                        return startpos && *startpos == received;
                    }
                    if (r.status == 200 && received > 0) {
                        // Server ignored the range: start over from byte 0.
                        open_part(false);
                        hasher = Sha256();
                        received = 0;
                        have = 0;
                        report.resumed = false;
                    }
                    return r.status == 200;
                },
                [&](const char* data, std::size_t len) {
                    out.write(data, static_cast<std::streamsize>(len));
                    if (!out) return false;
                    hasher.update(std::string_view(data, len));
                    received += len;
                    this_request += len;
                    progress(false);
                    if (options.cancel != nullptr && options.cancel->load()) return false;
                    return !(options.abort_after_bytes && this_request >= *options.abort_after_bytes);
                });
            out.flush();
            report.bytes_received = received - (report.resumed ? have : 0);
            if (status == 404) throw Error(Errc::AuthError, "file " + std::to_string(entry.index) + " rejected");
            if (status == 416 && received > 0 && attempt == 0) {
                open_part(false);
                hasher = Sha256();
                received = have = 0;
                report.resumed = false;
                restart = true;
            }
            if (restart) continue;
            if (status == 503) throw Error(Errc::IoError, "sender has no free stream slot");
            if (status != 0 && status != 200 && status != 206) {
                throw Error(Errc::ProtocolError, "file status " + std::to_string(status));
            }
            if (!res) throw_transport(res.error(), entry.name);
            break;
        }
    }
    out.close();
    if (!out) throw Error(Errc::IoError, "write failed for " + part.string());
    report.bytes_received = received - (report.resumed ? have : 0);
    report.duration = seconds_since(start);
    if (received != entry.size_bytes) {
        throw Error(Errc::Interrupted, entry.name + ": got " + std::to_string(received) + " of " +
                                           std::to_string(entry.size_bytes) + " bytes");
    }
    progress(true);

    if (hasher.finish_hex() != entry.sha256) {
        report.sha256_ok = false;
        throw Error(Errc::ChecksumMismatch, entry.name);
    }
    auto final_path = unique_destination(dest_dir, entry.name);
    fs::rename(part, final_path, ec);
    if (ec) throw Error(Errc::IoError, "rename " + part.string() + ": " + ec.message());
    report.path = final_path;
    report.sha256_ok = true;
    report.duration = seconds_since(start);
}

}  // namespace

void finalize_report(TransferReport& report, double wall_seconds) {
    report.total_bytes = 0;
    for (const auto& f : report.files) report.total_bytes += f.bytes_received;
    report.wall_duration = wall_seconds > 0 ? wall_seconds : 1e-9;
    report.mean_throughput = static_cast<double>(report.total_bytes) / report.wall_duration;
}

fs::path unique_destination(const fs::path& dir, const std::string& name) {
    auto candidate = dir / name;
    std::error_code ec;
    if (!fs::exists(candidate, ec)) return candidate;
    auto stem = fs::path(name).stem().string();
    auto ext = fs::path(name).extension().string();
    if (stem.empty()) {
        stem = name;
        ext.clear();
    }
    for (int n = 1;; ++n) {
        candidate = dir / (stem + " (" + std::to_string(n) + ")" + ext);
        if (!fs::exists(candidate, ec)) return candidate;
    }
}

DiscoveredPeer direct_peer(const std::string& host, std::uint16_t port) {
    DiscoveredPeer peer;
    peer.peer_id = std::string(32, '0');
    peer.display_name = host;
    peer.transfer_port = port;
    peer.source = Endpoint{host, port};
    peer.seen_at = Clock::now();
    return peer;
}

PermissionResult request_permission(const DiscoveredPeer& peer, const PeerIdentity& self,
                                    std::chrono::milliseconds timeout) {
    ClientOptions opts;
    auto cli = make_client(peer, opts, timeout);
    auto res = cli.Post("/photon/v1/request", identity_to_json(self), "application/json");
    if (!res) {
        if (res.error() == httplib::Error::Read) return PermissionResult{PermissionResult::Kind::TimedOut, {}, {}};
        throw_transport(res.error(), "request");
    }
    if (res->status == 408) return PermissionResult{PermissionResult::Kind::TimedOut, {}, {}};
    if (res->status == 409) throw Error(Errc::Busy, "sender is busy");
    if (res->status != 200) throw Error(Errc::ProtocolError, "handshake status " + std::to_string(res->status));
    try {
        auto body = nlohmann::json::parse(res->body);
        auto status = body.at("status").get<std::string>();
        if (status == "denied") return PermissionResult{PermissionResult::Kind::Denied, {}, {}};
        if (status != "granted") throw Error(Errc::ProtocolError, "unknown handshake status " + status);
        auto code = body.at("code").get<std::string>();
        if (!is_lower_hex(code, 32)) throw Error(Errc::ProtocolError, "malformed code");
        return PermissionResult{PermissionResult::Kind::Granted, SecretCode{code},
                                body.value("index_path", "/photon/v1/" + code + "/index")};
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ProtocolError, e.what());
    }
}

FileIndex fetch_index(const DiscoveredPeer& peer, const SecretCode& code, const ClientOptions& options) {
    auto cli = make_client(peer, options, options.read_timeout);
    return fetch_index_with(cli, code);
}

FileReport download_file(const DiscoveredPeer& peer, const SecretCode& code, const FileEntry& entry,
                         const fs::path& dest_dir, bool resume, const ClientOptions& options) {
    auto cli = make_client(peer, options, options.read_timeout);
    FileReport report;
    download_into(cli, code, entry, dest_dir, resume, options, 0, entry.size_bytes, report);
    return report;
}

bool send_done(const DiscoveredPeer& peer, const SecretCode& code, const ClientOptions& options) {
    auto cli = make_client(peer, options, options.read_timeout);
    auto res = cli.Post(code_path(code) + "/done");
    return res && res->status == 200;
}

ReceiveOutcome receive_all(const DiscoveredPeer& peer, const PeerIdentity& self, const fs::path& dest_dir,
                           const ClientOptions& options) {
    ReceiveOutcome outcome;
    auto set_state = [&](ReceiverEvent event, std::string detail = {}) {
        outcome.state = receiver_transition(outcome.state, event);
        if (options.progress) options.progress->state.store(outcome.state);
        if (options.observer) {
            ReceiveEvent ev;
            ev.type = "state";
            ev.state = outcome.state;
            ev.detail = std::move(detail);
            options.observer(ev);
        }
    };
    const auto wall_start = Clock::now();
    set_state(ReceiverEvent::PeerChosen);

    PermissionResult permission;
    try {
        permission = request_permission(peer, self, options.handshake_timeout);
    } catch (const Error& e) {
        outcome.kind = ReceiveOutcome::Kind::Failed;
        outcome.reason = e.what();
        set_state(ReceiverEvent::Timeout, outcome.reason);
        return outcome;
    }
    if (permission.kind == PermissionResult::Kind::Denied) {
        outcome.kind = ReceiveOutcome::Kind::Denied;
        set_state(ReceiverEvent::DeniedByPeer);
        return outcome;
    }
    if (permission.kind == PermissionResult::Kind::TimedOut) {
        outcome.kind = ReceiveOutcome::Kind::Failed;
        outcome.reason = "permission request timed out";
        set_state(ReceiverEvent::Timeout, outcome.reason);
        return outcome;
    }
    set_state(ReceiverEvent::Granted);
    const auto& code = *permission.code;

    auto cli = make_client(peer, options, options.read_timeout);
    try {
        outcome.index = fetch_index_with(cli, code);
    } catch (const Error& e) {
        outcome.kind = ReceiveOutcome::Kind::Failed;
        outcome.reason = e.what();
        finalize_report(outcome.report, seconds_since(wall_start));
        set_state(ReceiverEvent::TransferError, outcome.reason);
        return outcome;
    }
    if (options.progress) options.progress->total_bytes.store(outcome.index.total_bytes);

    std::uint64_t done_bytes = 0;
    std::string first_error;
    for (const auto& entry : outcome.index.entries) {
        FileReport report;
        bool ok = false;
        for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
            FileReport attempt_report;
            try {
                download_into(cli, code, entry, dest_dir, attempt > 0, options, done_bytes,
                              outcome.index.total_bytes, attempt_report);
                ok = true;
            } catch (const Error& e) {
                attempt_report.error = std::string(errc_name(e.code()));
                if (e.code() != Errc::Interrupted && e.code() != Errc::IoError) {
                    if (first_error.empty()) first_error = e.what();
                    report = std::move(attempt_report);
                    break;
                }
                if (attempt == 1 && first_error.empty()) first_error = e.what();
            }
            auto prior = report.bytes_received;
            report = std::move(attempt_report);
            if (attempt > 0) report.bytes_received += prior;
        }
        done_bytes += entry.size_bytes;
        if (options.observer) {
            ReceiveEvent ev;
            ev.type = "file_done";
            ev.state = outcome.state;
            ev.ordinal = entry.index;
            ev.name = entry.name;
            ev.file_bytes = report.bytes_received;
            ev.file_size = entry.size_bytes;
            ev.total_done = done_bytes;
            ev.total_bytes = outcome.index.total_bytes;
            ev.throughput = report.duration > 0 ? static_cast<double>(report.bytes_received) / report.duration : 0.0;
            ev.detail = report.error.value_or("ok");
            options.observer(ev);
        }
        outcome.report.files.push_back(std::move(report));
    }

    send_done(peer, code, options);
    finalize_report(outcome.report, seconds_since(wall_start));
    if (first_error.empty()) {
        outcome.kind = ReceiveOutcome::Kind::Done;
        set_state(ReceiverEvent::AllFilesVerified);
    } else {
        outcome.kind = ReceiveOutcome::Kind::Failed;
        outcome.reason = first_error;
        set_state(ReceiverEvent::TransferError, first_error);
    }
    return outcome;
}

}  // namespace photon
