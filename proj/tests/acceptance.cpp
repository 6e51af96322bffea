// Acceptance gate: one PASS/FAIL line per primary criterion.
#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "photon/bench.hpp"
#include "photon/client.hpp"
#include "photon/error.hpp"
#include "photon/memory.hpp"
#include "photon/server.hpp"
#include "photon/state.hpp"
#include "support.hpp"

extern char** environ;

using namespace photon;
using namespace std::chrono_literals;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
    if (!ok) ++failures;
}

void guarded(const std::string& name, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(name, false, std::string("exception: ") + e.what());
    }
}

double secs(Clock::duration d) { return std::chrono::duration<double>(d).count(); }

std::string fmt(double v, int precision = 2) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(precision);
    os << v;
    return os.str();
}

constexpr double kMiBd = 1024.0 * 1024.0;

pid_t spawn(const std::vector<std::string>& args, const fs::path& log) {
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, 1, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&actions, 1, 2);
    posix_spawn_file_actions_addopen(&actions, 0, "/dev/null", O_RDONLY, 0);
    std::vector<char*> argv;
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    pid_t pid = -1;
    int rc = posix_spawn(&pid, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) throw std::runtime_error(std::string("posix_spawn: ") + std::strerror(rc));
    return pid;
}

int wait_exit(pid_t pid) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

ServerConfig loopback_config() {
    ServerConfig c;
    c.bind_address = "127.0.0.1";
    c.transfer_port = pick_free_port();
    return c;
}

// Must run before any thread exists: the sender is forked into its own process
// so each side's resident set is measured separately.
void bounded_memory() {
    const std::string name = "bounded-memory";
    test::TempDir dir;
    auto src = dir / "sparse-1gib.bin";
    {
        int fd = ::open(src.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd < 0 || ::ftruncate(fd, 1ll << 30) != 0) throw std::runtime_error("cannot create sparse file");
        ::close(fd);
    }
    auto share = build_share_set({src});
    auto config = loopback_config();
    auto sender_id = test::identity("mem-sender");

    int to_parent[2];
    if (::pipe(to_parent) != 0) throw std::runtime_error("pipe");
    pid_t child = ::fork();
    if (child == 0) {
        ::close(to_parent[0]);
        std::uint64_t growth = UINT64_MAX;
        try {
            TransferServer server(config, sender_id, share, ApprovalPolicy::AutoApprove);
            server.start();
            RssSampler sampler;
            char ready = 'r';
            (void)!::write(to_parent[1], &ready, 1);
            auto deadline = Clock::now() + 300s;
            while (server.sessions().state() != SenderState::Completed && Clock::now() < deadline) {
                std::this_thread::sleep_for(20ms);
            }
            sampler.stop();
            growth = sampler.peak_growth();
            server.stop();
        } catch (...) {
        }
        (void)!::write(to_parent[1], &growth, sizeof growth);
        ::_exit(0);
    }
    ::close(to_parent[1]);
    char ready = 0;
    if (::read(to_parent[0], &ready, 1) != 1) throw std::runtime_error("sender process did not start");

    RssSampler sampler;
    auto out = receive_all(direct_peer("127.0.0.1", config.transfer_port), test::identity("mem-receiver"),
                           dir / "dst");
    sampler.stop();
    std::uint64_t sender_growth = UINT64_MAX;
    if (::read(to_parent[0], &sender_growth, sizeof sender_growth) != sizeof sender_growth) sender_growth = UINT64_MAX;
    ::close(to_parent[0]);
    wait_exit(child);

    const std::uint64_t limit = 64ull << 20;
    bool verified = out.kind == ReceiveOutcome::Kind::Done && out.report.files.size() == 1 &&
                    out.report.files[0].sha256_ok;
    auto receiver_growth = sampler.peak_growth();
    report(name, verified && sender_growth < limit && receiver_growth < limit,
           "1 GiB sparse file verified=" + std::string(verified ? "yes" : "no") +
               ", sender RSS growth " + fmt(static_cast<double>(sender_growth) / kMiBd) +
               " MiB, receiver RSS growth " + fmt(static_cast<double>(receiver_growth) / kMiBd) + " MiB (limit 64 MiB)");
}

void end_to_end() {
    const std::string name = "end-to-end-cli";
    test::TempDir dir;
    std::vector<fs::path> files{dir / "share" / "empty.bin", dir / "share" / "one-mib.bin",
                                dir / "share" / "hundred-mib.bin"};
    test::write_random(files[0], 0, 1);
    test::write_random(files[1], 1ull << 20, 2);
    test::write_random(files[2], 100ull << 20, 3);
    auto disc = std::to_string(test::free_udp_port());
    auto port = std::to_string(pick_free_port());
    auto history = (dir / "history.jsonl").string();

    auto start = Clock::now();
    auto tx = spawn({PHOTON_BIN, "send", files[0].string(), files[1].string(), files[2].string(), "--auto-approve",
                     "--name", "e2e-sender", "--port", port, "--discovery-port", disc, "--history", history},
                    dir / "send.log");
    std::this_thread::sleep_for(300ms);
    auto rx = spawn({PHOTON_BIN, "receive", "--auto", "--dest", (dir / "dst").string(), "--discovery-port", disc,
                     "--history", history},
                    dir / "receive.log");
    int rx_code = wait_exit(rx);
    if (rx_code != 0) ::kill(tx, SIGTERM);
    int tx_code = wait_exit(tx);
    double elapsed = secs(Clock::now() - start);

    int verified = 0;
    for (const auto& f : files) {
        auto got = dir / "dst" / f.filename();
        if (fs::exists(got) && sha256_file(got) == sha256_file(f)) ++verified;
    }
    report(name, rx_code == 0 && tx_code == 0 && verified == 3 && elapsed < 30.0,
           "send exit " + std::to_string(tx_code) + ", receive exit " + std::to_string(rx_code) + ", " +
               std::to_string(verified) + "/3 sha256 verified (0 B, 1 MiB, 100 MiB), " + fmt(elapsed) +
               " s (limit 30 s)");
}

void throughput_floor() {
    const std::string name = "throughput-floor";
    test::TempDir dir;
    BenchOptions opts;
    opts.sizes_mb = {100};
    opts.repetitions = 3;
    opts.workdir = dir.path();
    auto r = run_benchmark(opts);
    auto mbps = r.rows.at(0).throughput_mb_s;
    report(name, mbps >= 50.0, "100 MB loopback median " + fmt(mbps, 1) + " MB/s (floor 50 MB/s)");
}

void linearity() {
    const std::string name = "linearity";
    test::TempDir dir;
    BenchOptions opts;
    opts.sizes_mb = {1, 10, 50, 100};
    opts.repetitions = 3;
    opts.workdir = dir.path();
    auto start = Clock::now();
    auto r = run_benchmark(opts);
    double elapsed = secs(Clock::now() - start);
    bool increasing = true;
    std::string medians;
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        if (i > 0 && !(r.rows[i].seconds > r.rows[i - 1].seconds)) increasing = false;
        medians += (i ? ", " : "") + fmt(r.rows[i].seconds, 4);
    }
    report(name, r.linear_fit.r_squared >= 0.9 && increasing && elapsed < 120.0,
           "r^2 " + fmt(r.linear_fit.r_squared, 4) + " (min 0.9), medians [" + medians + "] s " +
               (increasing ? "strictly increasing" : "NOT strictly increasing") + ", " + fmt(elapsed, 1) +
               " s (limit 120 s)");
}

void security() {
    const std::string name = "capability-urls";
    test::TempDir dir;
    test::write_random(dir / "share" / "secret-a.bin", 4096, 1);
    test::write_random(dir / "share" / "secret-b.bin", 100, 2);
    auto share = build_share_set({dir / "share"});

    // First session: granted then closed, leaving a revoked code.
    auto c1 = loopback_config();
    TransferServer first(c1, test::identity("s"), share, ApprovalPolicy::AutoApprove);
    first.start();
    auto p1 = direct_peer("127.0.0.1", c1.transfer_port);
    auto revoked = *request_permission(p1, test::identity("r"), 5s).code;
    send_done(p1, revoked);

    // Second session stays live so there is something to leak.
    auto c2 = loopback_config();
    TransferServer second(c2, test::identity("s"), share, ApprovalPolicy::AutoApprove);
    second.start();
    auto p2 = direct_peer("127.0.0.1", c2.transfer_port);
    auto live = *request_permission(p2, test::identity("r"), 5s).code;

    std::vector<std::string> codes;
    SecureRandom rng;
    while (codes.size() < 1000) {
        auto c = random_hex128(rng);
        if (c != live.value && c != revoked.value) codes.push_back(c);
    }
    std::string upper = live.value;
    for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    for (const std::string& m : {std::string(), std::string("x"), live.value.substr(0, 31), live.value + "0", upper,
                                 std::string(32, 'g'), std::string("..%2f..%2f"), std::string(64, 'a'),
                                 live.value.substr(0, 16) + "-" + live.value.substr(17)}) {
        codes.push_back(m);
    }
    codes.push_back(revoked.value);

    std::size_t checked = 0;
    std::size_t leaks = 0;
    for (auto* server : {&first, &second}) {
        httplib::Client cli("127.0.0.1", server->port());
        cli.set_keep_alive(true);
        for (const auto& code : codes) {
            auto base = "/photon/v1/" + code;
            std::vector<httplib::Result> results;
            results.push_back(cli.Get(base + "/index"));
            for (int ordinal : {0, 1, 2}) results.push_back(cli.Get(base + "/file/" + std::to_string(ordinal)));
            results.push_back(cli.Get(base + "/file/0", {{"Range", "bytes=0-"}}));
            results.push_back(cli.Post(base + "/done", "", "application/json"));
            for (auto& res : results) {
                ++checked;
                if (!res || res->status != 404 || !res->body.empty()) ++leaks;
            }
        }
    }
    auto observed = first.bytes_served() + second.bytes_served();
    // Positive control: the live code still works.
    httplib::Client ok("127.0.0.1", second.port());
    auto control = ok.Get("/photon/v1/" + live.value + "/index");
    bool control_ok = control && control->status == 200;
    first.stop();
    second.stop();
    report(name, leaks == 0 && observed == 0 && control_ok,
           std::to_string(checked) + " requests over " + std::to_string(codes.size()) +
               " non-granted/malformed/revoked codes, " + std::to_string(leaks) + " non-empty-404 responses, " +
               std::to_string(observed) + " file bytes served; live code control " + (control_ok ? "ok" : "broken"));
}

void code_regeneration() {
    const std::string name = "code-regeneration";
    SecureRandom rng;
    std::set<std::string> seen;
    bool shape = true;
    for (int i = 0; i < 10000; ++i) {
        auto c = generate_secret_code(rng).value;
        shape = shape && is_lower_hex(c, 32);
        seen.insert(c);
    }
    test::TempDir dir;
    test::write_bytes(dir / "f", "x");
    auto share = build_share_set({dir / "f"});
    std::vector<std::string> cycle_codes;
    for (int cycle = 0; cycle < 2; ++cycle) {
        auto c = loopback_config();
        TransferServer server(c, test::identity("s"), share, ApprovalPolicy::AutoApprove);
        server.start();
        auto peer = direct_peer("127.0.0.1", c.transfer_port);
        auto code = *request_permission(peer, test::identity("r"), 5s).code;
        send_done(peer, code);
        cycle_codes.push_back(code.value);
        server.stop();
    }
    bool distinct_cycles = cycle_codes[0] != cycle_codes[1];
    report(name, seen.size() == 10000 && shape && distinct_cycles,
           std::to_string(seen.size()) + "/10000 distinct 32-hex codes; consecutive sessions " +
               (distinct_cycles ? "got distinct codes" : "REUSED a code"));
}

void state_machines() {
    const std::string name = "state-machines";
    using SS = SenderState;
    using SE = SenderEvent;
    using RS = ReceiverState;
    using RE = ReceiverEvent;
    const std::map<std::pair<SS, SE>, SS> sender{
        {{SS::Idle, SE::StartServing}, SS::Serving},         {{SS::Serving, SE::RequestReceived}, SS::PendingApproval},
        {{SS::PendingApproval, SE::Approve}, SS::Active},    {{SS::PendingApproval, SE::Deny}, SS::Serving},
        {{SS::Active, SE::ReceiverDone}, SS::Completed},     {{SS::Active, SE::StopServer}, SS::Terminated},
        {{SS::Serving, SE::StopServer}, SS::Terminated},     {{SS::Completed, SE::StopServer}, SS::Terminated}};
    const std::map<std::pair<RS, RE>, RS> receiver{
        {{RS::Discovering, RE::PeerChosen}, RS::Requesting}, {{RS::Requesting, RE::Granted}, RS::Fetching},
        {{RS::Requesting, RE::DeniedByPeer}, RS::Denied},    {{RS::Fetching, RE::AllFilesVerified}, RS::Done},
        {{RS::Fetching, RE::TransferError}, RS::Failed},     {{RS::Requesting, RE::Timeout}, RS::Failed}};

    auto start = Clock::now();
    int pairs = 0;
    int mismatches = 0;
    auto check = [&](auto state, auto event, const auto& table, auto fn) {
        ++pairs;
        auto it = table.find({state, event});
        try {
            auto next = fn(state, event);
            if (it == table.end() || it->second != next) ++mismatches;
        } catch (const Error& e) {
            if (it != table.end() || e.code() != Errc::InvalidTransition) ++mismatches;
        }
    };
    for (auto s : kAllSenderStates) {
        for (auto e : kAllSenderEvents) check(s, e, sender, sender_transition);
    }
    for (auto s : kAllReceiverStates) {
        for (auto e : kAllReceiverEvents) check(s, e, receiver, receiver_transition);
    }
    double elapsed = secs(Clock::now() - start);
    report(name, mismatches == 0 && pairs == 72 && elapsed < 1.0,
           std::to_string(pairs) + " (state, event) pairs, " + std::to_string(mismatches) + " mismatches, " +
               fmt(elapsed * 1000, 3) + " ms (limit 1 s)");
}

void discovery() {
    const std::string name = "discovery";
    auto port = test::free_udp_port();
    auto sender = test::identity("announcer");
    Responder responder(sender, 48852, ResponderOptions{port, "127.0.0.1"});

    // Time to first announce, with a raw socket so the window does not bound the measurement.
    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    sockaddr_in to{};
    to.sin_family = AF_INET;
    to.sin_port = htons(port);
    to.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    timeval tv{2, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    auto probe = encode_message(ProbeMessage{test::identity("rx").peer_id, "rx"});
    auto start = Clock::now();
    ::sendto(fd, probe.data(), probe.size(), 0, reinterpret_cast<sockaddr*>(&to), sizeof to);
    char buf[2048];
    auto n = ::recv(fd, buf, sizeof buf, 0);
    double reply_s = secs(Clock::now() - start);
    bool answered = n > 0 && std::holds_alternative<AnnounceMessage>(decode_message(std::string_view(buf, n)));

    // Garbage: nothing comes back within a second.
    timeval one{1, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &one, sizeof one);
    for (std::string junk : {std::string("xyz"), std::string(R"({"magic":"OTHER","type":"probe"})"),
                             std::string(1500, 'A'), std::string("{\"magic\":\"PHOTON/1\",\"type\":\"probe\"}")}) {
        ::sendto(fd, junk.data(), junk.size(), 0, reinterpret_cast<sockaddr*>(&to), sizeof to);
    }
    int garbage_replies = 0;
    while (::recv(fd, buf, sizeof buf, 0) > 0) ++garbage_replies;
    ::close(fd);

    auto self_results = probe_and_collect(sender, 500ms, ProbeOptions{port, {"127.0.0.1"}});
    auto other_results = probe_and_collect(test::identity("other"), 500ms, ProbeOptions{port, {"127.0.0.1"}});
    bool self_excluded = self_results.empty() && other_results.size() == 1;
    report(name, answered && reply_s < 2.0 && garbage_replies == 0 && self_excluded,
           "announce after " + fmt(reply_s * 1000, 1) + " ms (limit 2 s), " + std::to_string(garbage_replies) +
               " replies to 4 garbage datagrams, self " + (self_excluded ? "excluded" : "NOT excluded"));
}

void resume() {
    const std::string name = "resume";
    test::TempDir dir;
    auto src = dir / "share" / "fifty.bin";
    test::write_random(src, 50ull << 20, 5);
    auto c = loopback_config();
    TransferServer server(c, test::identity("s"), build_share_set({src}), ApprovalPolicy::AutoApprove);
    server.start();
    auto peer = direct_peer("127.0.0.1", c.transfer_port);
    auto code = *request_permission(peer, test::identity("r"), 5s).code;
    auto entry = fetch_index(peer, code).entries.at(0);
    ClientOptions opts;
    opts.abort_after_bytes = entry.size_bytes / 2;
    bool interrupted = false;
    try {
        download_file(peer, code, entry, dir / "dst", false, opts);
    } catch (const Error& e) {
        interrupted = e.code() == Errc::Interrupted;
    }
    auto partial = fs::exists(dir / "dst" / "fifty.bin.part") ? fs::file_size(dir / "dst" / "fifty.bin.part") : 0;
    auto rep = download_file(peer, code, entry, dir / "dst", true);
    bool ok = interrupted && rep.resumed && rep.sha256_ok && sha256_file(dir / "dst" / "fifty.bin") == entry.sha256 &&
              rep.bytes_received == entry.size_bytes - partial;
    server.stop();
    report(name, ok,
           "killed at " + fmt(100.0 * static_cast<double>(partial) / static_cast<double>(entry.size_bytes), 1) +
               "% of 50 MiB, resumed with Range for " + std::to_string(rep.bytes_received) + " bytes, sha256 " +
               (rep.sha256_ok ? "verified" : "MISMATCH"));
}

void denial_and_timeout() {
    const std::string name = "denial-and-timeout";
    test::TempDir dir;
    test::write_random(dir / "share" / "f.bin", 1000, 1);
    auto share = build_share_set({dir / "share"});

    auto c1 = loopback_config();
    TransferServer deny(c1, test::identity("s"), share, ApprovalPolicy::AutoDeny);
    deny.start();
    auto dest = dir / "dst";
    auto out = receive_all(direct_peer("127.0.0.1", c1.transfer_port), test::identity("r"), dest);
    bool dest_empty = !fs::exists(dest) || fs::is_empty(dest);
    bool denied = out.kind == ReceiveOutcome::Kind::Denied && out.state == ReceiverState::Denied && dest_empty;
    deny.stop();

    auto c2 = loopback_config();
    TransferServer manual(c2, test::identity("s"), share, ApprovalPolicy::Manual, 1s);
    manual.start();
    auto start = Clock::now();
    auto res = request_permission(direct_peer("127.0.0.1", c2.transfer_port), test::identity("r"), 10s);
    double waited = secs(Clock::now() - start);
    bool timed_out = res.kind == PermissionResult::Kind::TimedOut && waited >= 1.0 && waited < 2.0 &&
                     manual.sessions().state() == SenderState::Serving && manual.sessions().active_sessions() == 0;
    manual.stop();
    report(name, denied && timed_out,
           std::string("auto-deny -> ") + (denied ? "Denied with empty dest" : "WRONG outcome") +
               "; undecided request -> " + (res.kind == PermissionResult::Kind::TimedOut ? "TimedOut" : "not TimedOut") +
               " after " + fmt(waited) + " s, sender back in " + std::string(to_string(manual.sessions().state())));
}

}  // namespace

int main() {
    std::signal(SIGPIPE, SIG_IGN);
    guarded("bounded-memory", bounded_memory);
    guarded("end-to-end-cli", end_to_end);
    guarded("throughput-floor", throughput_floor);
    guarded("linearity", linearity);
    guarded("capability-urls", security);
    guarded("code-regeneration", code_regeneration);
    guarded("state-machines", state_machines);
    guarded("discovery", discovery);
    guarded("resume", resume);
    guarded("denial-and-timeout", denial_and_timeout);
    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
