#include "photon/bench.hpp"

#include <sys/utsname.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "photon/client.hpp"
#include "photon/error.hpp"
#include "photon/memory.hpp"
#include "photon/server.hpp"

namespace photon {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

fs::path fresh_workdir(const fs::path& requested) {
    if (!requested.empty()) {
        fs::create_directories(requested);
        return requested;
    }
    auto dir = fs::temp_directory_path() / ("photon-bench-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir;
}

std::pair<std::string, std::uint16_t> split_target(const std::string& target) {
    auto colon = target.rfind(':');
    if (colon == std::string::npos || colon == 0) throw Error(Errc::InvalidConfig, "target must be HOST:PORT");
    int port = 0;
    try {
        port = std::stoi(target.substr(colon + 1));
    } catch (...) {
        port = 0;
    }
    if (port < 1 || port > 65535) throw Error(Errc::InvalidConfig, "bad port in target " + target);
    return {target.substr(0, colon), static_cast<std::uint16_t>(port)};
}

BenchRow make_row(double size_mb, double seconds) {
    return BenchRow{size_mb, seconds, seconds > 0 ? size_mb / seconds : 0.0};
}

void finish(BenchReport& report) {
    std::sort(report.rows.begin(), report.rows.end(),
              [](const BenchRow& a, const BenchRow& b) { return a.size_mb < b.size_mb; });
    std::vector<double> x, y;
    for (const auto& r : report.rows) {
        x.push_back(r.size_mb);
        y.push_back(r.seconds);
    }
    report.linear_fit = fit_linear(x, y);
}

void require_verified(const ReceiveOutcome& outcome) {
    if (outcome.kind == ReceiveOutcome::Kind::Denied) throw Error(Errc::ProtocolError, "benchmark sender denied");
    if (outcome.kind != ReceiveOutcome::Kind::Done) {
        if (outcome.reason.find("ConnectError") != std::string::npos) {
            throw Error(Errc::TargetUnreachable, outcome.reason);
        }
        throw Error(Errc::ChecksumMismatch, "benchmark transfer failed: " + outcome.reason);
    }
    for (const auto& f : outcome.report.files) {
        if (!f.sha256_ok) throw Error(Errc::ChecksumMismatch, f.name);
    }
}

BenchReport run_loopback(const BenchOptions& options, const fs::path& workdir) {
    BenchReport report;
    SecureRandom rng;
    auto self = new_peer_identity("bench-receiver", host_platform(), rng);
    auto sender = new_peer_identity("bench-sender", host_platform(), rng);

    ServerConfig config;
    config.bind_address = "127.0.0.1";
    config.transfer_port = pick_free_port();
    config.chunk_size = options.chunk_size;

    RssSampler sampler;
    for (auto size : options.sizes_mb) {
        auto payload = generate_payload(size, options.seed, workdir);
        auto share = build_share_set({payload});
        std::vector<double> times;
        for (int rep = 0; rep < options.repetitions; ++rep) {
            auto dest = workdir / ("recv-" + std::to_string(size) + "-" + std::to_string(rep));
            fs::remove_all(dest);
            TransferServer server(config, sender, share, ApprovalPolicy::AutoApprove);
            server.start();
            auto outcome = receive_all(direct_peer("127.0.0.1", config.transfer_port), self, dest);
            server.stop();
            require_verified(outcome);
            times.push_back(outcome.report.wall_duration);
            fs::remove_all(dest);
        }
        fs::remove(payload);
        report.rows.push_back(make_row(static_cast<double>(size), median(times)));
    }
    sampler.stop();
    report.peak_client_mem = sampler.peak_growth();
    report.peak_server_mem = sampler.peak_growth();
    report.environment = host_description() + "; loopback, sender and receiver in one process";
    return report;
}

BenchReport run_remote(const BenchOptions& options, const fs::path& workdir) {
    auto [host, port] = split_target(options.target);
    BenchReport report;
    SecureRandom rng;
    auto self = new_peer_identity("bench-receiver", host_platform(), rng);
    std::map<std::uint64_t, std::vector<double>> times;

    RssSampler sampler;
    for (int rep = 0; rep < options.repetitions; ++rep) {
        auto dest = workdir / ("recv-remote-" + std::to_string(rep));
        fs::remove_all(dest);
        ClientOptions copts;
        auto outcome = receive_all(direct_peer(host, port), self, dest, copts);
        // Between sessions the serving side restarts its server; wait for it.
        for (int retry = 0; rep > 0 && retry < 50 && outcome.kind == ReceiveOutcome::Kind::Failed &&
                            (outcome.reason.find("Busy") != std::string::npos ||
                             outcome.reason.find("ConnectError") != std::string::npos);
             ++retry) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
            outcome = receive_all(direct_peer(host, port), self, dest, copts);
        }
        require_verified(outcome);
        for (const auto& f : outcome.report.files) {
            const auto& entry = outcome.index.entries.at(f.ordinal);
            if (entry.size_bytes % kMiB != 0) continue;
            times[entry.size_bytes / kMiB].push_back(f.duration);
        }
        fs::remove_all(dest);
    }
    sampler.stop();
    for (auto size : options.sizes_mb) {
        auto it = times.find(size);
        if (it == times.end()) throw Error(Errc::ProtocolError, "remote does not serve a " + std::to_string(size) + " MB payload");
        report.rows.push_back(make_row(static_cast<double>(size), median(it->second)));
    }
    report.peak_client_mem = sampler.peak_growth();
    report.peak_server_mem = 0;
    report.environment = host_description() + "; remote sender " + options.target;
    return report;
}

}  // namespace

fs::path generate_payload(std::uint64_t size_mb, std::uint64_t seed, const fs::path& dir) {
    fs::create_directories(dir);
    auto path = dir / ("payload-" + std::to_string(size_mb) + "mb-" + std::to_string(seed) + ".bin");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw Error(Errc::IoError, "cannot create " + path.string());
    std::mt19937_64 gen(seed ^ (size_mb * 0x9e3779b97f4a7c15ULL));
    std::vector<std::uint64_t> block(kMiB / sizeof(std::uint64_t));
    for (std::uint64_t mb = 0; mb < size_mb; ++mb) {
        for (auto& word : block) word = gen();
        if (std::fwrite(block.data(), 1, kMiB, f) != kMiB) {
            int err = errno;
            std::fclose(f);
            throw Error(err == ENOSPC ? Errc::DiskFull : Errc::IoError, path.string() + ": " + std::strerror(err));
        }
    }
    if (std::fclose(f) != 0) {
        int err = errno;
        throw Error(err == ENOSPC ? Errc::DiskFull : Errc::IoError, path.string() + ": " + std::strerror(err));
    }
    return path;
}

LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
    LinearFit fit;
    const auto n = std::min(x.size(), y.size());
    if (n == 0) return fit;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0) {
        fit.intercept = my;
        fit.r_squared = syy == 0 ? 1.0 : 0.0;
        return fit;
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - (fit.intercept + fit.slope * x[i]);
        ss_res += r * r;
    }
    fit.r_squared = syy == 0 ? 1.0 : std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
    return fit;
}

double median(std::vector<double> values) {
    if (values.empty()) return 0;
    std::sort(values.begin(), values.end());
    auto mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : (values[mid - 1] + values[mid]) / 2.0;
}

BenchReport run_benchmark(const BenchOptions& options) {
    if (options.sizes_mb.empty()) throw Error(Errc::EmptySizes, "no sizes given");
    for (auto s : options.sizes_mb) {
        if (s < 1) throw Error(Errc::InvalidConfig, "sizes must be >= 1 MB");
    }
    if (options.repetitions < 1) throw Error(Errc::InvalidConfig, "repetitions must be >= 1");
    auto workdir = fresh_workdir(options.workdir);
    BenchReport report = options.target == "loopback" ? run_loopback(options, workdir) : run_remote(options, workdir);
    if (options.workdir.empty()) fs::remove_all(workdir);
    finish(report);
    return report;
}

std::optional<ReportFormat> parse_report_format(std::string_view s) {
    if (s == "table") return ReportFormat::Table;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    return std::nullopt;
}

std::string format_report(const BenchReport& report, ReportFormat format) {
    std::ostringstream out;
    switch (format) {
        case ReportFormat::Csv:
            out << "size_mb,seconds,throughput_mb_s\n";
            for (const auto& r : report.rows) {
                out << fmt("%g", r.size_mb) << ',' << fmt("%.6f", r.seconds) << ',' << fmt("%.3f", r.throughput_mb_s)
                    << '\n';
            }
            break;
        case ReportFormat::Json: {
            nlohmann::ordered_json j;
            auto rows = nlohmann::ordered_json::array();
            for (const auto& r : report.rows) {
                rows.push_back({{"size_mb", r.size_mb}, {"seconds", r.seconds}, {"throughput_mb_s", r.throughput_mb_s}});
            }
            j["rows"] = std::move(rows);
            j["linear_fit"] = {{"slope", report.linear_fit.slope},
                               {"intercept", report.linear_fit.intercept},
                               {"r_squared", report.linear_fit.r_squared}};
            j["peak_client_mem"] = report.peak_client_mem;
            j["peak_server_mem"] = report.peak_server_mem;
            j["environment"] = report.environment;
            auto reference = nlohmann::ordered_json::array();
            for (const auto& r : kWifiReference) reference.push_back({{"size_mb", r.size_mb}, {"seconds", r.seconds}});
            j["wifi_reference"] = std::move(reference);
            out << j.dump(2) << '\n';
            break;
        }
        case ReportFormat::Table: {
            out << "File size (MB)  Time taken (s)  Throughput (MB/s)\n";
            for (const auto& r : report.rows) {
                char line[96];
                std::snprintf(line, sizeof line, "%14g  %14.4f  %17.2f\n", r.size_mb, r.seconds, r.throughput_mb_s);
                out << line;
            }
            out << "linear fit: seconds = " << fmt("%.6f", report.linear_fit.slope) << " * MB + "
                << fmt("%.6f", report.linear_fit.intercept) << "  (r^2 = " << fmt("%.4f", report.linear_fit.r_squared)
                << ")\n";
            out << "peak memory growth: client " << fmt("%.1f", static_cast<double>(report.peak_client_mem) / kMiB)
                << " MiB, server " << fmt("%.1f", static_cast<double>(report.peak_server_mem) / kMiB) << " MiB\n";
            out << "environment: " << report.environment << '\n';
            out << "Wi-Fi reference (macOS <-> Android 13):";
            for (const auto& r : kWifiReference) out << ' ' << fmt("%g", r.size_mb) << "MB=" << fmt("%g", r.seconds) << 's';
            out << '\n';
            break;
        }
    }
    return out.str();
}

BenchReport report_from_json(std::string_view text) {
    BenchReport report;
    try {
        auto j = nlohmann::json::parse(text);
        for (const auto& r : j.at("rows")) {
            report.rows.push_back(BenchRow{r.at("size_mb").get<double>(), r.at("seconds").get<double>(),
                                           r.at("throughput_mb_s").get<double>()});
        }
        const auto& fit = j.at("linear_fit");
        report.linear_fit = LinearFit{fit.at("slope").get<double>(), fit.at("intercept").get<double>(),
                                      fit.at("r_squared").get<double>()};
        report.peak_client_mem = j.at("peak_client_mem").get<std::uint64_t>();
        report.peak_server_mem = j.at("peak_server_mem").get<std::uint64_t>();
        report.environment = j.at("environment").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Malformed, e.what());
    }
    return report;
}

void serve_benchmark(const std::vector<std::uint64_t>& sizes_mb, std::uint16_t port, int sessions,
                     const fs::path& workdir, std::uint64_t seed, const std::atomic<bool>& stop) {
    if (sizes_mb.empty()) throw Error(Errc::EmptySizes, "no sizes given");
    auto dir = fresh_workdir(workdir);
    std::vector<fs::path> payloads;
    for (auto size : sizes_mb) payloads.push_back(generate_payload(size, seed, dir));
    auto share = build_share_set(payloads);
    SecureRandom rng;
    auto identity = new_peer_identity("bench-sender", host_platform(), rng);
    ServerConfig config;
    config.transfer_port = port;

    for (int served = 0; (sessions == 0 || served < sessions) && !stop.load(); ++served) {
        TransferServer server(config, identity, share, ApprovalPolicy::AutoApprove);
        server.start();
        while (!stop.load() && server.sessions().state() != SenderState::Completed) {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        server.stop();
    }
}

std::string host_description() {
    utsname u{};
    std::string desc = "unknown host";
    if (::uname(&u) == 0) desc = std::string(u.sysname) + " " + u.release + " " + u.machine;
    desc += ", " + std::to_string(std::thread::hardware_concurrency()) + " cpu";
    return desc;
}

}  // namespace photon
