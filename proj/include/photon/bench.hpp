#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace photon {

struct BenchRow {
    double size_mb = 0;
    double seconds = 0;
    double throughput_mb_s = 0;

    friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

struct LinearFit {
    double slope = 0;      // seconds per MB
    double intercept = 0;  // seconds
    double r_squared = 0;

    friend bool operator==(const LinearFit&, const LinearFit&) = default;
};

struct BenchReport {
    std::vector<BenchRow> rows;  // ascending size
    LinearFit linear_fit;
    std::uint64_t peak_client_mem = 0;
    std::uint64_t peak_server_mem = 0;
    std::string environment;

    friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

/// Published Wi-Fi measurements (macOS <-> Android 13), shown next to local
/// rows for context only.
struct ReferenceRow {
    double size_mb;
    double seconds;
};
inline constexpr ReferenceRow kWifiReference[] = {
    {1, 0.039}, {10, 0.4}, {20, 1}, {50, 2}, {100, 5}, {1000, 62}, {5000, 314},
};

inline constexpr std::uint64_t kMiB = 1024 * 1024;

/// Deterministic pseudo-random file of exactly size_mb MiB in `dir`.
/// Throws Error(DiskFull) / Error(IoError).
std::filesystem::path generate_payload(std::uint64_t size_mb, std::uint64_t seed, const std::filesystem::path& dir);

/// Ordinary least squares of y on x; r_squared clamped to [0, 1].
LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y);

double median(std::vector<double> values);

struct BenchOptions {
    std::vector<std::uint64_t> sizes_mb;
    // "loopback" or "HOST:PORT" of a peer running `photon bench --serve`.
    std::string target = "loopback";
    int repetitions = 3;
    std::filesystem::path workdir;  // empty: a fresh temp directory
    std::uint64_t seed = 42;
    std::size_t chunk_size = 64 * 1024;
};

/// Throws Error(EmptySizes | TargetUnreachable | ChecksumMismatch ...).
BenchReport run_benchmark(const BenchOptions& options);

enum class ReportFormat { Table, Csv, Json };
std::optional<ReportFormat> parse_report_format(std::string_view s);

std::string format_report(const BenchReport& report, ReportFormat format);
/// Inverse of the json format. Throws Error(Malformed).
BenchReport report_from_json(std::string_view text);

/// Serves the seeded payloads for `sizes_mb` as repeated auto-approved
/// sessions on `port` until `sessions` sessions completed (0 = until `stop`).
void serve_benchmark(const std::vector<std::uint64_t>& sizes_mb, std::uint16_t port, int sessions,
                     const std::filesystem::path& workdir, std::uint64_t seed, const std::atomic<bool>& stop);

std::string host_description();

}  // namespace photon
