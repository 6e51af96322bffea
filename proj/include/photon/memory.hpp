#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <thread>

namespace photon {

/// Resident set size of this process, from /proc/self/statm.
std::uint64_t current_rss_bytes();
/// VmHWM from /proc/self/status.
std::uint64_t peak_rss_bytes();
/// Resets VmHWM to the current RSS. False where the kernel does not allow it.
bool reset_peak_rss();

/// Samples RSS on a background thread and keeps the maximum growth over the
/// value seen at construction.
class RssSampler {
public:
    explicit RssSampler(std::chrono::milliseconds period = std::chrono::milliseconds(2));
    ~RssSampler();
    RssSampler(const RssSampler&) = delete;
    RssSampler& operator=(const RssSampler&) = delete;

    std::uint64_t baseline() const noexcept { return baseline_; }
    std::uint64_t peak_growth() const noexcept;
    void stop();

private:
    std::uint64_t baseline_;
    std::atomic<std::uint64_t> peak_;
    std::jthread thread_;
};

}  // namespace photon
