#include "photon/memory.hpp"

#include <unistd.h>

#include <fstream>
#include <string>

namespace photon {

std::uint64_t current_rss_bytes() {
    std::ifstream statm("/proc/self/statm");
    std::uint64_t size = 0, resident = 0;
    statm >> size >> resident;
    return resident * static_cast<std::uint64_t>(::sysconf(_SC_PAGESIZE));
}

std::uint64_t peak_rss_bytes() {
    std::ifstream status("/proc/self/status");
    std::string line;
    while (std::getline(status, line)) {
        if (line.rfind("VmHWM:", 0) == 0) return std::stoull(line.substr(6)) * 1024;
    }
    return 0;
}

bool reset_peak_rss() {
    std::ofstream clear("/proc/self/clear_refs");
    clear << "5";
    clear.flush();
    return static_cast<bool>(clear);
}

RssSampler::RssSampler(std::chrono::milliseconds period) : baseline_(current_rss_bytes()), peak_(baseline_) {
    thread_ = std::jthread([this, period](std::stop_token stop) {
        while (!stop.stop_requested()) {
            auto now = current_rss_bytes();
            auto prev = peak_.load();
            while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
            }
            std::this_thread::sleep_for(period);
        }
    });
}

RssSampler::~RssSampler() { stop(); }

void RssSampler::stop() {
    if (thread_.joinable()) {
        thread_.request_stop();
        thread_.join();
    }
}

std::uint64_t RssSampler::peak_growth() const noexcept {
    auto peak = peak_.load();
    return peak > baseline_ ? peak - baseline_ : 0;
}

}  // namespace photon
