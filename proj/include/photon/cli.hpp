#pragma once

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace photon {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitDenied = 2;
inline constexpr int kExitNoPeers = 3;

struct CliIo {
    std::istream& in;
    std::ostream& out;
    std::ostream& err;
};

/// Set by the signal handler in main; long-running commands poll it.
std::atomic<bool>& interrupt_flag();

/// Entry point behind the `photon` binary. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, CliIo io);

/// $XDG_DOWNLOAD_DIR, else ~/Downloads, else the working directory.
std::filesystem::path default_download_dir();

/// Host name cut to the display-name limit; "photon" if unavailable.
std::string default_display_name();

}  // namespace photon
