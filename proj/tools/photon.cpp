#include <csignal>
#include <iostream>

#include "photon/cli.hpp"

namespace {
void on_signal(int) { photon::interrupt_flag().store(true); }
}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::signal(SIGPIPE, SIG_IGN);
    std::vector<std::string> args(argv + 1, argv + argc);
    return photon::run_cli(args, {std::cin, std::cout, std::cerr});
}
