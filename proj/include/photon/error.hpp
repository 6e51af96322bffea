#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace photon {

enum class Errc {
    EmptyName,
    InvalidIdentity,
    PathNotFound,
    Unreadable,
    DuplicateName,
    InvalidIndex,
    InvalidTransition,
    Oversize,
    BadMagic,
    Malformed,
    UnknownType,
    PortInUse,
    NoInterface,
    RngUnavailable,
    Busy,
    UnknownRequest,
    AlreadyDecided,
    UnknownCode,
    InvalidConfig,
    ConnectError,
    ProtocolError,
    AuthError,
    ChecksumMismatch,
    RangeNotSupported,
    IoError,
    Interrupted,
    EmptySizes,
    TargetUnreachable,
    DiskFull,
    NoPeersFound,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure surfaced by the library carries one of the codes above;
// callers switch on code() and use what() for humans.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace photon
