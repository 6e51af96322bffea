#include "photon/error.hpp"

namespace photon {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::EmptyName: return "EmptyName";
        case Errc::InvalidIdentity: return "InvalidIdentity";
        case Errc::PathNotFound: return "PathNotFound";
        case Errc::Unreadable: return "Unreadable";
        case Errc::DuplicateName: return "DuplicateName";
        case Errc::InvalidIndex: return "InvalidIndex";
        case Errc::InvalidTransition: return "InvalidTransition";
        case Errc::Oversize: return "Oversize";
        case Errc::BadMagic: return "BadMagic";
        case Errc::Malformed: return "Malformed";
        case Errc::UnknownType: return "UnknownType";
        case Errc::PortInUse: return "PortInUse";
        case Errc::NoInterface: return "NoInterface";
        case Errc::RngUnavailable: return "RngUnavailable";
        case Errc::Busy: return "Busy";
        case Errc::UnknownRequest: return "UnknownRequest";
        case Errc::AlreadyDecided: return "AlreadyDecided";
        case Errc::UnknownCode: return "UnknownCode";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::ConnectError: return "ConnectError";
        case Errc::ProtocolError: return "ProtocolError";
        case Errc::AuthError: return "AuthError";
        case Errc::ChecksumMismatch: return "ChecksumMismatch";
        case Errc::RangeNotSupported: return "RangeNotSupported";
        case Errc::IoError: return "IoError";
        case Errc::Interrupted: return "Interrupted";
        case Errc::EmptySizes: return "EmptySizes";
        case Errc::TargetUnreachable: return "TargetUnreachable";
        case Errc::DiskFull: return "DiskFull";
        case Errc::NoPeersFound: return "NoPeersFound";
    }
    return "Unknown";
}

}  // namespace photon
