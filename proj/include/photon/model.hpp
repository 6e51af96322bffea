#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "photon/crypto.hpp"

namespace photon {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxDisplayNameBytes = 64;

enum class Platform { Android, Ios, Windows, Linux, MacOs, Other };

std::string_view to_string(Platform p) noexcept;
/// Unknown strings map to Platform::Other.
Platform platform_from_string(std::string_view s) noexcept;
/// Platform of the running host.
Platform host_platform() noexcept;

struct PeerIdentity {
    std::string peer_id;  // 32 lowercase hex
    std::string display_name;
    Platform platform = Platform::Other;
    int protocol_version = kProtocolVersion;

    friend bool operator==(const PeerIdentity&, const PeerIdentity&) = default;
};

/// Fresh identity with a random 128-bit peer id.
PeerIdentity new_peer_identity(std::string_view display_name, Platform platform, RandomSource& rng);

/// Throws Error(InvalidIdentity / EmptyName) when an identity received from
/// the wire breaks the field rules.
void validate_identity(const PeerIdentity& id);

std::string identity_to_json(const PeerIdentity& id);
PeerIdentity identity_from_json(std::string_view text);

struct FileEntry {
    std::uint64_t index = 0;
    std::string name;
    std::uint64_t size_bytes = 0;
    std::string sha256;
    std::optional<std::string> mime;

    friend bool operator==(const FileEntry&, const FileEntry&) = default;
};

struct FileIndex {
    std::vector<FileEntry> entries;
    std::uint64_t total_bytes = 0;

    friend bool operator==(const FileIndex&, const FileIndex&) = default;
};

bool is_valid_file_name(std::string_view name) noexcept;

/// Checks ordinals, names, digests and the byte total.
/// Throws Error(InvalidIndex) naming the first violation.
void validate_index(const FileIndex& index);

std::string index_to_json(const FileIndex& index);
/// Parses and validates. Unknown keys are ignored.
FileIndex index_from_json(std::string_view text);

/// An index together with the on-disk source of every entry, in the same order.
struct ShareSet {
    FileIndex index;
    std::vector<std::filesystem::path> sources;
};

/// Expands directories recursively in lexicographic order and hashes every
/// regular file. Names are flat (the file name only).
ShareSet build_share_set(const std::vector<std::filesystem::path>& paths);

inline FileIndex build_file_index(const std::vector<std::filesystem::path>& paths) {
    return build_share_set(paths).index;
}

/// Best-effort MIME type from the file extension.
std::optional<std::string> guess_mime(std::string_view name);

}  // namespace photon
