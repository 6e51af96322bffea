#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace photon {

enum class Direction { Sent, Received };
enum class Outcome { Completed, Denied, Failed };

std::string_view to_string(Direction d) noexcept;
std::string_view to_string(Outcome o) noexcept;

struct HistoryFile {
    std::string name;
    std::uint64_t size_bytes = 0;

    friend bool operator==(const HistoryFile&, const HistoryFile&) = default;
};

struct HistoryRecord {
    std::string timestamp;  // RFC 3339, UTC
    Direction direction = Direction::Sent;
    std::string peer_name;
    std::string peer_id;
    std::vector<HistoryFile> files;
    std::uint64_t total_bytes = 0;
    double duration_seconds = 0;
    Outcome outcome = Outcome::Completed;
    std::string reason;  // only for Failed

    friend bool operator==(const HistoryRecord&, const HistoryRecord&) = default;
};

std::string rfc3339_utc_now();

/// One line of JSON, no trailing newline.
std::string history_to_json(const HistoryRecord& record);
/// Throws Error(Malformed).
HistoryRecord history_from_json(std::string_view line);

/// $PHOTON_HOME, else $XDG_DATA_HOME/photon, else ~/.local/share/photon.
std::filesystem::path default_data_dir();

/// Append-only JSON Lines file. Each append is one write() of one complete
/// line followed by fsync; readers drop an unterminated tail, so they never
/// see a torn record.
class HistoryStore {
public:
    explicit HistoryStore(std::filesystem::path path) : path_(std::move(path)) {}

    const std::filesystem::path& path() const noexcept { return path_; }

    /// Throws Error(IoError).
    void append(const HistoryRecord& record);

    /// Oldest first. Corrupt lines are skipped and reported through `warn`.
    std::vector<HistoryRecord> read_all(const std::function<void(const std::string&)>& warn = {}) const;

private:
    std::filesystem::path path_;
    std::mutex mu_;
};

}  // namespace photon
