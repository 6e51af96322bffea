#include "photon/history.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "photon/error.hpp"

namespace photon {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Direction d) noexcept { return d == Direction::Sent ? "sent" : "received"; }

std::string_view to_string(Outcome o) noexcept {
    switch (o) {
        case Outcome::Completed: return "completed";
        case Outcome::Denied: return "denied";
        case Outcome::Failed: return "failed";
    }
    return "failed";
}

std::string rfc3339_utc_now() {
    auto now = std::chrono::system_clock::now();
    auto secs = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    ::gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string history_to_json(const HistoryRecord& r) {
    ojson j;
    j["timestamp"] = r.timestamp;
    j["direction"] = std::string(to_string(r.direction));
    j["peer"] = {{"display_name", r.peer_name}, {"peer_id", r.peer_id}};
    auto files = ojson::array();
    for (const auto& f : r.files) files.push_back({{"name", f.name}, {"size_bytes", f.size_bytes}});
    j["files"] = std::move(files);
    j["total_bytes"] = r.total_bytes;
    j["duration_seconds"] = r.duration_seconds;
    j["outcome"] = std::string(to_string(r.outcome));
    if (r.outcome == Outcome::Failed) j["reason"] = r.reason;
    return j.dump(-1, ' ', false, ojson::error_handler_t::replace);
}

HistoryRecord history_from_json(std::string_view line) {
    HistoryRecord r;
    try {
        auto j = nlohmann::json::parse(line);
        r.timestamp = j.at("timestamp").get<std::string>();
        auto dir = j.at("direction").get<std::string>();
        if (dir != "sent" && dir != "received") throw Error(Errc::Malformed, "direction " + dir);
        r.direction = dir == "sent" ? Direction::Sent : Direction::Received;
        r.peer_name = j.at("peer").at("display_name").get<std::string>();
        r.peer_id = j.at("peer").at("peer_id").get<std::string>();
        for (const auto& f : j.at("files")) {
            r.files.push_back(HistoryFile{f.at("name").get<std::string>(), f.at("size_bytes").get<std::uint64_t>()});
        }
        r.total_bytes = j.at("total_bytes").get<std::uint64_t>();
        r.duration_seconds = j.at("duration_seconds").get<double>();
        auto outcome = j.at("outcome").get<std::string>();
        if (outcome == "completed") {
            r.outcome = Outcome::Completed;
        } else if (outcome == "denied") {
            r.outcome = Outcome::Denied;
        } else if (outcome == "failed") {
            r.outcome = Outcome::Failed;
            r.reason = j.value("reason", std::string());
        } else {
            throw Error(Errc::Malformed, "outcome " + outcome);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Malformed, e.what());
    }
    return r;
}

fs::path default_data_dir() {
    if (const char* home = std::getenv("PHOTON_HOME"); home != nullptr && *home != '\0') return home;
    if (const char* xdg = std::getenv("XDG_DATA_HOME"); xdg != nullptr && *xdg != '\0') return fs::path(xdg) / "photon";
    if (const char* home = std::getenv("HOME"); home != nullptr && *home != '\0') {
        return fs::path(home) / ".local" / "share" / "photon";
    }
    return fs::temp_directory_path() / "photon";
}

void HistoryStore::append(const HistoryRecord& record) {
    auto line = history_to_json(record) + "\n";
    std::lock_guard lock(mu_);
    std::error_code ec;
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path(), ec);
    int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(Errc::IoError, path_.string() + ": " + std::strerror(errno));
    auto written = ::write(fd, line.data(), line.size());
    int err = errno;
    bool synced = ::fsync(fd) == 0;
    ::close(fd);
    if (written != static_cast<ssize_t>(line.size())) {
        throw Error(Errc::IoError, path_.string() + ": " + std::strerror(err));
    }
    if (!synced) throw Error(Errc::IoError, path_.string() + ": fsync failed");
}

std::vector<HistoryRecord> HistoryStore::read_all(const std::function<void(const std::string&)>& warn) const {
    std::vector<HistoryRecord> out;
    std::ifstream in(path_, std::ios::binary);
    if (!in) return out;
    std::stringstream buf;
    buf << in.rdbuf();
    auto text = buf.str();
    // Only newline-terminated lines are complete.
    auto end = text.rfind('\n');
    if (end == std::string::npos) return out;
    std::size_t pos = 0;
    std::size_t lineno = 0;
    while (pos <= end) {
        auto nl = text.find('\n', pos);
        auto line = std::string_view(text).substr(pos, nl - pos);
        ++lineno;
        pos = nl + 1;
        if (line.empty()) continue;
        try {
            out.push_back(history_from_json(line));
        } catch (const Error& e) {
            if (warn) warn("history line " + std::to_string(lineno) + " skipped: " + e.what());
        }
    }
    return out;
}

}  // namespace photon
