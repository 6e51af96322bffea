#include "photon/model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "photon/error.hpp"

namespace photon {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string_view trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string dump(const ojson& j) { return j.dump(-1, ' ', false, ojson::error_handler_t::replace); }

}  // namespace

std::string_view to_string(Platform p) noexcept {
    switch (p) {
        case Platform::Android: return "android";
        case Platform::Ios: return "ios";
        case Platform::Windows: return "windows";
        case Platform::Linux: return "linux";
        case Platform::MacOs: return "macos";
        case Platform::Other: return "other";
    }
    return "other";
}

Platform platform_from_string(std::string_view s) noexcept {
    if (s == "android") return Platform::Android;
    if (s == "ios") return Platform::Ios;
    if (s == "windows") return Platform::Windows;
    if (s == "linux") return Platform::Linux;
    if (s == "macos") return Platform::MacOs;
    return Platform::Other;
}

Platform host_platform() noexcept {
#if defined(__ANDROID__)
    return Platform::Android;
#elif defined(__APPLE__)
    return Platform::MacOs;
#elif defined(_WIN32)
    return Platform::Windows;
#elif defined(__linux__)
    return Platform::Linux;
#else
    return Platform::Other;
#endif
}

PeerIdentity new_peer_identity(std::string_view display_name, Platform platform, RandomSource& rng) {
    auto name = trim(display_name);
    if (name.empty()) throw Error(Errc::EmptyName, "display name is blank");
    if (name.size() > kMaxDisplayNameBytes) {
        throw Error(Errc::InvalidIdentity, "display name longer than 64 bytes");
    }
    return PeerIdentity{random_hex128(rng), std::string(name), platform, kProtocolVersion};
}

void validate_identity(const PeerIdentity& id) {
    if (!is_lower_hex(id.peer_id, 32)) throw Error(Errc::InvalidIdentity, "peer_id must be 32 lowercase hex");
    if (trim(id.display_name).empty()) throw Error(Errc::EmptyName, "display name is blank");
    if (id.display_name.size() > kMaxDisplayNameBytes) {
        throw Error(Errc::InvalidIdentity, "display name longer than 64 bytes");
    }
    if (id.protocol_version < 1) throw Error(Errc::InvalidIdentity, "protocol_version must be positive");
}

std::string identity_to_json(const PeerIdentity& id) {
    ojson j;
    j["peer_id"] = id.peer_id;
    j["display_name"] = id.display_name;
    j["platform"] = std::string(to_string(id.platform));
    j["protocol_version"] = id.protocol_version;
    return dump(j);
}

PeerIdentity identity_from_json(std::string_view text) {
    PeerIdentity id;
    try {
        auto j = nlohmann::json::parse(text);
        id.peer_id = j.at("peer_id").get<std::string>();
        id.display_name = j.at("display_name").get<std::string>();
        id.platform = platform_from_string(j.value("platform", std::string("other")));
        id.protocol_version = j.value("protocol_version", kProtocolVersion);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidIdentity, e.what());
    }
    validate_identity(id);
    return id;
}

bool is_valid_file_name(std::string_view name) noexcept {
    if (name.empty() || name == "." || name == "..") return false;
    return name.find('/') == std::string_view::npos && name.find('\\') == std::string_view::npos &&
           name.find('\0') == std::string_view::npos;
}

void validate_index(const FileIndex& index) {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
        const auto& e = index.entries[i];
        if (e.index != i) {
            throw Error(Errc::InvalidIndex, "entry " + std::to_string(i) + " has ordinal " + std::to_string(e.index));
        }
        if (!is_valid_file_name(e.name)) throw Error(Errc::InvalidIndex, "bad file name '" + e.name + "'");
        if (!is_lower_hex(e.sha256, 64)) throw Error(Errc::InvalidIndex, "bad sha256 for '" + e.name + "'");
        total += e.size_bytes;
    }
    if (total != index.total_bytes) {
        throw Error(Errc::InvalidIndex,
                    "total_bytes " + std::to_string(index.total_bytes) + " != sum " + std::to_string(total));
    }
}

std::string index_to_json(const FileIndex& index) {
    ojson j;
    j["version"] = 1;
    j["total_bytes"] = index.total_bytes;
    auto entries = ojson::array();
    for (const auto& e : index.entries) {
        ojson item;
        item["index"] = e.index;
        item["name"] = e.name;
        item["size_bytes"] = e.size_bytes;
        item["sha256"] = e.sha256;
        if (e.mime) item["mime"] = *e.mime;
        entries.push_back(std::move(item));
    }
    j["entries"] = std::move(entries);
    return dump(j);
}

FileIndex index_from_json(std::string_view text) {
    FileIndex index;
    try {
        auto j = nlohmann::json::parse(text);
        if (j.at("version").get<int>() != 1) throw Error(Errc::InvalidIndex, "unsupported index version");
        index.total_bytes = j.at("total_bytes").get<std::uint64_t>();
        for (const auto& item : j.at("entries")) {
            FileEntry e;
            e.index = item.at("index").get<std::uint64_t>();
            e.name = item.at("name").get<std::string>();
            e.size_bytes = item.at("size_bytes").get<std::uint64_t>();
            e.sha256 = item.at("sha256").get<std::string>();
            if (auto it = item.find("mime"); it != item.end() && it->is_string()) e.mime = it->get<std::string>();
            index.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidIndex, e.what());
    }
    validate_index(index);
    return index;
}

std::optional<std::string> guess_mime(std::string_view name) {
    static const std::unordered_map<std::string, std::string> kTypes{
        {"txt", "text/plain"},       {"md", "text/markdown"},    {"html", "text/html"},
        {"json", "application/json"}, {"pdf", "application/pdf"}, {"zip", "application/zip"},
        {"png", "image/png"},        {"jpg", "image/jpeg"},      {"jpeg", "image/jpeg"},
        {"gif", "image/gif"},        {"mp4", "video/mp4"},       {"mkv", "video/x-matroska"},
        {"mp3", "audio/mpeg"},       {"apk", "application/vnd.android.package-archive"},
    };
    auto dot = name.rfind('.');
    if (dot == std::string_view::npos || dot + 1 == name.size()) return std::nullopt;
    std::string ext(name.substr(dot + 1));
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (auto it = kTypes.find(ext); it != kTypes.end()) return it->second;
    return std::nullopt;
}

namespace {

void expand(const fs::path& path, std::vector<fs::path>& out) {
    std::error_code ec;
    auto status = fs::status(path, ec);
    if (ec || !fs::exists(status)) throw Error(Errc::PathNotFound, path.string());
    if (fs::is_regular_file(status)) {
        out.push_back(path);
        return;
    }
    if (!fs::is_directory(status)) throw Error(Errc::Unreadable, path.string() + " is not a regular file");

    std::vector<fs::path> found;
    fs::recursive_directory_iterator it(path, fs::directory_options::follow_directory_symlink, ec);
    if (ec) throw Error(Errc::Unreadable, path.string());
    for (const auto& dirent : it) {
        if (dirent.is_regular_file(ec)) found.push_back(dirent.path());
    }
    std::sort(found.begin(), found.end(), [&](const fs::path& a, const fs::path& b) {
        return a.lexically_relative(path).generic_string() < b.lexically_relative(path).generic_string();
    });
    out.insert(out.end(), found.begin(), found.end());
}

}  // namespace

ShareSet build_share_set(const std::vector<fs::path>& paths) {
    std::vector<fs::path> files;
    for (const auto& p : paths) expand(p, files);

    ShareSet share;
    std::set<std::string> seen;
    std::vector<char> block(1 << 20);
    for (const auto& file : files) {
        auto name = file.filename().string();
        if (!seen.insert(name).second) throw Error(Errc::DuplicateName, name);

        std::ifstream in(file, std::ios::binary);
        if (!in) throw Error(Errc::Unreadable, file.string());
        Sha256 hasher;
        std::uint64_t size = 0;
        while (in) {
            in.read(block.data(), static_cast<std::streamsize>(block.size()));
            auto got = static_cast<std::size_t>(in.gcount());
            hasher.update(std::string_view(block.data(), got));
            size += got;
        }
        if (in.bad()) throw Error(Errc::Unreadable, file.string());

        FileEntry entry;
        entry.index = share.index.entries.size();
        entry.name = name;
        entry.size_bytes = size;
        entry.sha256 = hasher.finish_hex();
        entry.mime = guess_mime(name);
        share.index.total_bytes += size;
        share.index.entries.push_back(std::move(entry));
        share.sources.push_back(file);
    }
    return share;
}

}  // namespace photon
