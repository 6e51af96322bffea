#include <gtest/gtest.h>
#include <ifaddrs.h>
#include <arpa/inet.h>

#include <future>
#include <thread>

#include "httplib.h"
#include "photon/daemon.hpp"
#include "photon/error.hpp"
#include "support.hpp"

using namespace photon;
using namespace std::chrono_literals;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Collects server-sent events on a background thread.
class EventCapture {
public:
    explicit EventCapture(std::uint16_t port) : cli_("127.0.0.1", port) {
        cli_.set_read_timeout(30, 0);
        thread_ = std::thread([this] {
            cli_.Get("/api/events", [this](const char* data, std::size_t len) {
                std::lock_guard lock(mu_);
                buffer_.append(data, len);
                for (auto pos = buffer_.find("\n\n"); pos != std::string::npos; pos = buffer_.find("\n\n")) {
                    auto frame = buffer_.substr(0, pos);
                    buffer_.erase(0, pos + 2);
                    if (frame.rfind("data: ", 0) == 0) events_.push_back(json::parse(frame.substr(6)));
                }
                return !quit_.load();
            });
        });
    }
    ~EventCapture() {
        quit_.store(true);
        cli_.stop();
        thread_.join();
    }

    std::vector<json> events() {
        std::lock_guard lock(mu_);
        return events_;
    }

    bool wait_for(const std::string& type, std::chrono::milliseconds limit) {
        auto deadline = std::chrono::steady_clock::now() + limit;
        while (std::chrono::steady_clock::now() < deadline) {
            for (const auto& e : events()) {
                if (e["type"] == type) return true;
            }
            std::this_thread::sleep_for(20ms);
        }
        return false;
    }

private:
    httplib::Client cli_;
    std::thread thread_;
    std::mutex mu_;
    std::string buffer_;
    std::vector<json> events_;
    std::atomic<bool> quit_{false};
};

class DaemonTest : public ::testing::Test {
protected:
    void SetUp() override {
        config_.display_name = "desk";
        config_.control_port = pick_free_port();
        config_.transfer_port = pick_free_port();
        config_.discovery_port = test::free_udp_port();
        config_.download_dir = dir_ / "downloads";
        config_.history_path = dir_ / "history.jsonl";
        config_.decision_timeout = 3s;
        test::write_random(dir_ / "share" / "a.bin", 8 * 1024 * 1024, 1);
        test::write_bytes(dir_ / "share" / "b.txt", "hello");
    }

    void start() {
        daemon_ = std::make_unique<Daemon>(config_, test::identity(config_.display_name));
        daemon_->start();
    }

    httplib::Client api() {
        httplib::Client cli("127.0.0.1", config_.control_port);
        cli.set_read_timeout(30, 0);
        return cli;
    }

    json get(const std::string& path, int expect = 200) {
        auto res = api().Get(path);
        EXPECT_TRUE(res) << path;
        if (!res) return {};
        EXPECT_EQ(res->status, expect) << path << " " << res->body;
        return res->body.empty() ? json() : json::parse(res->body);
    }

    json post(const std::string& path, const json& body, int expect = 200) {
        auto res = api().Post(path, body.dump(), "application/json");
        EXPECT_TRUE(res) << path;
        if (!res) return {};
        EXPECT_EQ(res->status, expect) << path << " " << res->body;
        return res->body.empty() ? json() : json::parse(res->body);
    }

    void share() { post("/api/share", json{{"paths", {(dir_ / "share").string()}}}); }

    std::string wait_pending_request() {
        for (int i = 0; i < 300; ++i) {
            for (const auto& r : get("/api/requests")) {
                if (r["state"] == "pending") return r["request_id"];
            }
            std::this_thread::sleep_for(10ms);
        }
        ADD_FAILURE() << "no pending request";
        return {};
    }

    DiscoveredPeer sender_peer() const { return direct_peer("127.0.0.1", config_.transfer_port); }

    test::TempDir dir_;
    AppConfig config_;
    std::unique_ptr<Daemon> daemon_;
};

}  // namespace

TEST_F(DaemonTest, Health) {
    start();
    auto body = get("/api/health");
    EXPECT_EQ(body["status"], "ok");
    EXPECT_EQ(body["version"], std::string(kVersion));
}

TEST_F(DaemonTest, ShareLifecycle) {
    start();
    EXPECT_EQ(get("/api/state")["state"], "idle");
    share();
    auto state = get("/api/state");
    EXPECT_EQ(state["state"], "serving");
    EXPECT_EQ(state["sender_state"], "Serving");
    EXPECT_EQ(state["share"]["files"], 2);
    EXPECT_EQ(state["share"]["total_bytes"], 8 * 1024 * 1024 + 5);
    post("/api/share", json{{"paths", {(dir_ / "share").string()}}}, 409);
    post("/api/stop-share", json::object());
    EXPECT_EQ(get("/api/state")["state"], "idle");
    post("/api/stop-share", json::object(), 409);
}

TEST_F(DaemonTest, ShareRejectsBadInput) {
    start();
    post("/api/share", json{{"paths", {(dir_ / "missing").string()}}}, 400);
    auto res = api().Post("/api/share", "nope", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
    EXPECT_EQ(get("/api/state")["state"], "idle");
}

TEST_F(DaemonTest, ApproveResolvesBlockedHandshake) {
    start();
    share();
    std::promise<PermissionResult> result;
    std::thread rx([&] { result.set_value(request_permission(sender_peer(), test::identity("phone"), 10s)); });
    auto id = wait_pending_request();
    EXPECT_EQ(get("/api/state")["state"], "pending_approval");
    post("/api/requests/" + id + "/decision", json{{"decision", "approve"}});
    rx.join();
    auto res = result.get_future().get();
    EXPECT_EQ(res.kind, PermissionResult::Kind::Granted);
    EXPECT_EQ(get("/api/state")["state"], "active");
    post("/api/requests/" + id + "/decision", json{{"decision", "deny"}}, 409);
    post("/api/requests/nope/decision", json{{"decision", "deny"}}, 404);
    post("/api/requests/" + id + "/decision", json{{"decision", "maybe"}}, 400);
}

TEST_F(DaemonTest, DenyAndExpiryAreRecorded) {
    config_.decision_timeout = 1s;
    start();
    share();
    std::thread rx([&] { request_permission(sender_peer(), test::identity("phone"), 10s); });
    post("/api/requests/" + wait_pending_request() + "/decision", json{{"decision", "deny"}});
    rx.join();
    // nobody answers this one
    auto res = request_permission(sender_peer(), test::identity("tablet"), 10s);
    EXPECT_EQ(res.kind, PermissionResult::Kind::TimedOut);
    EXPECT_EQ(get("/api/state")["state"], "serving");
    auto history = get("/api/history");
    ASSERT_EQ(history.size(), 2u);
    EXPECT_EQ(history[0]["outcome"], "failed");
    EXPECT_EQ(history[0]["reason"], "decision timeout");
    EXPECT_EQ(history[0]["peer"]["display_name"], "tablet");
    EXPECT_EQ(history[1]["outcome"], "denied");
}

TEST_F(DaemonTest, EventStreamIsCausal) {
    config_.approval_policy = ApprovalPolicy::AutoApprove;
    start();
    EventCapture capture(config_.control_port);
    std::this_thread::sleep_for(100ms);
    share();
    ClientOptions opts;
    opts.progress_interval = 0ms;
    // slow the receiver so the sender-side ticker runs while Active
    opts.observer = [](const ReceiveEvent& ev) {
        if (ev.type == "transfer_progress") std::this_thread::sleep_for(2ms);
    };
    auto out = receive_all(sender_peer(), test::identity("phone"), dir_ / "rx", opts);
    ASSERT_EQ(out.kind, ReceiveOutcome::Kind::Done) << out.reason;
    ASSERT_TRUE(capture.wait_for("completed", 5s));

    std::string session;
    std::vector<std::string> order;
    for (const auto& e : capture.events()) {
        if (e["type"] == "request_received") session = e["session"];
        if (!session.empty() && e["session"] == session && e["type"] != "state") order.push_back(e["type"]);
    }
    ASSERT_FALSE(order.empty());
    auto first = [&](const std::string& t) { return std::find(order.begin(), order.end(), t) - order.begin(); };
    auto last = [&](const std::string& t) {
        return order.rend() - std::find(order.rbegin(), order.rend(), t) - 1;
    };
    EXPECT_EQ(order.front(), "request_received");
    EXPECT_LT(first("request_received"), first("granted"));
    ASSERT_NE(first("transfer_progress"), static_cast<long>(order.size()));
    EXPECT_LT(last("granted"), first("transfer_progress"));
    EXPECT_LT(last("transfer_progress"), first("completed"));
    EXPECT_EQ(order.back(), "completed");

    auto history = get("/api/history");
    ASSERT_EQ(history.size(), 1u);
    EXPECT_EQ(history[0]["direction"], "sent");
    EXPECT_EQ(history[0]["outcome"], "completed");
    EXPECT_EQ(history[0]["files"].size(), 2u);
}

TEST_F(DaemonTest, FetchFromDirectSender) {
    start();
    ServerConfig sc;
    sc.bind_address = "127.0.0.1";
    sc.transfer_port = pick_free_port();
    auto server = start_server(sc, test::identity("laptop"), build_share_set({dir_ / "share"}),
                               ApprovalPolicy::AutoApprove);
    auto accepted = post("/api/fetch",
                         json{{"host", "127.0.0.1"}, {"port", sc.transfer_port}, {"dest", (dir_ / "in").string()}}, 202);
    auto id = accepted["transfer_id"].get<std::string>();
    json item;
    for (int i = 0; i < 500; ++i) {
        for (const auto& t : get("/api/transfers")) {
            if (t["id"] == id && t.contains("outcome")) item = t;
        }
        if (!item.is_null()) break;
        std::this_thread::sleep_for(20ms);
    }
    ASSERT_FALSE(item.is_null());
    EXPECT_EQ(item["outcome"], "completed");
    EXPECT_EQ(item["state"], "Done");
    EXPECT_EQ(sha256_file(dir_ / "in" / "a.bin"), sha256_file(dir_ / "share" / "a.bin"));
    auto history = get("/api/history");
    ASSERT_EQ(history.size(), 1u);
    EXPECT_EQ(history[0]["direction"], "received");
    EXPECT_EQ(history[0]["total_bytes"], 8 * 1024 * 1024 + 5);
}

TEST_F(DaemonTest, FetchValidation) {
    start();
    post("/api/fetch", json{{"dest", "/tmp"}}, 400);
    post("/api/fetch", json{{"peer_id", std::string(32, 'e')}}, 404);
}

TEST_F(DaemonTest, PeersListsResponders) {
    start();
    auto laptop = test::identity("laptop");
    Responder responder(laptop, 4242, ResponderOptions{config_.discovery_port, "0.0.0.0"});
    auto peers = get("/api/peers?window_ms=400");
    ASSERT_EQ(peers.size(), 1u);
    EXPECT_EQ(peers[0]["peer_id"], laptop.peer_id);
    EXPECT_EQ(peers[0]["transfer_port"], 4242);
    get("/api/peers?window_ms=abc", 400);
}

TEST_F(DaemonTest, BearerToken) {
    config_.control_token = "s3cret";
    start();
    get("/api/health", 401);
    httplib::Headers auth{{"Authorization", "Bearer s3cret"}};
    auto res = api().Get("/api/health", auth);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    httplib::Headers wrong{{"Authorization", "Bearer nope"}};
    res = api().Get("/api/health", wrong);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 401);
}

TEST_F(DaemonTest, UnreachableFromOtherInterfaces) {
    start();
    ifaddrs* list = nullptr;
    ASSERT_EQ(::getifaddrs(&list), 0);
    std::string address;
    for (auto* it = list; it != nullptr; it = it->ifa_next) {
        if (it->ifa_addr == nullptr || it->ifa_addr->sa_family != AF_INET) continue;
        char buf[INET_ADDRSTRLEN];
        ::inet_ntop(AF_INET, &reinterpret_cast<sockaddr_in*>(it->ifa_addr)->sin_addr, buf, sizeof buf);
        if (std::string(buf).rfind("127.", 0) != 0) address = buf;
    }
    ::freeifaddrs(list);
    if (address.empty()) GTEST_SKIP() << "no non-loopback IPv4 interface";
    httplib::Client cli(address, config_.control_port);
    cli.set_connection_timeout(1, 0);
    EXPECT_FALSE(cli.Get("/api/health"));
}

TEST_F(DaemonTest, ServesPlaceholderOrUi) {
    start();
    auto res = api().Get("/");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_NE(res->body.find("photon"), std::string::npos);
    daemon_.reset();

    test::write_bytes(dir_ / "ui" / "index.html", "<html>ui build</html>");
    config_.ui_dir = dir_ / "ui";
    start();
    res = api().Get("/");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->body, "<html>ui build</html>");
}

TEST_F(DaemonTest, PortInUse) {
    start();
    Daemon second(config_, test::identity("other"));
    try {
        second.start();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::PortInUse);
    }
}

TEST_F(DaemonTest, ConfigValidation) {
    auto bad = config_;
    bad.control_port = bad.transfer_port;
    EXPECT_THROW(validate(bad), Error);
    bad = config_;
    bad.chunk_size = 1;
    EXPECT_THROW(validate(bad), Error);
    bad = config_;
    bad.download_dir = "/proc/photon-cannot-create";
    EXPECT_THROW(validate(bad), Error);
    EXPECT_NO_THROW(validate(config_));
}

TEST_F(DaemonTest, StopEndsEventStreams) {
    start();
    auto capture = std::make_unique<EventCapture>(config_.control_port);
    std::this_thread::sleep_for(100ms);
    auto begin = std::chrono::steady_clock::now();
    daemon_->stop();
    EXPECT_LT(std::chrono::steady_clock::now() - begin, 3s);
}
