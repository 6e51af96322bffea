#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "photon/crypto.hpp"
#include "photon/model.hpp"
#include "photon/state.hpp"

namespace photon {

inline constexpr std::chrono::seconds kDefaultDecisionTimeout{60};

/// Per-session capability token: 128 random bits as 32 lowercase hex.
struct SecretCode {
    std::string value;

    friend bool operator==(const SecretCode&, const SecretCode&) = default;
};

SecretCode generate_secret_code(RandomSource& rng);

enum class ApprovalPolicy { Manual, AutoApprove, AutoDeny };
enum class Decision { Approve, Deny };
enum class RequestState { Pending, Approved, Denied, Expired };

std::string_view to_string(ApprovalPolicy p) noexcept;
std::string_view to_string(RequestState s) noexcept;

struct PermissionRequest {
    std::string request_id;
    PeerIdentity receiver;
    std::chrono::system_clock::time_point received_at;
    RequestState state = RequestState::Pending;
};

/// A live, granted session. Handles stay valid after revocation so an
/// in-flight response can finish; new lookups fail.
struct Session {
    std::string code;
    std::string request_id;
    PeerIdentity receiver;
    FileIndex index;
    std::chrono::system_clock::time_point created_at;
    std::atomic<std::uint64_t> bytes_served{0};
};
using SessionHandle = std::shared_ptr<Session>;

/// Code -> session map. Codes are checked against every code this process
/// ever issued, so a value is never installed twice.
class SessionRegistry {
public:
    SessionHandle install(std::string code, std::string request_id, PeerIdentity receiver, FileIndex index);
    /// Throws Error(UnknownCode).
    SessionHandle authorize(std::string_view code) const;
    SessionHandle find(std::string_view code) const noexcept;
    /// Throws Error(UnknownCode) if the code is not active.
    void revoke(std::string_view code);
    void revoke_all();
    std::size_t active_count() const;
    std::vector<SessionHandle> active() const;

    /// True if this process has ever issued `code` (any registry).
    static bool ever_issued(std::string_view code);
    /// Reserves a code process-wide; false if it was issued before.
    static bool reserve(const std::string& code);

private:
    mutable std::mutex mu_;
    std::vector<SessionHandle> active_;
};

struct HandshakeOutcome {
    enum class Kind { Granted, Denied, TimedOut };
    Kind kind = Kind::Denied;
    std::string request_id;
    std::optional<SecretCode> code;
};

struct SessionEvent {
    // request_received | granted | denied | expired | completed | state
    std::string type;
    std::string request_id;
    PeerIdentity receiver;
    SenderState state = SenderState::Idle;
};
using SessionObserver = std::function<void(const SessionEvent&)>;

/// Sender-side authority: owns the sender state machine, the pending
/// permission request and the registry of granted codes. All members are
/// safe to call from any thread.
class SessionManager {
public:
    SessionManager(FileIndex index, std::shared_ptr<RandomSource> rng = std::make_shared<SecureRandom>());

    void set_observer(SessionObserver observer);

    /// Idle -> Serving.
    void start_serving();

    /// Blocks under Manual until decide() or the timeout. Throws Error(Busy)
    /// unless the sender is Serving with nothing pending.
    HandshakeOutcome submit_request(const PeerIdentity& receiver, ApprovalPolicy policy,
                                    std::chrono::milliseconds decision_timeout);

    /// Throws Error(UnknownRequest) or Error(AlreadyDecided).
    void decide_request(const std::string& request_id, Decision decision);

    SessionHandle authorize(std::string_view code) const { return registry_.authorize(code); }
    SessionHandle find(std::string_view code) const noexcept { return registry_.find(code); }
    void revoke_session(std::string_view code) { registry_.revoke(code); }

    /// Receiver finished: revoke the code and move Active -> Completed.
    /// Throws Error(UnknownCode).
    SessionHandle complete_session(std::string_view code);

    /// Expires any pending request, revokes every code, -> Terminated.
    void stop();

    SenderState state() const;
    std::vector<PermissionRequest> requests() const;
    std::optional<PermissionRequest> pending_request() const;
    const FileIndex& index() const noexcept { return index_; }
    std::size_t active_sessions() const { return registry_.active_count(); }
    std::vector<SessionHandle> sessions() const { return registry_.active(); }

private:
    struct Pending;

    void apply(SenderEvent event, std::vector<SessionEvent>& out);
    void resolve(Pending& pending, Decision decision, RequestState final_state, std::vector<SessionEvent>& out);
    void emit(const std::vector<SessionEvent>& events);

    const FileIndex index_;
    std::shared_ptr<RandomSource> rng_;
    SessionRegistry registry_;

    mutable std::mutex mu_;
    std::condition_variable decided_;
    SenderState state_ = SenderState::Idle;
    std::shared_ptr<Pending> pending_;
    std::vector<PermissionRequest> log_;
    SessionObserver observer_;
};

}  // namespace photon
