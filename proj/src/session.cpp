#include "photon/session.hpp"

#include <algorithm>
#include <unordered_set>

#include "photon/error.hpp"

namespace photon {

namespace {

std::mutex& issued_mutex() {
    static std::mutex mu;
    return mu;
}

std::unordered_set<std::string>& issued_codes() {
    static std::unordered_set<std::string> codes;
    return codes;
}

}  // namespace

SecretCode generate_secret_code(RandomSource& rng) { return SecretCode{random_hex128(rng)}; }

std::string_view to_string(ApprovalPolicy p) noexcept {
    switch (p) {
        case ApprovalPolicy::Manual: return "manual";
        case ApprovalPolicy::AutoApprove: return "auto_approve";
        case ApprovalPolicy::AutoDeny: return "auto_deny";
    }
    return "manual";
}

std::string_view to_string(RequestState s) noexcept {
    switch (s) {
        case RequestState::Pending: return "pending";
        case RequestState::Approved: return "approved";
        case RequestState::Denied: return "denied";
        case RequestState::Expired: return "expired";
    }
    return "pending";
}

// ---- SessionRegistry ----

bool SessionRegistry::ever_issued(std::string_view code) {
    std::lock_guard lock(issued_mutex());
    return issued_codes().contains(std::string(code));
}

bool SessionRegistry::reserve(const std::string& code) {
    std::lock_guard lock(issued_mutex());
    return issued_codes().insert(code).second;
}

SessionHandle SessionRegistry::install(std::string code, std::string request_id, PeerIdentity receiver,
                                       FileIndex index) {
    auto session = std::make_shared<Session>();
    session->code = std::move(code);
    session->request_id = std::move(request_id);
    session->receiver = std::move(receiver);
    session->index = std::move(index);
    session->created_at = std::chrono::system_clock::now();
    std::lock_guard lock(mu_);
    active_.push_back(session);
    return session;
}

SessionHandle SessionRegistry::find(std::string_view code) const noexcept {
    if (!is_lower_hex(code, 32)) return nullptr;
    std::lock_guard lock(mu_);
    SessionHandle match;
    // Every active entry is compared so timing does not depend on which one matches.
    for (const auto& s : active_) {
        if (constant_time_equal(s->code, code)) match = s;
    }
    return match;
}

SessionHandle SessionRegistry::authorize(std::string_view code) const {
    auto s = find(code);
    if (!s) throw Error(Errc::UnknownCode, "code not active");
    return s;
}

void SessionRegistry::revoke(std::string_view code) {
    std::lock_guard lock(mu_);
    auto it = std::find_if(active_.begin(), active_.end(),
                           [&](const SessionHandle& s) { return constant_time_equal(s->code, code); });
    if (it == active_.end()) throw Error(Errc::UnknownCode, "code not active");
    active_.erase(it);
}

void SessionRegistry::revoke_all() {
    std::lock_guard lock(mu_);
    active_.clear();
}

std::size_t SessionRegistry::active_count() const {
    std::lock_guard lock(mu_);
    return active_.size();
}

std::vector<SessionHandle> SessionRegistry::active() const {
    std::lock_guard lock(mu_);
    return active_;
}

// ---- SessionManager ----

struct SessionManager::Pending {
    std::string request_id;
    PeerIdentity receiver;
    std::optional<HandshakeOutcome> outcome;
};

SessionManager::SessionManager(FileIndex index, std::shared_ptr<RandomSource> rng)
    : index_(std::move(index)), rng_(std::move(rng)) {}

void SessionManager::set_observer(SessionObserver observer) {
    std::lock_guard lock(mu_);
    observer_ = std::move(observer);
}

void SessionManager::apply(SenderEvent event, std::vector<SessionEvent>& out) {
    state_ = sender_transition(state_, event);
    SessionEvent ev;
    ev.type = "state";
    ev.state = state_;
    out.push_back(std::move(ev));
}

void SessionManager::emit(const std::vector<SessionEvent>& events) {
    SessionObserver observer;
    {
        std::lock_guard lock(mu_);
        observer = observer_;
    }
    if (!observer) return;
    for (const auto& ev : events) observer(ev);
}

void SessionManager::start_serving() {
    std::vector<SessionEvent> events;
    {
        std::lock_guard lock(mu_);
        apply(SenderEvent::StartServing, events);
    }
    emit(events);
}

void SessionManager::resolve(Pending& pending, Decision decision, RequestState final_state,
                             std::vector<SessionEvent>& out) {
    HandshakeOutcome outcome;
    outcome.request_id = pending.request_id;
    SessionEvent ev;
    ev.request_id = pending.request_id;
    ev.receiver = pending.receiver;

    if (decision == Decision::Approve) {
        SecretCode code = generate_secret_code(*rng_);
        while (!SessionRegistry::reserve(code.value)) code = generate_secret_code(*rng_);
        registry_.install(code.value, pending.request_id, pending.receiver, index_);
        apply(SenderEvent::Approve, out);
        outcome.kind = HandshakeOutcome::Kind::Granted;
        outcome.code = std::move(code);
        ev.type = "granted";
    } else {
        apply(SenderEvent::Deny, out);
        outcome.kind = final_state == RequestState::Expired ? HandshakeOutcome::Kind::TimedOut
                                                           : HandshakeOutcome::Kind::Denied;
        ev.type = final_state == RequestState::Expired ? "expired" : "denied";
    }
    ev.state = state_;
    out.insert(out.end() - 1, std::move(ev));

    for (auto& r : log_) {
        if (r.request_id == pending.request_id) r.state = final_state;
    }
    pending.outcome = std::move(outcome);
    pending_.reset();
    decided_.notify_all();
}

HandshakeOutcome SessionManager::submit_request(const PeerIdentity& receiver, ApprovalPolicy policy,
                                                std::chrono::milliseconds decision_timeout) {
    std::vector<SessionEvent> events;
    std::shared_ptr<Pending> mine;
    {
        std::lock_guard lock(mu_);
        if (state_ != SenderState::Serving || pending_) {
            throw Error(Errc::Busy, std::string("sender is ") + std::string(to_string(state_)));
        }
        apply(SenderEvent::RequestReceived, events);
        mine = std::make_shared<Pending>();
        mine->request_id = random_hex128(*rng_);
        mine->receiver = receiver;
        pending_ = mine;
        log_.push_back(PermissionRequest{mine->request_id, receiver, std::chrono::system_clock::now(),
                                         RequestState::Pending});
        events.push_back(SessionEvent{"request_received", mine->request_id, receiver, state_});

        if (policy == ApprovalPolicy::AutoApprove) resolve(*mine, Decision::Approve, RequestState::Approved, events);
        if (policy == ApprovalPolicy::AutoDeny) resolve(*mine, Decision::Deny, RequestState::Denied, events);
    }
    emit(events);
    events.clear();

    {
        std::unique_lock lock(mu_);
        decided_.wait_for(lock, decision_timeout, [&] { return mine->outcome.has_value(); });
        if (!mine->outcome) resolve(*mine, Decision::Deny, RequestState::Expired, events);
    }
    emit(events);
    return *mine->outcome;
}

void SessionManager::decide_request(const std::string& request_id, Decision decision) {
    std::vector<SessionEvent> events;
    {
        std::lock_guard lock(mu_);
        auto logged = std::find_if(log_.begin(), log_.end(),
                                   [&](const PermissionRequest& r) { return r.request_id == request_id; });
        if (logged == log_.end()) throw Error(Errc::UnknownRequest, request_id);
        if (logged->state != RequestState::Pending || !pending_ || pending_->request_id != request_id) {
            throw Error(Errc::AlreadyDecided, request_id);
        }
        resolve(*pending_, decision, decision == Decision::Approve ? RequestState::Approved : RequestState::Denied,
                events);
    }
    emit(events);
}

SessionHandle SessionManager::complete_session(std::string_view code) {
    std::vector<SessionEvent> events;
    SessionHandle session;
    {
        std::lock_guard lock(mu_);
        session = registry_.authorize(code);
        registry_.revoke(code);
        apply(SenderEvent::ReceiverDone, events);
        events.insert(events.begin(), SessionEvent{"completed", session->request_id, session->receiver, state_});
    }
    emit(events);
    return session;
}

void SessionManager::stop() {
    std::vector<SessionEvent> events;
    {
        std::lock_guard lock(mu_);
        if (pending_) {
            auto pending = pending_;
            resolve(*pending, Decision::Deny, RequestState::Expired, events);
            pending->outcome->kind = HandshakeOutcome::Kind::Denied;
        }
        registry_.revoke_all();
        if (state_ == SenderState::Serving || state_ == SenderState::Active || state_ == SenderState::Completed) {
            apply(SenderEvent::StopServer, events);
        }
    }
    emit(events);
}

SenderState SessionManager::state() const {
    std::lock_guard lock(mu_);
    return state_;
}

std::vector<PermissionRequest> SessionManager::requests() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::optional<PermissionRequest> SessionManager::pending_request() const {
    std::lock_guard lock(mu_);
    if (!pending_) return std::nullopt;
    for (const auto& r : log_) {
        if (r.request_id == pending_->request_id) return r;
    }
    return std::nullopt;
}

}  // namespace photon
