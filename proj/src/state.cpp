#include "photon/state.hpp"

#include "photon/error.hpp"

namespace photon {

std::string_view to_string(SenderState s) noexcept {
    switch (s) {
        case SenderState::Idle: return "Idle";
        case SenderState::Serving: return "Serving";
        case SenderState::PendingApproval: return "PendingApproval";
        case SenderState::Active: return "Active";
        case SenderState::Completed: return "Completed";
        case SenderState::Terminated: return "Terminated";
    }
    return "?";
}

std::string_view to_string(SenderEvent e) noexcept {
    switch (e) {
        case SenderEvent::StartServing: return "StartServing";
        case SenderEvent::RequestReceived: return "RequestReceived";
        case SenderEvent::Approve: return "Approve";
        case SenderEvent::Deny: return "Deny";
        case SenderEvent::ReceiverDone: return "ReceiverDone";
        case SenderEvent::StopServer: return "StopServer";
    }
    return "?";
}

std::string_view to_string(ReceiverState s) noexcept {
    switch (s) {
        case ReceiverState::Discovering: return "Discovering";
        case ReceiverState::Requesting: return "Requesting";
        case ReceiverState::Denied: return "Denied";
        case ReceiverState::Fetching: return "Fetching";
        case ReceiverState::Done: return "Done";
        case ReceiverState::Failed: return "Failed";
    }
    return "?";
}

std::string_view to_string(ReceiverEvent e) noexcept {
    switch (e) {
        case ReceiverEvent::PeerChosen: return "PeerChosen";
        case ReceiverEvent::Granted: return "Granted";
        case ReceiverEvent::DeniedByPeer: return "DeniedByPeer";
        case ReceiverEvent::AllFilesVerified: return "AllFilesVerified";
        case ReceiverEvent::TransferError: return "TransferError";
        case ReceiverEvent::Timeout: return "Timeout";
    }
    return "?";
}

namespace {

[[noreturn]] void reject(std::string_view state, std::string_view event) {
    throw Error(Errc::InvalidTransition, std::string(state) + " x " + std::string(event));
}

}  // namespace

SenderState sender_transition(SenderState state, SenderEvent event) {
    using S = SenderState;
    using E = SenderEvent;
    switch (state) {
        case S::Idle:
            if (event == E::StartServing) return S::Serving;
            break;
        case S::Serving:
            if (event == E::RequestReceived) return S::PendingApproval;
            if (event == E::StopServer) return S::Terminated;
            break;
        case S::PendingApproval:
            if (event == E::Approve) return S::Active;
            if (event == E::Deny) return S::Serving;
            break;
        case S::Active:
            if (event == E::ReceiverDone) return S::Completed;
            if (event == E::StopServer) return S::Terminated;
            break;
        case S::Completed:
            if (event == E::StopServer) return S::Terminated;
            break;
        case S::Terminated:
            break;
    }
    reject(to_string(state), to_string(event));
}

ReceiverState receiver_transition(ReceiverState state, ReceiverEvent event) {
    using S = ReceiverState;
    using E = ReceiverEvent;
    switch (state) {
        case S::Discovering:
            if (event == E::PeerChosen) return S::Requesting;
            break;
        case S::Requesting:
            if (event == E::Granted) return S::Fetching;
            if (event == E::DeniedByPeer) return S::Denied;
            if (event == E::Timeout) return S::Failed;
            break;
        case S::Fetching:
            if (event == E::AllFilesVerified) return S::Done;
            if (event == E::TransferError) return S::Failed;
            break;
        case S::Denied:
        case S::Done:
        case S::Failed:
            break;
    }
    reject(to_string(state), to_string(event));
}

}  // namespace photon
