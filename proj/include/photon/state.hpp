#pragma once

#include <array>
#include <string>
#include <string_view>

namespace photon {

// Sender lifecycle. Payloads (request id, code) live with the session
// manager; the machine itself only tracks the tag.
enum class SenderState { Idle, Serving, PendingApproval, Active, Completed, Terminated };
enum class SenderEvent { StartServing, RequestReceived, Approve, Deny, ReceiverDone, StopServer };

enum class ReceiverState { Discovering, Requesting, Denied, Fetching, Done, Failed };
enum class ReceiverEvent { PeerChosen, Granted, DeniedByPeer, AllFilesVerified, TransferError, Timeout };

inline constexpr std::array kAllSenderStates{SenderState::Idle,    SenderState::Serving,   SenderState::PendingApproval,
                                             SenderState::Active,  SenderState::Completed, SenderState::Terminated};
inline constexpr std::array kAllSenderEvents{SenderEvent::StartServing, SenderEvent::RequestReceived,
                                             SenderEvent::Approve,      SenderEvent::Deny,
                                             SenderEvent::ReceiverDone, SenderEvent::StopServer};
inline constexpr std::array kAllReceiverStates{ReceiverState::Discovering, ReceiverState::Requesting,
                                               ReceiverState::Denied,      ReceiverState::Fetching,
                                               ReceiverState::Done,        ReceiverState::Failed};
inline constexpr std::array kAllReceiverEvents{ReceiverEvent::PeerChosen,       ReceiverEvent::Granted,
                                               ReceiverEvent::DeniedByPeer,     ReceiverEvent::AllFilesVerified,
                                               ReceiverEvent::TransferError,    ReceiverEvent::Timeout};

std::string_view to_string(SenderState s) noexcept;
std::string_view to_string(SenderEvent e) noexcept;
std::string_view to_string(ReceiverState s) noexcept;
std::string_view to_string(ReceiverEvent e) noexcept;

/// Throws Error(InvalidTransition) for pairs outside the table.
SenderState sender_transition(SenderState state, SenderEvent event);
ReceiverState receiver_transition(ReceiverState state, ReceiverEvent event);

}  // namespace photon
