#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <span>
#include <vector>

#include "comt/datamodel.hpp"

namespace comt {

// Frame layout (little-endian):
//   header   u32 round | u16 agent_id | u16 tag           (8 bytes)
//   payload  per vector: u32 length | length x f64
//   scalars  fixed count x f64
// The tag fixes how many vectors and scalars follow. No tag carries an
// n_k-sized payload.
enum class MessageTag : std::uint16_t {
  kTauContribution = 1,  // agent -> server: (1/lambda_w) sum_i alpha~_i (X_i + beta_i); local objective part
  kThetaDelta = 2,       // agent -> server: trusted-step increment of theta_tilde; trusted loss at tau
  kTauBroadcast = 3,     // server -> agents: tau
  kStateBroadcast = 4,   // server -> agents: theta_tilde, u; accept flag, next step scale
  kLocalModel = 5,       // agent -> server (TI-only): local model + local dual
  kConsensusBroadcast = 6,  // server -> agents (TI-only): consensus model
};

inline constexpr std::size_t kHeaderBytes = 8;
inline constexpr std::size_t kLengthPrefixBytes = 4;
inline constexpr std::uint16_t kServerId = 0xFFFF;

std::size_t vectors_for(MessageTag tag);
std::size_t scalars_for(MessageTag tag);

struct AgentUpMessage {
  std::uint32_t round = 0;
  std::uint16_t agent_id = 0;
  MessageTag tag = MessageTag::kTauContribution;
  std::vector<Vector> payload;
  std::vector<double> scalars;
};

struct ServerBroadcast {
  std::uint32_t round = 0;
  MessageTag tag = MessageTag::kTauBroadcast;
  std::vector<Vector> payload;
  std::vector<double> scalars;
};

using Frame = std::vector<std::uint8_t>;

Frame serialize(const AgentUpMessage& msg);
Frame serialize(const ServerBroadcast& msg);
AgentUpMessage parse_up(std::span<const std::uint8_t> frame);
ServerBroadcast parse_broadcast(std::span<const std::uint8_t> frame);

// Serialized size of a frame carrying `vectors` vectors of length d.
constexpr std::size_t frame_bytes(std::size_t vectors, std::size_t d, std::size_t scalars = 0) {
  return kHeaderBytes + vectors * (kLengthPrefixBytes + 8 * d) + 8 * scalars;
}

inline std::size_t frame_bytes(MessageTag tag, std::size_t d) {
  return frame_bytes(vectors_for(tag), d, scalars_for(tag));
}

// In-process transport: one uplink queue to the server, broadcasts fanned
// out to every agent. Counts every byte put on the wire.
class Transport {
 public:
  explicit Transport(std::size_t num_agents);

  void send_up(Frame frame);
  // Drains the uplink and returns messages ordered by agent id.
  std::vector<AgentUpMessage> collect_up();
  void broadcast(const ServerBroadcast& msg);
  ServerBroadcast receive(std::size_t agent);

  std::uint64_t bytes_up() const { return bytes_up_; }
  std::uint64_t bytes_down() const { return bytes_down_; }
  void reset_counters();

 private:
  std::mutex mutex_;
  std::vector<Frame> uplink_;
  std::vector<std::deque<Frame>> downlink_;
  std::uint64_t bytes_up_ = 0;
  std::uint64_t bytes_down_ = 0;
};

}  // namespace comt
