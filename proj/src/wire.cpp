#include "comt/wire.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

namespace comt {

namespace {

static_assert(std::endian::native == std::endian::little, "wire encoding assumes a little-endian host");

template <typename T>
void put(Frame& out, T value) {
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) fail(ErrorCode::kParseError, "truncated frame");
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  Vector vector() {
    const auto len = get<std::uint32_t>();
    if (pos_ + std::size_t{len} * 8 > data_.size()) fail(ErrorCode::kParseError, "vector runs past the frame");
    Vector v(len);
    for (std::uint32_t i = 0; i < len; ++i) v[i] = get<double>();
    return v;
  }

  void expect_end() const {
    if (pos_ != data_.size()) fail(ErrorCode::kParseError, "trailing bytes after frame payload");
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

Frame encode(std::uint32_t round, std::uint16_t sender, MessageTag tag, const std::vector<Vector>& payload,
             const std::vector<double>& scalars) {
  if (payload.size() != vectors_for(tag)) fail(ErrorCode::kInvalidArgument, "payload vector count does not match tag");
  if (scalars.size() != scalars_for(tag)) fail(ErrorCode::kInvalidArgument, "scalar count does not match tag");
  Frame out;
  std::size_t size = kHeaderBytes + 8 * scalars.size();
  for (const auto& v : payload) size += kLengthPrefixBytes + 8 * static_cast<std::size_t>(v.size());
  out.reserve(size);
  put(out, round);
  put(out, sender);
  put(out, static_cast<std::uint16_t>(tag));
  for (const auto& v : payload) {
    put(out, static_cast<std::uint32_t>(v.size()));
    for (double x : v) put(out, x);
  }
  for (double x : scalars) put(out, x);
  return out;
}

MessageTag checked_tag(std::uint16_t raw) {
  if (raw < 1 || raw > 6) fail(ErrorCode::kParseError, "unknown message tag " + std::to_string(raw));
  return static_cast<MessageTag>(raw);
}

bool is_uplink(MessageTag tag) {
  return tag == MessageTag::kTauContribution || tag == MessageTag::kThetaDelta || tag == MessageTag::kLocalModel;
}

}  // namespace

std::size_t vectors_for(MessageTag tag) {
  switch (tag) {
    case MessageTag::kTauContribution:
    case MessageTag::kThetaDelta:
    case MessageTag::kTauBroadcast:
    case MessageTag::kConsensusBroadcast: return 1;
    case MessageTag::kStateBroadcast:
    case MessageTag::kLocalModel: return 2;
  }
  return 0;
}

std::size_t scalars_for(MessageTag tag) {
  switch (tag) {
    case MessageTag::kTauContribution:
    case MessageTag::kThetaDelta: return 1;
    case MessageTag::kStateBroadcast: return 2;
    case MessageTag::kTauBroadcast:
    case MessageTag::kLocalModel:
    case MessageTag::kConsensusBroadcast: return 0;
  }
  return 0;
}

Frame serialize(const AgentUpMessage& msg) {
  if (!is_uplink(msg.tag)) fail(ErrorCode::kInvalidArgument, "not an uplink tag");
  return encode(msg.round, msg.agent_id, msg.tag, msg.payload, msg.scalars);
}

Frame serialize(const ServerBroadcast& msg) {
  if (is_uplink(msg.tag)) fail(ErrorCode::kInvalidArgument, "not a broadcast tag");
  return encode(msg.round, kServerId, msg.tag, msg.payload, msg.scalars);
}

AgentUpMessage parse_up(std::span<const std::uint8_t> frame) {
  Reader r(frame);
  AgentUpMessage msg;
  msg.round = r.get<std::uint32_t>();
  msg.agent_id = r.get<std::uint16_t>();
  msg.tag = checked_tag(r.get<std::uint16_t>());
  if (!is_uplink(msg.tag)) fail(ErrorCode::kParseError, "broadcast tag on the uplink");
  for (std::size_t i = 0; i < vectors_for(msg.tag); ++i) msg.payload.push_back(r.vector());
  for (std::size_t i = 0; i < scalars_for(msg.tag); ++i) msg.scalars.push_back(r.get<double>());
  r.expect_end();
  return msg;
}

ServerBroadcast parse_broadcast(std::span<const std::uint8_t> frame) {
  Reader r(frame);
  ServerBroadcast msg;
  msg.round = r.get<std::uint32_t>();
  if (r.get<std::uint16_t>() != kServerId) fail(ErrorCode::kParseError, "broadcast not sent by the server");
  msg.tag = checked_tag(r.get<std::uint16_t>());
  if (is_uplink(msg.tag)) fail(ErrorCode::kParseError, "uplink tag on a broadcast");
  for (std::size_t i = 0; i < vectors_for(msg.tag); ++i) msg.payload.push_back(r.vector());
  for (std::size_t i = 0; i < scalars_for(msg.tag); ++i) msg.scalars.push_back(r.get<double>());
  r.expect_end();
  return msg;
}

Transport::Transport(std::size_t num_agents) : downlink_(num_agents) {}

void Transport::send_up(Frame frame) {
  std::lock_guard lock(mutex_);
  bytes_up_ += frame.size();
  uplink_.push_back(std::move(frame));
}

std::vector<AgentUpMessage> Transport::collect_up() {
  std::vector<Frame> frames;
  {
    std::lock_guard lock(mutex_);
    frames.swap(uplink_);
  }
  std::vector<AgentUpMessage> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(parse_up(f));
  std::stable_sort(out.begin(), out.end(),
                   [](const AgentUpMessage& a, const AgentUpMessage& b) { return a.agent_id < b.agent_id; });
  return out;
}

void Transport::broadcast(const ServerBroadcast& msg) {
  const Frame frame = serialize(msg);
  std::lock_guard lock(mutex_);
  for (auto& queue : downlink_) {
    bytes_down_ += frame.size();
    queue.push_back(frame);
  }
}

ServerBroadcast Transport::receive(std::size_t agent) {
  Frame frame;
  {
    std::lock_guard lock(mutex_);
    auto& queue = downlink_.at(agent);
    if (queue.empty()) fail(ErrorCode::kInvalidArgument, "no broadcast pending for agent " + std::to_string(agent));
    frame = std::move(queue.front());
    queue.pop_front();
  }
  return parse_broadcast(frame);
}

void Transport::reset_counters() {
  std::lock_guard lock(mutex_);
  bytes_up_ = 0;
  bytes_down_ = 0;
}

}  // namespace comt
