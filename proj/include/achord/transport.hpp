#pragma once

// Data Reporter and datagram layer: per-topic reliable queues with ACK
// bookkeeping, chunking and reassembly, selective-repeat ARQ, in-order
// release for key data, token-bucket rate limiting and buffer statistics.
//
// An Endpoint is one side of a point-to-point association. It is a single
// logical actor: callers serialise publish / service_transmit / handle_*.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace achord {

enum class DataClass { Key, MissionCritical, TimeSensitive };

const char* to_string(DataClass c);
DataClass data_class_from_string(const std::string& s);

inline bool is_reliable(DataClass c) { return c != DataClass::TimeSensitive; }

using TopicId = std::uint16_t;
using MessageSeq = std::uint32_t;

// Reserved topic id for the all-topics row of buffer_stats().
inline constexpr TopicId kAggregateTopic = 0xFFFF;

struct TopicConfig {
  TopicId topic_id = 0;
  DataClass data_class = DataClass::Key;
  double token_rate = 0.0;       // bytes/s; <= 0 on a time-sensitive topic means "reserved share"
  double bucket_depth = 0.0;     // bytes
  std::size_t max_payload = 1024;  // bytes per datagram, header included
  double compression_ratio = 1.0;

  void validate() const;
};

struct Message {
  TopicId topic_id = 0;
  MessageSeq seq = 0;
  std::vector<std::uint8_t> payload;
  // Publish time at the sender; reassembly completion time at the receiver.
  double created_at = 0.0;
};

// Wire unit. Header is 16 bytes, all multi-byte fields big-endian:
//   magic(2) version(1) flags(1) topic(2) msg_seq(4) chunk_index(2) chunk_count(2) payload_len(2)
struct Datagram {
  static constexpr std::uint8_t kMagic0 = 0xAC;
  static constexpr std::uint8_t kMagic1 = 0x0D;
  static constexpr std::uint8_t kVersion = 0x01;
  static constexpr std::size_t kHeaderSize = 16;
  static constexpr std::uint8_t kFlagAck = 0x01;
  static constexpr std::uint8_t kFlagReliable = 0x02;

  std::uint8_t version = kVersion;
  std::uint8_t flags = 0;
  TopicId topic_id = 0;
  MessageSeq msg_seq = 0;
  std::uint16_t chunk_index = 0;
  std::uint16_t chunk_count = 1;
  std::vector<std::uint8_t> payload;

  bool is_ack() const { return flags & kFlagAck; }
  bool reliable() const { return flags & kFlagReliable; }
  std::size_t wire_size() const { return kHeaderSize + payload.size(); }

  std::vector<std::uint8_t> encode() const;
  // Throws MalformedDatagramError or VersionMismatchError.
  static Datagram decode(std::span<const std::uint8_t> bytes);

  friend bool operator==(const Datagram&, const Datagram&) = default;
};

Datagram make_ack(const Datagram& data);

struct BufferStats {
  TopicId topic_id = 0;
  std::size_t queued_bytes = 0;
  double measured_rate = 0.0;            // bytes/s, ACK-confirmed, smoothed
  double estimated_transfer_time = 0.0;  // s; infinity when nothing has been confirmed
};

struct TransportConfig {
  double retransmit_timeout = 1.0;   // s
  std::size_t window = 64;           // unACKed chunks in flight per topic
  double rate_smoothing = 0.2;       // EMA weight per second
  double time_sensitive_share = 0.05;  // of the summed reliable token rate
};

class Endpoint {
 public:
  explicit Endpoint(std::vector<TopicConfig> topics, TransportConfig config = {},
                    double start_time = 0.0);

  // Queues a message and returns its sequence number. Throws UnknownTopicError.
  MessageSeq publish(TopicId topic, std::span<const std::uint8_t> payload, double now);

  std::vector<Datagram> service_transmit(double now);

  struct Received {
    std::vector<Message> deliverable;
    std::vector<Datagram> acks;
  };

  Received handle_datagram(std::span<const std::uint8_t> bytes, double now);
  Received handle_datagram(const Datagram& datagram, double now);

  // Unknown topics or messages are ignored.
  void handle_ack(const Datagram& ack);

  // Per reliable topic (ascending id), then the aggregate row.
  std::vector<BufferStats> buffer_stats(double now);

  std::size_t queued_bytes() const { return total_queued_; }
  // Cumulative payload bytes confirmed by ACKs.
  std::size_t acked_bytes() const { return total_acked_; }
  std::size_t queued_bytes(TopicId topic) const;

  // Sender side: (topic, seq) of messages still awaiting ACKs.
  std::vector<std::pair<TopicId, MessageSeq>> outstanding() const;
  // Receiver side: complete key messages waiting for an earlier sequence number.
  std::vector<std::pair<TopicId, MessageSeq>> held() const;

  const TopicConfig& topic(TopicId id) const;
  const std::vector<TopicId>& priority_order() const { return order_; }
  const TransportConfig& config() const { return config_; }

  // Wire size (compressed) of a payload published on `topic`.
  std::size_t compressed_size(TopicId topic, std::size_t raw) const;

 private:
  struct OutChunk {
    bool sent = false;
    bool acked = false;
    double last_sent = 0.0;
  };

  struct OutMessage {
    MessageSeq seq = 0;
    std::vector<std::uint8_t> blob;
    std::vector<OutChunk> chunks;
    std::size_t acked = 0;
    double created_at = 0.0;
  };

  struct Partial {
    std::uint16_t chunk_count = 0;
    std::size_t received = 0;
    std::vector<std::optional<std::vector<std::uint8_t>>> chunks;
  };

  struct RateEstimate {
    double rate = 0.0;
    double pending = 0.0;
  };

  struct TopicState {
    TopicConfig cfg;
    double refill_rate = 0.0;
    double tokens = 0.0;
    // sender
    MessageSeq next_seq = 0;
    std::map<MessageSeq, OutMessage> queue;
    std::size_t queued = 0;
    std::set<std::pair<MessageSeq, std::uint16_t>> in_flight;
    std::pair<MessageSeq, std::uint16_t> fresh{0, 0};
    std::optional<OutMessage> latest;  // time-sensitive single slot
    std::size_t latest_next = 0;
    RateEstimate rate;
    // receiver
    std::map<MessageSeq, Partial> partial;
    MessageSeq next_expected = 0;       // key: everything below was delivered
    MessageSeq delivered_floor = 0;     // mission-critical: everything below was delivered
    std::set<MessageSeq> delivered_above;
    std::map<MessageSeq, Message> held;
    std::optional<MessageSeq> latest_delivered;  // time-sensitive
  };

  TopicState& state(TopicId id);
  const TopicState& state(TopicId id) const;
  std::size_t chunk_capacity(const TopicState& t) const { return t.cfg.max_payload - Datagram::kHeaderSize; }
  Datagram chunk_datagram(const TopicState& t, const OutMessage& m, std::uint16_t index) const;
  void refill(double now);
  void advance_rates(double now);
  bool already_delivered(const TopicState& t, MessageSeq seq) const;
  void mark_delivered(TopicState& t, MessageSeq seq);

  TransportConfig config_;
  std::map<TopicId, TopicState> topics_;
  std::vector<TopicId> order_;  // transmit priority
  std::size_t total_queued_ = 0;
  std::size_t total_acked_ = 0;
  RateEstimate aggregate_rate_;
  double last_refill_;
  double last_rate_update_;
};

}  // namespace achord
