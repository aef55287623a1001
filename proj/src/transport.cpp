#include "achord/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "achord/errors.hpp"

namespace achord {

const char* to_string(DataClass c) {
  switch (c) {
    case DataClass::Key: return "key";
    case DataClass::MissionCritical: return "mission_critical";
    case DataClass::TimeSensitive: return "time_sensitive";
  }
  return "?";
}

DataClass data_class_from_string(const std::string& s) {
  if (s == "key") return DataClass::Key;
  if (s == "mission_critical") return DataClass::MissionCritical;
  if (s == "time_sensitive") return DataClass::TimeSensitive;
  throw DomainError("unknown data class '" + s + "'");
}

void TopicConfig::validate() const {
  const std::string where = "topic " + std::to_string(topic_id) + ": ";
  if (topic_id == kAggregateTopic) throw DomainError(where + "id 0xFFFF is reserved");
  if (is_reliable(data_class) && !(token_rate > 0.0))
    throw DomainError(where + "token_rate must be > 0 for reliable classes");
  if (max_payload <= Datagram::kHeaderSize)
    throw DomainError(where + "max_payload must exceed the 16-byte header");
  if (max_payload - Datagram::kHeaderSize > 0xFFFF)
    throw DomainError(where + "max_payload too large for a 16-bit payload length");
  if (!(bucket_depth >= static_cast<double>(max_payload)))
    throw DomainError(where + "bucket_depth must be >= max_payload");
  if (!(compression_ratio > 0.0 && compression_ratio <= 1.0))
    throw DomainError(where + "compression_ratio must be in (0, 1]");
}

// ---------------------------------------------------------------------------
// Wire format

namespace {

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v >> 16));
  put16(out, static_cast<std::uint16_t>(v));
}

std::uint16_t get16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

std::uint32_t get32(std::span<const std::uint8_t> b, std::size_t at) {
  return (static_cast<std::uint32_t>(get16(b, at)) << 16) | get16(b, at + 2);
}

}  // namespace

std::vector<std::uint8_t> Datagram::encode() const {
  std::vector<std::uint8_t> out;
  out.reserve(wire_size());
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(version);
  out.push_back(flags);
  put16(out, topic_id);
  put32(out, msg_seq);
  put16(out, chunk_index);
  put16(out, chunk_count);
  put16(out, static_cast<std::uint16_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Datagram Datagram::decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw MalformedDatagramError("datagram shorter than header");
  if (bytes[0] != kMagic0 || bytes[1] != kMagic1) throw MalformedDatagramError("bad magic");
  if (bytes[2] != kVersion)
    throw VersionMismatchError("unsupported datagram version " + std::to_string(bytes[2]));
  Datagram d;
  d.version = bytes[2];
  d.flags = bytes[3];
  if (d.flags & ~(kFlagAck | kFlagReliable)) throw MalformedDatagramError("unknown flag bits");
  d.topic_id = get16(bytes, 4);
  d.msg_seq = get32(bytes, 6);
  d.chunk_index = get16(bytes, 10);
  d.chunk_count = get16(bytes, 12);
  const std::size_t len = get16(bytes, 14);
  if (len != bytes.size() - kHeaderSize) throw MalformedDatagramError("payload_len mismatch");
  if (d.chunk_index >= d.chunk_count) throw MalformedDatagramError("chunk_index out of range");
  if (d.is_ack() && len != 0) throw MalformedDatagramError("ACK with payload");
  d.payload.assign(bytes.begin() + kHeaderSize, bytes.end());
  return d;
}

Datagram make_ack(const Datagram& data) {
  Datagram ack;
  ack.flags = Datagram::kFlagAck | Datagram::kFlagReliable;
  ack.topic_id = data.topic_id;
  ack.msg_seq = data.msg_seq;
  ack.chunk_index = data.chunk_index;
  ack.chunk_count = data.chunk_count;
  return ack;
}

// ---------------------------------------------------------------------------
// Endpoint

namespace {

int class_rank(DataClass c) {
  switch (c) {
    case DataClass::MissionCritical: return 0;
    case DataClass::Key: return 1;
    case DataClass::TimeSensitive: return 2;
  }
  return 3;
}

}  // namespace

Endpoint::Endpoint(std::vector<TopicConfig> topics, TransportConfig config, double start_time)
    : config_(config), last_refill_(start_time), last_rate_update_(start_time) {
  if (!(config_.retransmit_timeout > 0.0)) throw DomainError("retransmit_timeout must be > 0");
  if (config_.window == 0) throw DomainError("window must be > 0");
  double reliable_rate = 0.0;
  for (const auto& t : topics) {
    t.validate();
    if (topics_.count(t.topic_id))
      throw DomainError("duplicate topic id " + std::to_string(t.topic_id));
    TopicState s;
    s.cfg = t;
    s.refill_rate = t.token_rate;
    s.tokens = t.bucket_depth;
    topics_.emplace(t.topic_id, std::move(s));
    if (is_reliable(t.data_class)) reliable_rate += t.token_rate;
  }
  for (auto& [id, s] : topics_) {
    if (!is_reliable(s.cfg.data_class) && !(s.refill_rate > 0.0))
      s.refill_rate = config_.time_sensitive_share * reliable_rate;
    order_.push_back(id);
  }
  std::stable_sort(order_.begin(), order_.end(), [&](TopicId a, TopicId b) {
    return class_rank(topics_.at(a).cfg.data_class) < class_rank(topics_.at(b).cfg.data_class);
  });
}

Endpoint::TopicState& Endpoint::state(TopicId id) {
  auto it = topics_.find(id);
  if (it == topics_.end()) throw UnknownTopicError("unknown topic " + std::to_string(id));
  return it->second;
}

const Endpoint::TopicState& Endpoint::state(TopicId id) const {
  auto it = topics_.find(id);
  if (it == topics_.end()) throw UnknownTopicError("unknown topic " + std::to_string(id));
  return it->second;
}

const TopicConfig& Endpoint::topic(TopicId id) const { return state(id).cfg; }

std::size_t Endpoint::compressed_size(TopicId topic, std::size_t raw) const {
  const double ratio = state(topic).cfg.compression_ratio;
  return static_cast<std::size_t>(std::ceil(static_cast<double>(raw) * ratio));
}

std::size_t Endpoint::queued_bytes(TopicId topic) const { return state(topic).queued; }

MessageSeq Endpoint::publish(TopicId topic, std::span<const std::uint8_t> payload, double now) {
  TopicState& t = state(topic);
  // Compression is modelled by size only: the wire blob is the leading
  // compressed_size bytes of the payload.
  const std::size_t size = compressed_size(topic, payload.size());
  const std::size_t cap = chunk_capacity(t);
  const std::size_t count = std::max<std::size_t>(1, (size + cap - 1) / cap);
  if (count > 0xFFFF) throw DomainError("publish: message needs more than 65535 chunks");

  OutMessage m;
  m.seq = t.next_seq++;
  m.blob.assign(payload.begin(), payload.begin() + static_cast<std::ptrdiff_t>(size));
  m.chunks.resize(count);
  m.created_at = now;

  if (!is_reliable(t.cfg.data_class)) {
    t.latest = std::move(m);
    t.latest_next = 0;
    return t.latest->seq;
  }
  t.queued += size;
  total_queued_ += size;
  const MessageSeq seq = m.seq;
  t.queue.emplace(seq, std::move(m));
  return seq;
}

Datagram Endpoint::chunk_datagram(const TopicState& t, const OutMessage& m,
                                  std::uint16_t index) const {
  const std::size_t cap = chunk_capacity(t);
  const std::size_t begin = static_cast<std::size_t>(index) * cap;
  const std::size_t end = std::min(m.blob.size(), begin + cap);
  Datagram d;
  d.flags = is_reliable(t.cfg.data_class) ? Datagram::kFlagReliable : 0;
  d.topic_id = t.cfg.topic_id;
  d.msg_seq = m.seq;
  d.chunk_index = index;
  d.chunk_count = static_cast<std::uint16_t>(m.chunks.size());
  if (begin < end) d.payload.assign(m.blob.begin() + static_cast<std::ptrdiff_t>(begin),
                                    m.blob.begin() + static_cast<std::ptrdiff_t>(end));
  return d;
}

void Endpoint::refill(double now) {
  const double dt = now - last_refill_;
  if (dt <= 0.0) return;
  for (auto& [id, t] : topics_)
    t.tokens = std::min(t.cfg.bucket_depth, t.tokens + t.refill_rate * dt);
  last_refill_ = now;
}

void Endpoint::advance_rates(double now) {
  const double dt = now - last_rate_update_;
  if (dt <= 0.0) return;
  const double alpha = 1.0 - std::pow(1.0 - config_.rate_smoothing, dt);
  auto step = [&](RateEstimate& r) {
    r.rate += alpha * (r.pending / dt - r.rate);
    r.pending = 0.0;
  };
  for (auto& [id, t] : topics_) step(t.rate);
  step(aggregate_rate_);
  last_rate_update_ = now;
}

std::vector<Datagram> Endpoint::service_transmit(double now) {
  refill(now);
  advance_rates(now);
  std::vector<Datagram> out;

  // Selective repeat: only chunks whose timer expired, oldest first per topic.
  for (TopicId id : order_) {
    TopicState& t = topics_.at(id);
    if (!is_reliable(t.cfg.data_class)) continue;
    for (const auto& [seq, index] : t.in_flight) {
      OutMessage& m = t.queue.at(seq);
      OutChunk& c = m.chunks[index];
      if (now - c.last_sent < config_.retransmit_timeout) continue;
      Datagram d = chunk_datagram(t, m, index);
      if (t.tokens < static_cast<double>(d.wire_size())) break;
      t.tokens -= static_cast<double>(d.wire_size());
      c.last_sent = now;
      out.push_back(std::move(d));
    }
  }

  for (TopicId id : order_) {
    TopicState& t = topics_.at(id);
    if (!is_reliable(t.cfg.data_class)) {
      if (!t.latest) continue;
      while (t.latest_next < t.latest->chunks.size()) {
        Datagram d = chunk_datagram(t, *t.latest, static_cast<std::uint16_t>(t.latest_next));
        if (t.tokens < static_cast<double>(d.wire_size())) break;
        t.tokens -= static_cast<double>(d.wire_size());
        ++t.latest_next;
        out.push_back(std::move(d));
      }
      if (t.latest_next >= t.latest->chunks.size()) t.latest.reset();
      continue;
    }
    while (t.in_flight.size() < config_.window) {
      auto it = t.queue.lower_bound(t.fresh.first);
      if (it == t.queue.end()) break;
      if (it->first != t.fresh.first) t.fresh = {it->first, 0};
      OutMessage& m = it->second;
      if (t.fresh.second >= m.chunks.size()) {
        t.fresh = {m.seq + 1, 0};
        continue;
      }
      OutChunk& c = m.chunks[t.fresh.second];
      if (c.acked) {
        ++t.fresh.second;
        continue;
      }
      Datagram d = chunk_datagram(t, m, t.fresh.second);
      if (t.tokens < static_cast<double>(d.wire_size())) break;
      t.tokens -= static_cast<double>(d.wire_size());
      c.sent = true;
      c.last_sent = now;
      t.in_flight.emplace(m.seq, t.fresh.second);
      ++t.fresh.second;
      out.push_back(std::move(d));
    }
  }
  return out;
}

Endpoint::Received Endpoint::handle_datagram(std::span<const std::uint8_t> bytes, double now) {
  return handle_datagram(Datagram::decode(bytes), now);
}

bool Endpoint::already_delivered(const TopicState& t, MessageSeq seq) const {
  switch (t.cfg.data_class) {
    case DataClass::Key: return seq < t.next_expected || t.held.count(seq);
    case DataClass::MissionCritical: return seq < t.delivered_floor || t.delivered_above.count(seq);
    case DataClass::TimeSensitive: return t.latest_delivered && seq <= *t.latest_delivered;
  }
  return false;
}

void Endpoint::mark_delivered(TopicState& t, MessageSeq seq) {
  t.delivered_above.insert(seq);
  while (!t.delivered_above.empty() && *t.delivered_above.begin() == t.delivered_floor) {
    t.delivered_above.erase(t.delivered_above.begin());
    ++t.delivered_floor;
  }
}

Endpoint::Received Endpoint::handle_datagram(const Datagram& d, double now) {
  if (d.version != Datagram::kVersion)
    throw VersionMismatchError("unsupported datagram version " + std::to_string(d.version));
  if (d.chunk_index >= d.chunk_count) throw MalformedDatagramError("chunk_index out of range");
  Received out;
  if (d.is_ack()) {
    handle_ack(d);
    return out;
  }
  TopicState& t = state(d.topic_id);
  if (d.reliable() != is_reliable(t.cfg.data_class))
    throw MalformedDatagramError("reliability flag disagrees with topic class");
  if (d.reliable()) out.acks.push_back(make_ack(d));
  if (already_delivered(t, d.msg_seq)) return out;

  if (t.cfg.data_class == DataClass::TimeSensitive) {
    // Only the newest message is worth reassembling.
    t.partial.erase(t.partial.begin(), t.partial.lower_bound(d.msg_seq));
  }
  Partial& p = t.partial[d.msg_seq];
  if (p.chunk_count == 0) {
    p.chunk_count = d.chunk_count;
    p.chunks.resize(d.chunk_count);
  } else if (p.chunk_count != d.chunk_count) {
    throw MalformedDatagramError("chunk_count changed within a message");
  }
  auto& slot = p.chunks[d.chunk_index];
  if (!slot) {
    slot = d.payload;
    ++p.received;
  }
  if (p.received < p.chunk_count) return out;

  Message m;
  m.topic_id = d.topic_id;
  m.seq = d.msg_seq;
  m.created_at = now;
  for (auto& c : p.chunks) m.payload.insert(m.payload.end(), c->begin(), c->end());
  t.partial.erase(d.msg_seq);

  switch (t.cfg.data_class) {
    case DataClass::MissionCritical:
      mark_delivered(t, m.seq);
      out.deliverable.push_back(std::move(m));
      break;
    case DataClass::TimeSensitive:
      t.latest_delivered = m.seq;
      out.deliverable.push_back(std::move(m));
      break;
    case DataClass::Key:
      t.held.emplace(m.seq, std::move(m));
      for (auto it = t.held.find(t.next_expected); it != t.held.end();
           it = t.held.find(t.next_expected)) {
        out.deliverable.push_back(std::move(it->second));
        t.held.erase(it);
        ++t.next_expected;
      }
      break;
  }
  return out;
}

void Endpoint::handle_ack(const Datagram& ack) {
  auto ts = topics_.find(ack.topic_id);
  if (ts == topics_.end()) return;
  TopicState& t = ts->second;
  auto it = t.queue.find(ack.msg_seq);
  if (it == t.queue.end()) return;
  OutMessage& m = it->second;
  if (ack.chunk_index >= m.chunks.size() || ack.chunk_count != m.chunks.size()) return;
  OutChunk& c = m.chunks[ack.chunk_index];
  if (c.acked) return;
  c.acked = true;
  ++m.acked;
  t.in_flight.erase({m.seq, ack.chunk_index});
  const std::size_t cap = chunk_capacity(t);
  const std::size_t begin = static_cast<std::size_t>(ack.chunk_index) * cap;
  const double bytes = static_cast<double>(std::min(m.blob.size(), begin + cap) -
                                           std::min(m.blob.size(), begin));
  total_acked_ += static_cast<std::size_t>(bytes);
  t.rate.pending += bytes;
  aggregate_rate_.pending += bytes;
  if (m.acked == m.chunks.size()) {
    t.queued -= m.blob.size();
    total_queued_ -= m.blob.size();
    t.queue.erase(it);
  }
}

std::vector<BufferStats> Endpoint::buffer_stats(double now) {
  advance_rates(now);
  const auto eta = [](std::size_t queued, double rate) {
    if (rate > 0.0) return static_cast<double>(queued) / rate;
    return std::numeric_limits<double>::infinity();
  };
  std::vector<BufferStats> out;
  for (const auto& [id, t] : topics_) {
    if (!is_reliable(t.cfg.data_class)) continue;
    out.push_back({id, t.queued, t.rate.rate, eta(t.queued, t.rate.rate)});
  }
  out.push_back({kAggregateTopic, total_queued_, aggregate_rate_.rate,
                 eta(total_queued_, aggregate_rate_.rate)});
  return out;
}

std::vector<std::pair<TopicId, MessageSeq>> Endpoint::outstanding() const {
  std::vector<std::pair<TopicId, MessageSeq>> out;
  for (const auto& [id, t] : topics_)
    for (const auto& [seq, m] : t.queue) out.emplace_back(id, seq);
  return out;
}

std::vector<std::pair<TopicId, MessageSeq>> Endpoint::held() const {
  std::vector<std::pair<TopicId, MessageSeq>> out;
  for (const auto& [id, t] : topics_)
    for (const auto& [seq, m] : t.held) out.emplace_back(id, seq);
  return out;
}

}  // namespace achord
