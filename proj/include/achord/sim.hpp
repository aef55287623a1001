#pragma once

// Deterministic fixed-tick simulator binding propagation, mesh routing,
// transport endpoints, the IRM and the comms-aware behaviours.

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "achord/metrics.hpp"
#include "achord/scenario.hpp"
#include "json.hpp"

namespace achord {

// Bytes one link can carry in one tick: efficiency * C(B, snr) / 8 * tick.
double link_budget_bytes(const ChannelConfig& channel, double bandwidth, double snr, double tick);

// 1 at or below loss_snr_lo, 0 at or above loss_snr_hi, linear between.
double loss_probability(const ChannelConfig& channel, double snr);

// One hop. Consumes exactly one uniform draw. A datagram larger than the
// remaining budget is dropped without consuming budget; otherwise it consumes
// budget and survives with probability 1 - loss_probability(snr).
bool channel_deliver(std::size_t datagram_bytes, double link_snr, double& budget,
                     const ChannelConfig& channel, std::mt19937_64& rng);

// Same decision with an externally supplied draw (inversion sampling).
bool channel_deliver_with_draw(std::size_t datagram_bytes, double link_snr, double& budget,
                               const ChannelConfig& channel, double u);

struct LatencyStats {
  std::size_t count = 0;
  double total = 0.0;
  double max = 0.0;

  double mean() const { return count ? total / static_cast<double>(count) : 0.0; }
};

struct MessageAccounting {
  std::size_t generated = 0;
  std::size_t delivered = 0;
  std::size_t duplicates = 0;
  std::size_t queued = 0;     // still awaiting ACKs at the sender at the end
  std::size_t in_flight = 0;  // fully ACKed but held for ordering at the receiver
  std::size_t unaccounted = 0;
  std::map<std::string, LatencyStats> latency_by_class;  // by originating data class
};

struct SimOutput {
  std::vector<nlohmann::json> events;  // JSON lines, first "start", last "end"
  std::string topology_jsonl;          // periodic link snapshots
  Irm base_irm;
  std::vector<RadioSpec> backbone;     // base plus deployed radios
  MessageAccounting accounting;
  double max_link_utilization = 0.0;   // delivered bytes / budget, worst link-tick
  MetricsReport metrics;
};

// Throws ValidationError for an invalid scenario.
SimOutput run(const Scenario& scenario);

std::string events_to_jsonl(const std::vector<nlohmann::json>& events);

}  // namespace achord
