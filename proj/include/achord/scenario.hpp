#pragma once

// Simulator input document.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "achord/behaviors.hpp"
#include "achord/irm.hpp"
#include "achord/propagation.hpp"
#include "achord/transport.hpp"
#include "json.hpp"

namespace achord {

struct RobotSpec {
  NodeId id;
  NodeId start;
  double speed = 1.0;  // m/s
  RadioSpec radio;
  int slots = 0;
  bool parked = false;  // never moves (scripted scenarios)
};

struct Burst {
  double t = 0.0;
  std::size_t bytes = 0;
};

struct TrafficSpec {
  NodeId robot;
  bool from_base = false;  // base -> robot instead of robot -> base
  TopicConfig topic;
  double rate = 0.0;  // bytes/s generated continuously
  std::size_t message_bytes = 1000;
  std::vector<Burst> bursts;
};

struct ChannelConfig {
  double efficiency = 1.0;
  double loss_snr_hi = 10.0;
  double loss_snr_lo = 0.0;
};

// Scripted loss of comms: every link (or every link of one robot) reads 0 dB.
struct Outage {
  double start = 0.0;
  double end = 0.0;
  std::optional<NodeId> robot;
};

struct Scenario {
  Irm irm_seed_graph;
  NodeId base_node;
  RadioSpec base_radio;
  RadioSpec drop_radio;  // template for deployed units; id and position are filled in
  std::vector<RobotSpec> robots;
  std::vector<TrafficSpec> traffic;
  PathLossModel model;
  ChannelConfig channel;
  double duration = 600.0;
  double tick = 0.1;
  std::uint64_t seed = 1;

  DropSchedulerConfig drop;
  ReturnToCommsConfig return_to_comms;
  TransportConfig transport;
  double stale_horizon = MeshTopology::kDefaultStaleHorizon;
  double intent_horizon = Irm::kDefaultIntentHorizon;
  double snapshot_interval = 10.0;
  // false: mission-critical traffic rides the robot's first key topic (ordered path).
  bool stratified = true;
  bool return_to_comms_enabled = true;
  std::vector<Outage> outages;

  std::size_t tick_count() const;
};

// Throws ValidationError listing every violation.
Scenario parse_scenario(const nlohmann::json& doc);
void validate_scenario(const Scenario& s);

}  // namespace achord
