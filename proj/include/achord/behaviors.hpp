#pragma once

// Comms-aware autonomy: radio-drop scheduling and the return-to-comms state
// machine. Both are step functions over explicit per-robot state.

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "achord/irm.hpp"
#include "achord/mesh.hpp"

namespace achord {

struct DropSchedulerConfig {
  double snr_floor = kStrongSnrThreshold;  // dB
  int slots_total = 6;
  double overlap_radius = 20.0;  // m
  double jam_probability = 0.0;
  std::size_t backtrack_limit = 10;  // history nodes

  void validate() const;
};

enum class DropActionKind { None, Backtrack, Drop, Retry };

const char* to_string(DropActionKind k);

struct DropAction {
  DropActionKind kind = DropActionKind::None;
  NodeId node;            // next hop for Backtrack, site for Drop/Retry
  bool jammed = false;    // Drop/Retry: the unit failed to deploy
  bool committed = false; // the site was chosen in this step; register a DropIntent
  std::string note;       // reason for a None that is worth logging
};

struct DropSchedulerState {
  int slots_used = 0;
  int deployed = 0;
  std::optional<NodeId> site;
  bool retry_pending = false;
  std::optional<NodeId> intent_id;  // this robot's own DropIntent node, if any
};

struct RobotView {
  NodeId robot_id;
  NodeId current_node;          // IRM node the robot is at (or last passed)
  std::vector<NodeId> history;  // visited IRM nodes, oldest first
};

// Recorded SNR at a place: the node's own snr if it is a checkpoint or radio,
// else the best co-located (zero-length edge) checkpoint, else 0.
double recorded_snr(const Irm& irm, const NodeId& node);

// Number of traversable (frontier/breadcrumb) neighbours.
std::size_t place_degree(const Irm& irm, const NodeId& node);

// Chooses among the backtrack window: the most recent history node whose recorded
// SNR reaches the floor, plus its history neighbours that also do. Junctions first.
NodeId select_drop_site(const RobotView& robot, const Irm& irm, const DropSchedulerConfig& config);

// True iff a DroppedRadio or DropIntent (other than `ignore`) lies within the
// closed ball of `overlap_radius` around `candidate`.
bool should_skip_drop(const Vec3& candidate, const Irm& irm, double overlap_radius,
                      const std::optional<NodeId>& ignore = std::nullopt);

// Throws DomainError when a drop triggers with an empty history.
DropAction drop_scheduler_step(DropSchedulerState& state, const RobotView& robot,
                               double bottleneck_to_base, const Irm& irm,
                               const DropSchedulerConfig& config, std::mt19937_64& rng);

// Convenience overload reading the bottleneck from the mesh.
DropAction drop_scheduler_step(DropSchedulerState& state, const RobotView& robot,
                               const MeshTopology& topology, const NodeId& base_id,
                               const Irm& irm, const DropSchedulerConfig& config,
                               std::mt19937_64& rng, std::optional<double> now = std::nullopt);

struct ReturnToCommsConfig {
  std::size_t upper_bytes = 300'000;
  std::size_t lower_bytes = 200'000;
  double wait_timeout = 60.0;  // s

  void validate() const;
};

enum class CommsMode { Exploring, ReturningToComms, WaitingAtCheckpoint, EscalatingCloser };

const char* to_string(CommsMode m);

struct RobotCommsState {
  CommsMode mode = CommsMode::Exploring;
  std::optional<NodeId> target;
  std::optional<double> wait_since;
  bool above_upper = false;  // last sample exceeded upper_bytes

  friend bool operator==(const RobotCommsState&, const RobotCommsState&) = default;
};

enum class MotionDirective { Explore, MoveToTarget, Hold };

struct ReturnToCommsStep {
  RobotCommsState state;
  MotionDirective directive = MotionDirective::Explore;
};

// Throws NoCommsTargetError when the buffer trigger fires with neither a Strong
// checkpoint nor a reachable base. `robot_node` is the last IRM node the robot
// reached; while `in_transit` it cannot count as having arrived anywhere.
ReturnToCommsStep return_to_comms_step(const RobotCommsState& state, std::size_t buffer_bytes,
                                       const Irm& irm, const NodeId& robot_node,
                                       const NodeId& base_node, const ReturnToCommsConfig& config,
                                       double now, bool in_transit = false);

}  // namespace achord
