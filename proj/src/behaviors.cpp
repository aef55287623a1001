#include "achord/behaviors.hpp"

#include <algorithm>
#include <tuple>

#include "achord/errors.hpp"
#include "achord/random.hpp"

namespace achord {

void DropSchedulerConfig::validate() const {
  if (!(snr_floor > 0.0)) throw DomainError("drop scheduler: snr_floor must be > 0");
  if (slots_total < 0) throw DomainError("drop scheduler: slots_total must be >= 0");
  if (!(jam_probability >= 0.0 && jam_probability < 1.0))
    throw DomainError("drop scheduler: jam_probability must be in [0, 1)");
  if (!(overlap_radius >= 0.0)) throw DomainError("drop scheduler: overlap_radius must be >= 0");
  if (backtrack_limit == 0) throw DomainError("drop scheduler: backtrack_limit must be > 0");
}

void ReturnToCommsConfig::validate() const {
  if (!(lower_bytes < upper_bytes))
    throw DomainError("return to comms: lower_bytes must be < upper_bytes");
  if (!(wait_timeout > 0.0)) throw DomainError("return to comms: wait_timeout must be > 0");
}

const char* to_string(DropActionKind k) {
  switch (k) {
    case DropActionKind::None: return "none";
    case DropActionKind::Backtrack: return "backtrack";
    case DropActionKind::Drop: return "drop";
    case DropActionKind::Retry: return "retry";
  }
  return "?";
}

const char* to_string(CommsMode m) {
  switch (m) {
    case CommsMode::Exploring: return "exploring";
    case CommsMode::ReturningToComms: return "returning_to_comms";
    case CommsMode::WaitingAtCheckpoint: return "waiting_at_checkpoint";
    case CommsMode::EscalatingCloser: return "escalating_closer";
  }
  return "?";
}

double recorded_snr(const Irm& irm, const NodeId& node) {
  const IrmNode& n = irm.node(node);
  if (n.kind == NodeKind::CommsCheckpoint || n.kind == NodeKind::DroppedRadio) return n.snr;
  double best = 0.0;
  for (const auto& [v, len] : irm.neighbors(node)) {
    const IrmNode& m = irm.node(v);
    if (len == 0.0 && m.kind == NodeKind::CommsCheckpoint) best = std::max(best, m.snr);
  }
  return best;
}

std::size_t place_degree(const Irm& irm, const NodeId& node) {
  std::size_t deg = 0;
  for (const auto& [v, len] : irm.neighbors(node)) {
    const NodeKind k = irm.node(v).kind;
    if (k == NodeKind::Frontier || k == NodeKind::Breadcrumb) ++deg;
  }
  return deg;
}

NodeId select_drop_site(const RobotView& robot, const Irm& irm, const DropSchedulerConfig& config) {
  if (robot.history.empty()) throw DomainError("drop site selection needs a path history");
  const std::size_t n = robot.history.size();
  const std::size_t first = n > config.backtrack_limit ? n - config.backtrack_limit : 0;
  std::vector<NodeId> window(robot.history.begin() + static_cast<std::ptrdiff_t>(first),
                             robot.history.end());

  NodeId anchor = window.front();
  for (auto it = window.rbegin(); it != window.rend(); ++it) {
    if (recorded_snr(irm, *it) >= config.snr_floor) {
      anchor = *it;
      break;
    }
  }

  std::vector<NodeId> candidates{anchor};
  for (const auto& [v, len] : irm.neighbors(anchor)) {
    if (std::find(window.begin(), window.end(), v) == window.end()) continue;
    if (recorded_snr(irm, v) >= config.snr_floor) candidates.push_back(v);
  }
  const auto score = [&](const NodeId& id) {
    return std::make_tuple(place_degree(irm, id), recorded_snr(irm, id));
  };
  return *std::min_element(candidates.begin(), candidates.end(),
                           [&](const NodeId& a, const NodeId& b) {
                             const auto sa = score(a);
                             const auto sb = score(b);
                             if (sa != sb) return sa > sb;
                             return a < b;
                           });
}

bool should_skip_drop(const Vec3& candidate, const Irm& irm, double overlap_radius,
                      const std::optional<NodeId>& ignore) {
  for (const auto& [id, n] : irm.nodes()) {
    if (n.kind != NodeKind::DroppedRadio && n.kind != NodeKind::DropIntent) continue;
    if (ignore && id == *ignore) continue;
    if (distance(n.position, candidate) <= overlap_radius) return true;
  }
  return false;
}

namespace {

// Arrival recheck: radios always block, intents only if registered before ours
// (ties by id), so two robots that committed concurrently do not both back off.
bool yields_to_earlier_claim(const Vec3& candidate, const Irm& irm, double overlap_radius,
                             const std::optional<NodeId>& own) {
  const IrmNode* mine = own && irm.contains(*own) ? &irm.node(*own) : nullptr;
  for (const auto& [id, n] : irm.nodes()) {
    if (n.kind != NodeKind::DroppedRadio && n.kind != NodeKind::DropIntent) continue;
    if (own && id == *own) continue;
    if (distance(n.position, candidate) > overlap_radius) continue;
    if (n.kind == NodeKind::DroppedRadio || !mine) return true;
    if (std::tie(n.timestamp, id) < std::tie(mine->timestamp, mine->id)) return true;
  }
  return false;
}

DropAction deploy(DropSchedulerState& state, DropActionKind kind, const DropSchedulerConfig& config,
                  std::mt19937_64& rng) {
  DropAction a;
  a.kind = kind;
  a.node = *state.site;
  ++state.slots_used;
  a.jammed = uniform01(rng) < config.jam_probability;
  if (a.jammed) {
    state.retry_pending = true;
  } else {
    ++state.deployed;
    state.retry_pending = false;
    state.site.reset();
  }
  return a;
}

DropAction none(std::string note = {}) {
  DropAction a;
  a.note = std::move(note);
  return a;
}

}  // namespace

DropAction drop_scheduler_step(DropSchedulerState& state, const RobotView& robot,
                               double bottleneck_to_base, const Irm& irm,
                               const DropSchedulerConfig& config, std::mt19937_64& rng) {
  if (state.retry_pending) {
    if (state.slots_used >= config.slots_total) {
      state.retry_pending = false;
      state.site.reset();
      return none("slots exhausted; retry abandoned");
    }
    return deploy(state, DropActionKind::Retry, config, rng);
  }

  bool committed_now = false;
  if (!state.site) {
    if (bottleneck_to_base >= config.snr_floor) return none();
    if (state.slots_used >= config.slots_total) return none("slots exhausted");
    if (robot.history.empty()) throw DomainError("drop triggered with an empty path history");
    const NodeId site = select_drop_site(robot, irm, config);
    if (should_skip_drop(irm.node(site).position, irm, config.overlap_radius, state.intent_id))
      return none("skipped: overlapping radio or drop intent near " + site);
    state.site = site;
    committed_now = true;
  }

  if (robot.current_node != *state.site) {
    const auto path = irm.shortest_path(robot.current_node, *state.site);
    if (path.size() < 2) {
      state.site.reset();
      return none("drop site unreachable");
    }
    DropAction a;
    a.kind = DropActionKind::Backtrack;
    a.node = path[1];
    a.committed = committed_now;
    return a;
  }

  if (!committed_now && yields_to_earlier_claim(irm.node(*state.site).position, irm,
                                                 config.overlap_radius, state.intent_id)) {
    const NodeId site = *state.site;
    state.site.reset();
    return none("skipped: overlapping radio or drop intent near " + site);
  }
  DropAction a = deploy(state, DropActionKind::Drop, config, rng);
  a.committed = committed_now;
  return a;
}

DropAction drop_scheduler_step(DropSchedulerState& state, const RobotView& robot,
                               const MeshTopology& topology, const NodeId& base_id,
                               const Irm& irm, const DropSchedulerConfig& config,
                               std::mt19937_64& rng, std::optional<double> now) {
  double bottleneck = 0.0;
  if (topology.has_node(robot.robot_id) && topology.has_node(base_id)) {
    if (auto r = topology.widest_path_route(robot.robot_id, base_id, now)) bottleneck = r->bottleneck;
  }
  return drop_scheduler_step(state, robot, bottleneck, irm, config, rng);
}

namespace {

bool arrived(const Irm& irm, const NodeId& robot_node, const NodeId& target) {
  if (robot_node == target) return true;
  const auto d = irm.graph_distances(robot_node);
  const auto it = d.find(target);
  return it != d.end() && it->second == 0.0;
}

NodeId return_target(const Irm& irm, const NodeId& robot_node, const NodeId& base_node) {
  if (auto t = select_return_target(irm, robot_node)) return *t;
  if (irm.contains(base_node) && irm.graph_distances(robot_node).count(base_node)) return base_node;
  throw NoCommsTargetError("return to comms: no strong checkpoint and base unreachable from " +
                           robot_node);
}

}  // namespace

ReturnToCommsStep return_to_comms_step(const RobotCommsState& state, std::size_t buffer_bytes,
                                       const Irm& irm, const NodeId& robot_node,
                                       const NodeId& base_node, const ReturnToCommsConfig& config,
                                       double now, bool in_transit) {
  ReturnToCommsStep out{state, MotionDirective::Explore};
  RobotCommsState& s = out.state;
  const bool above = buffer_bytes > config.upper_bytes;
  const bool crossed = above && !state.above_upper;
  s.above_upper = above;

  if (state.mode != CommsMode::Exploring && buffer_bytes < config.lower_bytes) {
    s.mode = CommsMode::Exploring;
    s.target.reset();
    s.wait_since.reset();
    return out;
  }

  switch (state.mode) {
    case CommsMode::Exploring:
      if (crossed) {
        s.target = return_target(irm, robot_node, base_node);
        s.mode = CommsMode::ReturningToComms;
        out.directive = MotionDirective::MoveToTarget;
      }
      break;

    case CommsMode::ReturningToComms:
    case CommsMode::EscalatingCloser:
      if (!in_transit && arrived(irm, robot_node, *s.target)) {
        s.mode = CommsMode::WaitingAtCheckpoint;
        s.wait_since = now;
        out.directive = MotionDirective::Hold;
      } else {
        out.directive = MotionDirective::MoveToTarget;
      }
      break;

    case CommsMode::WaitingAtCheckpoint:
      out.directive = MotionDirective::Hold;
      if (now - *s.wait_since > config.wait_timeout) {
        if (*s.target == base_node) {
          s.wait_since = now;  // nowhere closer to go
          break;
        }
        const bool checkpoint = irm.contains(*s.target) &&
                                irm.node(*s.target).kind == NodeKind::CommsCheckpoint;
        std::optional<NodeId> closer;
        if (checkpoint) closer = next_closer_checkpoint(irm, *s.target, base_node);
        s.target = closer ? *closer : base_node;
        s.mode = CommsMode::EscalatingCloser;
        s.wait_since.reset();
        out.directive = MotionDirective::MoveToTarget;
      }
      break;
  }
  return out;
}

}  // namespace achord
