#pragma once

// Information RoadMap: a shared spatial graph whose nodes carry comms
// semantics (frontiers, breadcrumbs, comms checkpoints, dropped radios and
// drop intents).

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "achord/geometry.hpp"
#include "achord/mesh.hpp"
#include "achord/propagation.hpp"

namespace achord {

enum class NodeKind { Frontier, Breadcrumb, CommsCheckpoint, DroppedRadio, DropIntent };

const char* to_string(NodeKind k);
NodeKind node_kind_from_string(const std::string& s);

enum class CheckpointStrength { Strong, Weak, None };

const char* to_string(CheckpointStrength s);

// Strong at >= 20 dB, Weak in (0, 20), None at exactly 0. Throws DomainError for snr < 0.
CheckpointStrength classify_checkpoint(double snr);

struct IrmNode {
  NodeId id;
  NodeKind kind = NodeKind::Breadcrumb;
  Vec3 position;
  double snr = 0.0;
  double timestamp = 0.0;

  friend bool operator==(const IrmNode&, const IrmNode&) = default;
};

class Irm {
 public:
  static constexpr double kDefaultIntentHorizon = 120.0;

  // Inserts or replaces a node. Throws DomainError on negative snr.
  void upsert(IrmNode node);
  void remove(const NodeId& id);

  // Undirected edge with a traversal length. Throws on unknown nodes or self-loops.
  void connect(const NodeId& a, const NodeId& b, double length);

  bool contains(const NodeId& id) const { return nodes_.count(id) != 0; }
  const IrmNode& node(const NodeId& id) const;
  const std::map<NodeId, IrmNode>& nodes() const { return nodes_; }
  const std::map<std::pair<NodeId, NodeId>, double>& edges() const { return edges_; }

  std::vector<std::pair<NodeId, double>> neighbors(const NodeId& id) const;
  std::size_t degree(const NodeId& id) const;

  // Shortest traversal length from `source` to every reachable node.
  std::map<NodeId, double> graph_distances(const NodeId& source) const;

  std::vector<NodeId> shortest_path(const NodeId& from, const NodeId& to) const;

  // Removes DropIntent nodes older than `horizon` seconds at time `now`.
  void expire_drop_intents(double now, double horizon = kDefaultIntentHorizon);

  friend bool operator==(const Irm&, const Irm&) = default;

 private:
  std::map<NodeId, IrmNode> nodes_;
  std::map<std::pair<NodeId, NodeId>, double> edges_;
  std::map<NodeId, std::map<NodeId, double>> adjacency_;
};

// Union of both maps. On an id collision the later timestamp wins; equal
// timestamps keep the lexicographically smaller node record so the result
// does not depend on argument order. Colliding edges keep the shorter length.
Irm merge(const Irm& a, const Irm& b);

// Replaces every CommsCheckpoint snr by the predicted coverage at its position
// and stamps it with `now`.
Irm refresh_checkpoints(const Irm& irm, std::span<const RadioSpec> radios,
                        const std::map<std::string, double>& bottlenecks, double rx_noise,
                        const PathLossModel& model, double now);

// Nearest Strong checkpoint by graph distance, or a frontier adjacent to it that is
// strictly closer to the robot. Throws UnknownNodeError for an unknown robot node.
std::optional<NodeId> select_return_target(const Irm& irm, const NodeId& robot_node);

// Among Strong checkpoints strictly closer to the base than `current_target`, the one
// closest to `current_target` (ties by id).
std::optional<NodeId> next_closer_checkpoint(const Irm& irm, const NodeId& current_target,
                                             const NodeId& base_node);

// JSON document {"nodes": [...], "edges": [...]} with lowercase kind strings.
void write_irm_json(const Irm& irm, std::ostream& out);
Irm read_irm_json(std::istream& in);

}  // namespace achord
