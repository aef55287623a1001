#pragma once

// Time-stamped SNR link graph over radios and bottleneck (max-min) routing.

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace achord {

using NodeId = std::string;

struct Link {
  double snr = 0.0;        // dB, > 0 for stored links
  double timestamp = 0.0;  // s
};

struct Route {
  std::vector<NodeId> path;
  double bottleneck = 0.0;  // dB; kUnboundedSnr for a single-node route
};

class MeshTopology {
 public:
  static constexpr double kDefaultStaleHorizon = 30.0;

  explicit MeshTopology(double stale_horizon = kDefaultStaleHorizon)
      : stale_horizon_(stale_horizon) {}

  void add_node(const NodeId& id) { nodes_.insert(id); }
  bool has_node(const NodeId& id) const { return nodes_.count(id) != 0; }
  const std::set<NodeId>& nodes() const { return nodes_; }

  // Symmetric update. Older timestamps never overwrite newer ones; a report with
  // the same timestamp keeps the weaker direction. snr == 0 removes the link.
  void set_link(const NodeId& i, const NodeId& j, double snr, double timestamp);

  std::optional<Link> link(const NodeId& i, const NodeId& j) const;

  // All stored links keyed by (smaller id, larger id).
  const std::map<std::pair<NodeId, NodeId>, Link>& links() const { return links_; }

  double stale_horizon() const { return stale_horizon_; }

  // Widest path. Ties go to fewer hops, then the lexicographically smallest node
  // sequence. When `now` is given, links older than the stale horizon are ignored.
  std::optional<Route> widest_path_route(const NodeId& src, const NodeId& dst,
                                         std::optional<double> now = std::nullopt) const;

  // Min link SNR along `path`. Throws BrokenRouteError if a hop is missing.
  double bottleneck_snr(const std::vector<NodeId>& path) const;

  // Best bottleneck from `src` to every reachable node (src itself maps to kUnboundedSnr).
  std::map<NodeId, double> widest_bottlenecks_from(const NodeId& src,
                                                   std::optional<double> now = std::nullopt) const;

  // One JSON object per line: {"i","j","snr_db","t"}.
  void write_jsonl(std::ostream& out) const;

 private:
  static std::pair<NodeId, NodeId> key(const NodeId& i, const NodeId& j) {
    return i < j ? std::make_pair(i, j) : std::make_pair(j, i);
  }

  bool usable(const Link& l, std::optional<double> now) const {
    return !now || *now - l.timestamp <= stale_horizon_;
  }

  std::map<NodeId, std::vector<std::pair<NodeId, double>>> adjacency(std::optional<double> now) const;

  double stale_horizon_;
  std::set<NodeId> nodes_;
  std::map<std::pair<NodeId, NodeId>, Link> links_;
};

}  // namespace achord
