#include "achord/mesh.hpp"

#include <algorithm>
#include <deque>
#include <ostream>
#include <queue>

#include "achord/errors.hpp"
#include "achord/propagation.hpp"
#include "json.hpp"

namespace achord {

void MeshTopology::set_link(const NodeId& i, const NodeId& j, double snr, double timestamp) {
  if (i == j) throw DomainError("set_link: self-link on node " + i);
  if (!(snr >= 0.0)) throw DomainError("set_link: snr must be >= 0");
  nodes_.insert(i);
  nodes_.insert(j);
  const auto k = key(i, j);
  auto it = links_.find(k);
  if (it != links_.end()) {
    if (timestamp < it->second.timestamp) return;
    if (timestamp == it->second.timestamp) snr = std::min(snr, it->second.snr);
  }
  if (snr == 0.0) {
    if (it != links_.end()) links_.erase(it);
    return;
  }
  links_[k] = Link{snr, timestamp};
}

std::optional<Link> MeshTopology::link(const NodeId& i, const NodeId& j) const {
  const auto it = links_.find(key(i, j));
  if (it == links_.end()) return std::nullopt;
  return it->second;
}

std::map<NodeId, std::vector<std::pair<NodeId, double>>> MeshTopology::adjacency(
    std::optional<double> now) const {
  std::map<NodeId, std::vector<std::pair<NodeId, double>>> adj;
  for (const auto& n : nodes_) adj[n];
  for (const auto& [k, l] : links_) {
    if (!usable(l, now)) continue;
    adj[k.first].emplace_back(k.second, l.snr);
    adj[k.second].emplace_back(k.first, l.snr);
  }
  return adj;
}

std::map<NodeId, double> MeshTopology::widest_bottlenecks_from(const NodeId& src,
                                                               std::optional<double> now) const {
  if (!has_node(src)) throw UnknownNodeError("unknown mesh node " + src);
  const auto adj = adjacency(now);
  std::map<NodeId, double> best;
  std::set<NodeId> done;
  std::priority_queue<std::pair<double, NodeId>> frontier;
  best[src] = kUnboundedSnr;
  frontier.emplace(kUnboundedSnr, src);
  while (!frontier.empty()) {
    auto [width, u] = frontier.top();
    frontier.pop();
    if (!done.insert(u).second) continue;
    for (const auto& [v, snr] : adj.at(u)) {
      const double w = std::min(width, snr);
      auto it = best.find(v);
      if (it == best.end() || w > it->second) {
        best[v] = w;
        frontier.emplace(w, v);
      }
    }
  }
  return best;
}

std::optional<Route> MeshTopology::widest_path_route(const NodeId& src, const NodeId& dst,
                                                     std::optional<double> now) const {
  if (!has_node(src)) throw UnknownNodeError("unknown mesh node " + src);
  if (!has_node(dst)) throw UnknownNodeError("unknown mesh node " + dst);
  if (src == dst) return Route{{src}, kUnboundedSnr};

  const auto widths = widest_bottlenecks_from(src, now);
  const auto reached = widths.find(dst);
  if (reached == widths.end()) return std::nullopt;
  const double bottleneck = reached->second;

  // Among paths whose every link is at least the optimal bottleneck, take the
  // fewest hops, then the lexicographically smallest sequence: BFS depth from
  // dst, then a greedy smallest-id walk from src along decreasing depth.
  const auto adj = adjacency(now);
  std::map<NodeId, std::size_t> depth;
  std::deque<NodeId> queue{dst};
  depth[dst] = 0;
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    for (const auto& [v, snr] : adj.at(u)) {
      if (snr < bottleneck || depth.count(v)) continue;
      depth[v] = depth[u] + 1;
      queue.push_back(v);
    }
  }

  Route route{{src}, bottleneck};
  NodeId cur = src;
  while (cur != dst) {
    const std::size_t want = depth.at(cur) - 1;
    const NodeId* next = nullptr;
    for (const auto& [v, snr] : adj.at(cur)) {
      if (snr < bottleneck) continue;
      const auto d = depth.find(v);
      if (d == depth.end() || d->second != want) continue;
      if (!next || v < *next) next = &v;
    }
    cur = *next;
    route.path.push_back(cur);
  }
  return route;
}

double MeshTopology::bottleneck_snr(const std::vector<NodeId>& path) const {
  if (path.empty()) throw BrokenRouteError("bottleneck_snr: empty route");
  for (const auto& n : path)
    if (!has_node(n)) throw UnknownNodeError("unknown mesh node " + n);
  double width = kUnboundedSnr;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const auto l = link(path[i - 1], path[i]);
    if (!l) throw BrokenRouteError("bottleneck_snr: no link " + path[i - 1] + "-" + path[i]);
    width = std::min(width, l->snr);
  }
  return width;
}

void MeshTopology::write_jsonl(std::ostream& out) const {
  for (const auto& [k, l] : links_) {
    nlohmann::json rec{{"i", k.first}, {"j", k.second}, {"snr_db", l.snr}, {"t", l.timestamp}};
    out << rec.dump() << '\n';
  }
}

}  // namespace achord
