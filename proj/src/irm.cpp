#include "achord/irm.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <tuple>

#include "achord/errors.hpp"
#include "json.hpp"

namespace achord {

const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Frontier: return "frontier";
    case NodeKind::Breadcrumb: return "breadcrumb";
    case NodeKind::CommsCheckpoint: return "comms_checkpoint";
    case NodeKind::DroppedRadio: return "dropped_radio";
    case NodeKind::DropIntent: return "drop_intent";
  }
  return "?";
}

NodeKind node_kind_from_string(const std::string& s) {
  for (auto k : {NodeKind::Frontier, NodeKind::Breadcrumb, NodeKind::CommsCheckpoint,
                 NodeKind::DroppedRadio, NodeKind::DropIntent})
    if (s == to_string(k)) return k;
  throw DomainError("unknown IRM node kind '" + s + "'");
}

const char* to_string(CheckpointStrength s) {
  switch (s) {
    case CheckpointStrength::Strong: return "strong";
    case CheckpointStrength::Weak: return "weak";
    case CheckpointStrength::None: return "none";
  }
  return "?";
}

CheckpointStrength classify_checkpoint(double snr) {
  if (!(snr >= 0.0)) throw DomainError("classify_checkpoint: snr must be >= 0");
  if (snr >= kStrongSnrThreshold) return CheckpointStrength::Strong;
  if (snr > 0.0) return CheckpointStrength::Weak;
  return CheckpointStrength::None;
}

void Irm::upsert(IrmNode node) {
  if (!(node.snr >= 0.0)) throw DomainError("IRM node " + node.id + ": snr must be >= 0");
  adjacency_[node.id];
  const NodeId id = node.id;
  nodes_[id] = std::move(node);
}

void Irm::remove(const NodeId& id) {
  auto adj = adjacency_.find(id);
  if (adj == adjacency_.end()) return;
  for (const auto& [other, len] : adj->second) {
    adjacency_[other].erase(id);
    edges_.erase(id < other ? std::make_pair(id, other) : std::make_pair(other, id));
  }
  adjacency_.erase(adj);
  nodes_.erase(id);
}

void Irm::connect(const NodeId& a, const NodeId& b, double length) {
  if (!contains(a)) throw UnknownNodeError("unknown IRM node " + a);
  if (!contains(b)) throw UnknownNodeError("unknown IRM node " + b);
  if (a == b) throw DomainError("IRM self-loop on " + a);
  if (!(length >= 0.0)) throw DomainError("IRM edge length must be >= 0");
  edges_[a < b ? std::make_pair(a, b) : std::make_pair(b, a)] = length;
  adjacency_[a][b] = length;
  adjacency_[b][a] = length;
}

const IrmNode& Irm::node(const NodeId& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw UnknownNodeError("unknown IRM node " + id);
  return it->second;
}

std::vector<std::pair<NodeId, double>> Irm::neighbors(const NodeId& id) const {
  auto it = adjacency_.find(id);
  if (it == adjacency_.end()) throw UnknownNodeError("unknown IRM node " + id);
  return {it->second.begin(), it->second.end()};
}

std::size_t Irm::degree(const NodeId& id) const {
  auto it = adjacency_.find(id);
  if (it == adjacency_.end()) throw UnknownNodeError("unknown IRM node " + id);
  return it->second.size();
}

std::map<NodeId, double> Irm::graph_distances(const NodeId& source) const {
  if (!contains(source)) throw UnknownNodeError("unknown IRM node " + source);
  std::map<NodeId, double> dist{{source, 0.0}};
  using Entry = std::pair<double, NodeId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  open.emplace(0.0, source);
  while (!open.empty()) {
    auto [d, u] = open.top();
    open.pop();
    if (d > dist.at(u)) continue;
    for (const auto& [v, len] : adjacency_.at(u)) {
      const double nd = d + len;
      auto it = dist.find(v);
      if (it == dist.end() || nd < it->second) {
        dist[v] = nd;
        open.emplace(nd, v);
      }
    }
  }
  return dist;
}

std::vector<NodeId> Irm::shortest_path(const NodeId& from, const NodeId& to) const {
  if (!contains(from)) throw UnknownNodeError("unknown IRM node " + from);
  if (!contains(to)) throw UnknownNodeError("unknown IRM node " + to);
  std::map<NodeId, double> dist{{from, 0.0}};
  std::map<NodeId, NodeId> parent;
  using Entry = std::pair<double, NodeId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  open.emplace(0.0, from);
  while (!open.empty()) {
    auto [d, u] = open.top();
    open.pop();
    if (d > dist.at(u)) continue;
    if (u == to) break;
    for (const auto& [v, len] : adjacency_.at(u)) {
      const double nd = d + len;
      auto it = dist.find(v);
      if (it == dist.end() || nd < it->second) {
        dist[v] = nd;
        parent[v] = u;
        open.emplace(nd, v);
      }
    }
  }
  if (!dist.count(to)) return {};
  std::vector<NodeId> path{to};
  while (path.back() != from) path.push_back(parent.at(path.back()));
  std::reverse(path.begin(), path.end());
  return path;
}

void Irm::expire_drop_intents(double now, double horizon) {
  std::vector<NodeId> stale;
  for (const auto& [id, n] : nodes_)
    if (n.kind == NodeKind::DropIntent && now - n.timestamp > horizon) stale.push_back(id);
  for (const auto& id : stale) remove(id);
}

namespace {

auto record_key(const IrmNode& n) {
  return std::make_tuple(static_cast<int>(n.kind), n.position.x, n.position.y, n.position.z,
                         n.snr);
}

}  // namespace

Irm merge(const Irm& a, const Irm& b) {
  Irm out = a;
  for (const auto& [id, nb] : b.nodes()) {
    auto it = a.nodes().find(id);
    if (it == a.nodes().end()) {
      out.upsert(nb);
      continue;
    }
    const IrmNode& na = it->second;
    const bool take_b = nb.timestamp > na.timestamp ||
                        (nb.timestamp == na.timestamp && record_key(nb) < record_key(na));
    if (take_b) out.upsert(nb);
  }
  for (const auto& [k, len] : b.edges()) {
    auto it = out.edges().find(k);
    if (it == out.edges().end() || len < it->second) out.connect(k.first, k.second, len);
  }
  return out;
}

Irm refresh_checkpoints(const Irm& irm, std::span<const RadioSpec> radios,
                        const std::map<std::string, double>& bottlenecks, double rx_noise,
                        const PathLossModel& model, double now) {
  Irm out = irm;
  for (const auto& [id, n] : irm.nodes()) {
    if (n.kind != NodeKind::CommsCheckpoint) continue;
    IrmNode updated = n;
    updated.snr =
        radios.empty() ? 0.0 : coverage_snr(radios, bottlenecks, n.position, rx_noise, model);
    updated.timestamp = now;
    out.upsert(std::move(updated));
  }
  return out;
}

namespace {

bool is_strong_checkpoint(const IrmNode& n) {
  return n.kind == NodeKind::CommsCheckpoint &&
         classify_checkpoint(n.snr) == CheckpointStrength::Strong;
}

}  // namespace

std::optional<NodeId> select_return_target(const Irm& irm, const NodeId& robot_node) {
  const auto dist = irm.graph_distances(robot_node);
  const NodeId* best = nullptr;
  double best_d = 0.0;
  for (const auto& [id, d] : dist) {
    if (!is_strong_checkpoint(irm.node(id))) continue;
    if (!best || d < best_d) {
      best = &id;
      best_d = d;
    }
  }
  if (!best) return std::nullopt;

  std::optional<NodeId> frontier;
  double frontier_d = best_d;
  for (const auto& [v, len] : irm.neighbors(*best)) {
    if (irm.node(v).kind != NodeKind::Frontier) continue;
    auto it = dist.find(v);
    if (it == dist.end() || !(it->second < frontier_d)) continue;
    frontier = v;
    frontier_d = it->second;
  }
  return frontier ? *frontier : *best;
}

std::optional<NodeId> next_closer_checkpoint(const Irm& irm, const NodeId& current_target,
                                             const NodeId& base_node) {
  const auto to_base = irm.graph_distances(base_node);
  const auto from_target = irm.graph_distances(current_target);
  const auto target_it = to_base.find(current_target);
  const double target_to_base =
      target_it == to_base.end() ? std::numeric_limits<double>::infinity() : target_it->second;

  const NodeId* best = nullptr;
  double best_d = 0.0;
  for (const auto& [id, d_target] : from_target) {
    if (id == current_target || !is_strong_checkpoint(irm.node(id))) continue;
    auto b = to_base.find(id);
    if (b == to_base.end() || !(b->second < target_to_base)) continue;
    if (!best || d_target < best_d) {
      best = &id;
      best_d = d_target;
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

void write_irm_json(const Irm& irm, std::ostream& out) {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  doc["edges"] = nlohmann::json::array();
  for (const auto& [id, n] : irm.nodes())
    doc["nodes"].push_back({{"id", id},
                            {"kind", to_string(n.kind)},
                            {"x", n.position.x},
                            {"y", n.position.y},
                            {"z", n.position.z},
                            {"snr", n.snr},
                            {"t", n.timestamp}});
  for (const auto& [k, len] : irm.edges())
    doc["edges"].push_back({{"a", k.first}, {"b", k.second}, {"length", len}});
  out << doc.dump(2) << '\n';
}

Irm read_irm_json(std::istream& in) {
  const auto doc = nlohmann::json::parse(in);
  Irm irm;
  for (const auto& n : doc.at("nodes"))
    irm.upsert({n.at("id").get<std::string>(),
                node_kind_from_string(n.at("kind").get<std::string>()),
                {n.value("x", 0.0), n.value("y", 0.0), n.value("z", 0.0)},
                n.value("snr", 0.0),
                n.value("t", 0.0)});
  for (const auto& e : doc.at("edges"))
    irm.connect(e.at("a").get<std::string>(), e.at("b").get<std::string>(),
                e.at("length").get<double>());
  return irm;
}

}  // namespace achord
