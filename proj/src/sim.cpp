#include "achord/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <set>
#include <sstream>
#include <tuple>

#include "achord/errors.hpp"
#include "achord/random.hpp"

namespace achord {

using nlohmann::json;

double link_budget_bytes(const ChannelConfig& channel, double bandwidth, double snr, double tick) {
  if (!(snr > 0.0)) return 0.0;
  return channel.efficiency * shannon_capacity(bandwidth, snr) / 8.0 * tick;
}

double loss_probability(const ChannelConfig& channel, double snr) {
  if (snr <= channel.loss_snr_lo) return 1.0;
  if (snr >= channel.loss_snr_hi) return 0.0;
  return (channel.loss_snr_hi - snr) / (channel.loss_snr_hi - channel.loss_snr_lo);
}

bool channel_deliver_with_draw(std::size_t datagram_bytes, double link_snr, double& budget,
                               const ChannelConfig& channel, double u) {
  const auto bytes = static_cast<double>(datagram_bytes);
  if (bytes > budget) return false;
  budget -= bytes;
  return u >= loss_probability(channel, link_snr);
}

bool channel_deliver(std::size_t datagram_bytes, double link_snr, double& budget,
                     const ChannelConfig& channel, std::mt19937_64& rng) {
  return channel_deliver_with_draw(datagram_bytes, link_snr, budget, channel, uniform01(rng));
}

std::string events_to_jsonl(const std::vector<json>& events) {
  std::string out;
  for (const auto& e : events) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

namespace {

constexpr std::uint64_t kChannelStream = 1;
constexpr std::uint64_t kJamStream = 2;
constexpr std::uint64_t kTrafficStream = 3;

std::string checkpoint_id(const NodeId& place) { return "cp:" + place; }

struct Motion {
  NodeId from;
  NodeId to;
  double length = 0.0;
  double progress = 0.0;
};

struct Generator {
  const TrafficSpec* spec = nullptr;
  TopicId publish_topic = 0;
  double accumulated = 0.0;
  std::size_t next_burst = 0;
};

struct Robot {
  const RobotSpec* spec = nullptr;
  NodeId node;
  std::optional<Motion> motion;
  std::deque<NodeId> path;
  std::optional<NodeId> goal;
  std::optional<NodeId> explore_goal;
  std::vector<NodeId> history;
  Irm irm;
  std::unique_ptr<Endpoint> up;    // robot side of the robot<->base association
  std::unique_ptr<Endpoint> down;  // base side
  std::vector<Generator> up_gen;
  std::vector<Generator> down_gen;
  DropSchedulerConfig drop_config;
  DropSchedulerState drop;
  std::optional<NodeId> drop_move;
  std::string last_drop_note;
  int drop_counter = 0;
  RobotCommsState comms;
  MotionDirective directive = MotionDirective::Explore;
  std::vector<NodeId> arrivals;
  std::optional<Route> route;
};

using PendingKey = std::tuple<std::string, bool, TopicId, MessageSeq>;

struct Pending {
  double created = 0.0;
  std::string origin;
};

class Simulator {
 public:
  explicit Simulator(const Scenario& s)
      : s_(s),
        topology_(s.stale_horizon),
        channel_rng_(make_stream(s.seed, kChannelStream)),
        jam_rng_(make_stream(s.seed, kJamStream)),
        traffic_rng_(make_stream(s.seed, kTrafficStream)) {
    base_irm_ = s.irm_seed_graph;
    backbone_.push_back(s.base_radio);
    topology_.add_node(s.base_node);
    base_dist_ = s.irm_seed_graph.graph_distances(s.base_node);

    std::vector<const RobotSpec*> specs;
    for (const auto& r : s.robots) specs.push_back(&r);
    std::sort(specs.begin(), specs.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const auto* spec : specs) robots_.push_back(make_robot(*spec));
  }

  SimOutput run() {
    SimOutput out;
    std::vector<std::string> ids;
    for (const auto& r : robots_) ids.push_back(r.spec->id);
    events_.push_back({{"type", "start"},
                       {"t", 0.0},
                       {"duration", s_.duration},
                       {"tick", s_.tick},
                       {"seed", s_.seed},
                       {"robots", ids}});

    const std::size_t ticks = s_.tick_count();
    const auto snapshot_every = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(s_.snapshot_interval / s_.tick)));
    for (std::size_t k = 1; k <= ticks; ++k) {
      now_ = static_cast<double>(k) * s_.tick;
      step();
      if (k % snapshot_every == 0) {
        std::ostringstream snap;
        topology_.write_jsonl(snap);
        topology_snapshots_ += snap.str();
      }
    }

    out.accounting = reconcile();
    json end{{"type", "end"},
             {"t", static_cast<double>(ticks) * s_.tick},
             {"generated", out.accounting.generated},
             {"delivered", out.accounting.delivered},
             {"duplicates", out.accounting.duplicates},
             {"queued", out.accounting.queued},
             {"in_flight", out.accounting.in_flight},
             {"deployed_radios", backbone_.size() - 1}};
    events_.push_back(std::move(end));

    out.metrics = compute_metrics(events_, s_);
    out.events = std::move(events_);
    out.topology_jsonl = std::move(topology_snapshots_);
    out.base_irm = base_irm_;
    out.backbone = backbone_;
    out.max_link_utilization = max_utilization_;
    return out;
  }

 private:
  Robot make_robot(const RobotSpec& spec) {
    Robot r;
    r.spec = &spec;
    r.node = spec.start;
    r.history.push_back(spec.start);
    r.irm = s_.irm_seed_graph;
    r.drop_config = s_.drop;
    r.drop_config.slots_total = spec.slots;
    topology_.add_node(spec.id);

    std::vector<TopicConfig> topics;
    for (const auto& t : s_.traffic)
      if (t.robot == spec.id) topics.push_back(t.topic);
    r.up = std::make_unique<Endpoint>(topics, s_.transport, 0.0);
    r.down = std::make_unique<Endpoint>(topics, s_.transport, 0.0);

    for (const auto& t : s_.traffic) {
      if (t.robot != spec.id) continue;
      Generator g;
      g.spec = &t;
      g.publish_topic = t.topic.topic_id;
      if (!s_.stratified && t.topic.data_class == DataClass::MissionCritical) {
        // Ordered path: ride the lowest-id key topic of the same direction.
        std::optional<TopicId> key;
        for (const auto& o : s_.traffic)
          if (o.robot == t.robot && o.from_base == t.from_base &&
              o.topic.data_class == DataClass::Key && (!key || o.topic.topic_id < *key))
            key = o.topic.topic_id;
        g.publish_topic = *key;
      }
      // Random phase so robots do not publish in lock-step.
      g.accumulated = uniform01(traffic_rng_) * static_cast<double>(t.message_bytes);
      (t.from_base ? r.down_gen : r.up_gen).push_back(g);
    }
    return r;
  }

  // ---------------------------------------------------------------- geometry

  Vec3 place_position(const NodeId& id) const { return s_.irm_seed_graph.node(id).position; }

  Vec3 position(const Robot& r) const {
    if (!r.motion) return place_position(r.node);
    const auto& m = *r.motion;
    const double f = m.length > 0.0 ? m.progress / m.length : 1.0;
    return lerp(place_position(m.from), place_position(m.to), f);
  }

  double distance_from_base(const Robot& r) const {
    const auto d = [&](const NodeId& n) {
      auto it = base_dist_.find(n);
      return it == base_dist_.end() ? 0.0 : it->second;
    };
    if (!r.motion) return d(r.node);
    const auto& m = *r.motion;
    return std::min(d(m.from) + m.progress, d(m.to) + (m.length - m.progress));
  }

  // Seed-graph place a (possibly annotation) IRM node stands for.
  NodeId place_of(const Irm& irm, const NodeId& id) const {
    if (s_.irm_seed_graph.contains(id)) return id;
    if (irm.contains(id))
      for (const auto& [v, len] : irm.neighbors(id))
        if (s_.irm_seed_graph.contains(v)) return v;
    return s_.base_node;
  }

  // ------------------------------------------------------------------ motion

  NodeId exploration_goal(Robot& r) {
    const NodeId from = r.motion ? r.motion->to : r.node;
    std::set<NodeId> claimed;
    for (const auto& q : robots_) {
      if (&q == &r || !q.explore_goal) continue;
      if (topology_.widest_path_route(r.spec->id, q.spec->id, now_)) claimed.insert(*q.explore_goal);
    }
    const auto dist = s_.irm_seed_graph.graph_distances(from);
    std::optional<NodeId> best;
    double best_d = 0.0;
    for (const auto& [id, d] : dist) {
      if (r.irm.node(id).kind != NodeKind::Frontier || claimed.count(id)) continue;
      if (!best || d < best_d) {
        best = id;
        best_d = d;
      }
    }
    r.explore_goal = best;
    return best ? *best : s_.base_node;
  }

  void plan(Robot& r, const NodeId& goal) {
    if (r.goal == goal && (!r.path.empty() || r.motion || r.node == goal)) return;
    r.goal = goal;
    r.path.clear();
    if (r.motion) {
      auto& m = *r.motion;
      const auto to_goal = s_.irm_seed_graph.graph_distances(goal);
      const double via_to = (m.length - m.progress) + to_goal.at(m.to);
      const double via_from = m.progress + to_goal.at(m.from);
      if (via_from < via_to) {
        std::swap(m.from, m.to);
        m.progress = m.length - m.progress;
      }
    }
    const NodeId start = r.motion ? r.motion->to : r.node;
    const auto p = s_.irm_seed_graph.shortest_path(start, goal);
    for (std::size_t i = 1; i < p.size(); ++i) r.path.push_back(p[i]);
  }

  void move(Robot& r) {
    r.arrivals.clear();
    if (r.spec->parked) return;

    if (r.drop_move) {
      plan(r, *r.drop_move);
    } else if (r.directive == MotionDirective::MoveToTarget && r.comms.target) {
      r.explore_goal.reset();
      plan(r, place_of(r.irm, *r.comms.target));
    } else if (r.directive == MotionDirective::Hold) {
      r.explore_goal.reset();
      plan(r, r.motion ? r.motion->to : r.node);
    } else {
      plan(r, exploration_goal(r));
    }

    double budget = r.spec->speed * s_.tick;
    while (budget > 1e-12) {
      if (!r.motion) {
        if (r.path.empty()) break;
        const NodeId next = r.path.front();
        r.path.pop_front();
        const auto& edges = s_.irm_seed_graph.edges();
        const auto k = r.node < next ? std::make_pair(r.node, next) : std::make_pair(next, r.node);
        r.motion = Motion{r.node, next, edges.at(k), 0.0};
      }
      auto& m = *r.motion;
      const double step = std::min(budget, m.length - m.progress);
      m.progress += step;
      budget -= step;
      if (m.progress >= m.length) {
        r.node = m.to;
        r.motion.reset();
        r.arrivals.push_back(r.node);
        if (r.history.empty() || r.history.back() != r.node) r.history.push_back(r.node);
        if (r.drop_move && r.node == *r.drop_move) break;
      }
    }
  }

  // ------------------------------------------------------------------- links

  bool in_outage(const NodeId& a, const NodeId& b) const {
    for (const auto& o : s_.outages) {
      if (now_ < o.start || now_ >= o.end) continue;
      if (!o.robot || *o.robot == a || *o.robot == b) return true;
    }
    return false;
  }

  void update_links() {
    radios_ = backbone_;
    for (const auto& r : robots_) {
      RadioSpec radio = r.spec->radio;
      const double h = radio.position.z;
      radio.position = position(r);
      radio.position.z += h;
      radios_.push_back(radio);
    }
    for (std::size_t i = 0; i < radios_.size(); ++i) {
      for (std::size_t j = i + 1; j < radios_.size(); ++j) {
        const auto& a = radios_[i];
        const auto& b = radios_[j];
        double snr = 0.0;
        if (!in_outage(a.id, b.id)) {
          const double d = std::max(distance(a.position, b.position), s_.model.d0);
          const double pl = path_loss(d, s_.model);
          snr = std::max(0.0, std::min(a.tx_power - pl - b.noise_level, b.tx_power - pl - a.noise_level));
        }
        topology_.set_link(a.id, b.id, snr, now_);
      }
    }
    bandwidth_.clear();
    for (const auto& r : radios_) bandwidth_[r.id] = r.bandwidth;
    for (auto& r : robots_) r.route = topology_.widest_path_route(r.spec->id, s_.base_node, now_);
  }

  double bottleneck(const Robot& r) const { return r.route ? r.route->bottleneck : 0.0; }

  void record_arrivals(Robot& r) {
    for (const auto& place : r.arrivals) {
      IrmNode n = r.irm.node(place);
      if (n.kind == NodeKind::Frontier) n.kind = NodeKind::Breadcrumb;
      n.timestamp = now_;
      r.irm.upsert(n);
      const NodeId cp = checkpoint_id(place);
      r.irm.upsert({cp, NodeKind::CommsCheckpoint, n.position, bottleneck(r), now_});
      r.irm.connect(place, cp, 0.0);
    }
    if (r.explore_goal && r.irm.node(*r.explore_goal).kind != NodeKind::Frontier)
      r.explore_goal.reset();
  }

  // ----------------------------------------------------------------- traffic

  void publish(Robot& r, Generator& g, Endpoint& ep, std::size_t bytes) {
    const std::vector<std::uint8_t> payload(bytes, static_cast<std::uint8_t>(g.publish_topic));
    const MessageSeq seq = ep.publish(g.publish_topic, payload, now_);
    const PendingKey key{r.spec->id, g.spec->from_base, g.publish_topic, seq};
    const Pending p{now_, to_string(g.spec->topic.data_class)};
    if (is_reliable(ep.topic(g.publish_topic).data_class)) {
      pending_[key] = p;
      ++generated_;
    } else {
      pending_unreliable_[key] = p;
    }
  }

  void generate(Robot& r) {
    for (auto [gens, ep] : {std::make_pair(&r.up_gen, r.up.get()),
                            std::make_pair(&r.down_gen, r.down.get())}) {
      for (auto& g : *gens) {
        g.accumulated += g.spec->rate * s_.tick;
        const auto size = static_cast<double>(g.spec->message_bytes);
        while (g.accumulated >= size) {
          g.accumulated -= size;
          publish(r, g, *ep, g.spec->message_bytes);
        }
        const auto& bursts = g.spec->bursts;
        while (g.next_burst < bursts.size() && bursts[g.next_burst].t <= now_ + 1e-9) {
          std::size_t left = bursts[g.next_burst++].bytes;
          while (left > 0) {
            const std::size_t n = std::min(left, g.spec->message_bytes);
            publish(r, g, *ep, n);
            left -= n;
          }
        }
      }
    }
  }

  // ---------------------------------------------------------------- exchange

  struct Hop {
    std::pair<NodeId, NodeId> key;
    double snr = 0.0;
  };

  std::vector<Hop> hops(const Robot& r) const {
    std::vector<Hop> out;
    if (!r.route) return out;
    const auto& p = r.route->path;
    for (std::size_t i = 1; i < p.size(); ++i) {
      auto k = p[i - 1] < p[i] ? std::make_pair(p[i - 1], p[i]) : std::make_pair(p[i], p[i - 1]);
      out.push_back({k, topology_.link(p[i - 1], p[i])->snr});
    }
    return out;
  }

  bool traverse(const std::vector<Hop>& path, std::size_t bytes) {
    if (path.empty()) return false;
    for (const auto& h : path) {
      auto it = budgets_.find(h.key);
      if (it == budgets_.end()) {
        const double bw = std::min(bandwidth_.at(h.key.first), bandwidth_.at(h.key.second));
        const double b = link_budget_bytes(s_.channel, bw, h.snr, s_.tick);
        it = budgets_.emplace(h.key, std::make_pair(b, b)).first;
      }
      if (!channel_deliver(bytes, h.snr, it->second.second, s_.channel, channel_rng_)) return false;
    }
    return true;
  }

  void deliver(Robot& r, bool from_base, const std::vector<Message>& messages) {
    for (const auto& m : messages) {
      const PendingKey key{r.spec->id, from_base, m.topic_id, m.seq};
      (from_base ? bytes_from_base_ : bytes_to_base_) += static_cast<double>(m.payload.size());
      if (auto it = pending_.find(key); it != pending_.end()) {
        auto& stats = latency_[it->second.origin];
        const double lat = now_ - it->second.created;
        ++stats.count;
        stats.total += lat;
        stats.max = std::max(stats.max, lat);
        ++delivered_;
        pending_.erase(it);
      } else if (auto u = pending_unreliable_.find(key); u != pending_unreliable_.end()) {
        auto& stats = latency_[u->second.origin];
        const double lat = now_ - u->second.created;
        ++stats.count;
        stats.total += lat;
        stats.max = std::max(stats.max, lat);
        pending_unreliable_.erase(u);
      } else if (is_reliable((from_base ? r.up : r.down)->topic(m.topic_id).data_class)) {
        ++duplicates_;
      }
    }
  }

  void exchange() {
    budgets_.clear();
    bytes_to_base_ = 0.0;
    bytes_from_base_ = 0.0;

    struct Flow {
      Robot* robot;
      bool from_base;
      std::deque<Datagram> queue;
      std::vector<Hop> forward;
      std::vector<Hop> reverse;
    };
    std::vector<Flow> flows;
    for (auto& r : robots_) {
      const auto h = hops(r);
      auto rev = h;
      std::reverse(rev.begin(), rev.end());
      auto up = r.up->service_transmit(now_);
      auto down = r.down->service_transmit(now_);
      flows.push_back({&r, false, {up.begin(), up.end()}, h, rev});
      flows.push_back({&r, true, {down.begin(), down.end()}, rev, h});
    }

    // Round-robin one datagram per flow so no robot starves the shared links.
    bool any = true;
    while (any) {
      any = false;
      for (auto& f : flows) {
        if (f.queue.empty()) continue;
        any = true;
        Datagram d = std::move(f.queue.front());
        f.queue.pop_front();
        if (!traverse(f.forward, d.wire_size())) continue;
        Endpoint& receiver = f.from_base ? *f.robot->up : *f.robot->down;
        Endpoint& sender = f.from_base ? *f.robot->down : *f.robot->up;
        const auto wire = d.encode();
        auto got = receiver.handle_datagram(std::span<const std::uint8_t>(wire), now_);
        deliver(*f.robot, f.from_base, got.deliverable);
        for (const auto& ack : got.acks) {
          if (!traverse(f.reverse, ack.wire_size())) continue;
          const auto ack_wire = ack.encode();
          sender.handle_datagram(std::span<const std::uint8_t>(ack_wire), now_);
        }
      }
    }

    for (const auto& [k, b] : budgets_)
      if (b.first > 0.0) max_utilization_ = std::max(max_utilization_, (b.first - b.second) / b.first);
    events_.push_back({{"type", "throughput"},
                       {"t", now_},
                       {"to_base", bytes_to_base_},
                       {"from_base", bytes_from_base_}});
  }

  // --------------------------------------------------------------- behaviours

  void log(json ev) {
    ev["t"] = now_;
    events_.push_back(std::move(ev));
  }

  std::map<std::string, double> backbone_bottlenecks() const {
    MeshTopology backbone(s_.stale_horizon);
    for (const auto& r : backbone_) backbone.add_node(r.id);
    for (const auto& [k, l] : topology_.links())
      if (backbone.has_node(k.first) && backbone.has_node(k.second))
        backbone.set_link(k.first, k.second, l.snr, l.timestamp);
    auto widths = backbone.widest_bottlenecks_from(s_.base_node);
    std::map<std::string, double> out;
    for (const auto& r : backbone_) {
      auto it = widths.find(r.id);
      out[r.id] = it == widths.end() ? 0.0 : it->second;
    }
    return out;
  }

  void step_drop(Robot& r) {
    if (r.spec->slots <= 0) return;
    const bool at_node = !r.motion || !r.arrivals.empty();
    if (!at_node && !r.drop.retry_pending) return;

    const RobotView view{r.spec->id, r.node, r.history};
    const bool had_site = r.drop.site.has_value();
    DropAction a;
    try {
      a = drop_scheduler_step(r.drop, view, bottleneck(r), r.irm, r.drop_config, jam_rng_);
    } catch (const DomainError& e) {
      log({{"type", "drop_error"}, {"robot", r.spec->id}, {"message", e.what()}});
      return;
    }
    if (!had_site && (a.committed || a.kind != DropActionKind::None))
      log({{"type", "drop_trigger"}, {"robot", r.spec->id}, {"bottleneck", bottleneck(r)}});

    if (a.committed) {
      const NodeId intent = "drop:" + r.spec->id + ":" + std::to_string(r.drop_counter++);
      const NodeId site = r.drop.site ? *r.drop.site : a.node;
      r.irm.upsert({intent, NodeKind::DropIntent, place_position(site), 0.0, now_});
      r.irm.connect(site, intent, 0.0);
      r.drop.intent_id = intent;
      log({{"type", "drop_intent"}, {"robot", r.spec->id}, {"site", site}, {"intent", intent}});
    }

    switch (a.kind) {
      case DropActionKind::None:
        r.drop_move.reset();
        if (!a.note.empty() && a.note != r.last_drop_note)
          log({{"type", "drop_note"}, {"robot", r.spec->id}, {"note", a.note}});
        r.last_drop_note = a.note;
        break;
      case DropActionKind::Backtrack:
        r.last_drop_note.clear();
        r.drop_move = a.node;
        log({{"type", "backtrack"}, {"robot", r.spec->id}, {"to", a.node}});
        break;
      case DropActionKind::Drop:
      case DropActionKind::Retry:
        r.last_drop_note.clear();
        r.drop_move.reset();
        if (a.jammed) {
          log({{"type", "jam"}, {"robot", r.spec->id}, {"site", a.node},
               {"attempt", to_string(a.kind)}, {"slots_used", r.drop.slots_used}});
        } else {
          deploy_radio(r, a.node, a.kind);
        }
        break;
    }

    if (!r.drop.site && !r.drop.retry_pending && r.drop.intent_id) {
      r.irm.remove(*r.drop.intent_id);
      r.drop.intent_id.reset();
    }
  }

  void deploy_radio(Robot& r, const NodeId& site, DropActionKind kind) {
    const NodeId id = r.drop.intent_id ? *r.drop.intent_id
                                       : "drop:" + r.spec->id + ":" + std::to_string(r.drop_counter++);
    RadioSpec radio = s_.drop_radio;
    radio.id = id;
    radio.position = place_position(site);
    backbone_.push_back(radio);
    topology_.add_node(id);
    r.irm.upsert({id, NodeKind::DroppedRadio, radio.position, bottleneck(r), now_});
    r.irm.connect(site, id, 0.0);
    r.drop.intent_id.reset();
    log({{"type", "drop"}, {"robot", r.spec->id}, {"site", site}, {"radio", id},
         {"attempt", to_string(kind)}, {"slots_used", r.drop.slots_used}});

    // The backbone changed: refresh this robot's checkpoint predictions.
    const auto widths = backbone_bottlenecks();
    std::map<std::string, double> caps = widths;
    caps[s_.base_node] = kUnboundedSnr;
    caps[id] = std::max(caps[id], bottleneck(r));
    r.irm = refresh_checkpoints(r.irm, backbone_, caps, s_.drop_radio.noise_level, s_.model, now_);
  }

  void step_comms(Robot& r) {
    if (!s_.return_to_comms_enabled) return;
    const RobotCommsState before = r.comms;
    const std::size_t buffer = r.up->queued_bytes();
    try {
      auto res = return_to_comms_step(r.comms, buffer, r.irm, r.node, s_.base_node,
                                      s_.return_to_comms, now_, r.motion.has_value());
      r.comms = res.state;
      r.directive = res.directive;
    } catch (const NoCommsTargetError& e) {
      r.comms.above_upper = buffer > s_.return_to_comms.upper_bytes;
      log({{"type", "comms_error"}, {"robot", r.spec->id}, {"message", e.what()}});
      return;
    }
    if (r.comms.mode != before.mode || r.comms.target != before.target) {
      json ev{{"type", "mode"},
              {"robot", r.spec->id},
              {"from", to_string(before.mode)},
              {"to", to_string(r.comms.mode)},
              {"buffer", buffer}};
      if (r.comms.target) ev["target"] = *r.comms.target;
      log(std::move(ev));
    }
  }

  void merge_into(Irm& a, Irm& b) {
    if (a == b) return;
    Irm m = merge(a, b);
    a = m;
    b = std::move(m);
  }

  void share_maps(Robot& r) {
    if (bottleneck(r) >= kStrongSnrThreshold) merge_into(r.irm, base_irm_);
    for (auto& q : robots_) {
      if (&q == &r) continue;
      const auto l = topology_.link(r.spec->id, q.spec->id);
      if (l && l->snr >= kStrongSnrThreshold) merge_into(r.irm, q.irm);
    }
  }

  void sample(Robot& r) {
    json topics = json::object();
    for (const auto& st : r.up->buffer_stats(now_))
      if (st.topic_id != kAggregateTopic) topics[std::to_string(st.topic_id)] = st.queued_bytes;
    log({{"type", "sample"},
         {"robot", r.spec->id},
         {"buffer", r.up->queued_bytes()},
         {"acked", r.up->acked_bytes()},
         {"connected", r.route.has_value()},
         {"bottleneck", bottleneck(r)},
         {"dist", distance_from_base(r)},
         {"mode", to_string(r.comms.mode)},
         {"topics", topics}});
  }

  void step() {
    for (auto& r : robots_) move(r);
    update_links();
    for (auto& r : robots_) record_arrivals(r);
    for (auto& r : robots_) generate(r);
    exchange();
    for (auto& r : robots_) {
      step_drop(r);
      step_comms(r);
    }
    // Expire everywhere before merging so stale intents are not copied back.
    for (auto& r : robots_) r.irm.expire_drop_intents(now_, s_.intent_horizon);
    base_irm_.expire_drop_intents(now_, s_.intent_horizon);
    for (auto& r : robots_) share_maps(r);
    for (auto& r : robots_) sample(r);
  }

  MessageAccounting reconcile() const {
    MessageAccounting a;
    a.generated = generated_;
    a.delivered = delivered_;
    a.duplicates = duplicates_;
    a.latency_by_class = latency_;
    for (const auto& r : robots_) {
      for (bool from_base : {false, true}) {
        const Endpoint& sender = from_base ? *r.down : *r.up;
        const Endpoint& receiver = from_base ? *r.up : *r.down;
        const auto out = sender.outstanding();
        const auto held = receiver.held();
        const std::set<std::pair<TopicId, MessageSeq>> outstanding(out.begin(), out.end());
        const std::set<std::pair<TopicId, MessageSeq>> holding(held.begin(), held.end());
        for (const auto& [key, p] : pending_) {
          if (std::get<0>(key) != r.spec->id || std::get<1>(key) != from_base) continue;
          const auto id = std::make_pair(std::get<2>(key), std::get<3>(key));
          if (outstanding.count(id))
            ++a.queued;
          else if (holding.count(id))
            ++a.in_flight;
          else
            ++a.unaccounted;
        }
      }
    }
    return a;
  }

  const Scenario& s_;
  MeshTopology topology_;
  std::mt19937_64 channel_rng_;
  std::mt19937_64 jam_rng_;
  std::mt19937_64 traffic_rng_;
  Irm base_irm_;
  std::vector<RadioSpec> backbone_;
  std::vector<RadioSpec> radios_;
  std::map<NodeId, double> bandwidth_;
  std::map<NodeId, double> base_dist_;
  std::vector<Robot> robots_;
  std::map<std::pair<NodeId, NodeId>, std::pair<double, double>> budgets_;  // (initial, left)
  std::map<PendingKey, Pending> pending_;
  std::map<PendingKey, Pending> pending_unreliable_;
  std::map<std::string, LatencyStats> latency_;
  std::size_t generated_ = 0;
  std::size_t delivered_ = 0;
  std::size_t duplicates_ = 0;
  double bytes_to_base_ = 0.0;
  double bytes_from_base_ = 0.0;
  double max_utilization_ = 0.0;
  double now_ = 0.0;
  std::vector<json> events_;
  std::string topology_snapshots_;
};

}  // namespace

SimOutput run(const Scenario& scenario) {
  validate_scenario(scenario);
  Simulator sim(scenario);
  return sim.run();
}

}  // namespace achord
