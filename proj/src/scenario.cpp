#include "achord/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "achord/errors.hpp"

namespace achord {

using nlohmann::json;

std::size_t Scenario::tick_count() const {
  if (!(tick > 0.0) || !(duration > 0.0)) return 0;
  return static_cast<std::size_t>(std::llround(duration / tick));
}

namespace {

// Collects every problem instead of stopping at the first one.
class Reader {
 public:
  std::vector<std::string> errors;

  template <typename T>
  T get(const json& obj, const std::string& key, const std::string& path, T fallback) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    try {
      return obj.at(key).get<T>();
    } catch (const std::exception&) {
      errors.push_back(path + "." + key + ": wrong type");
      return fallback;
    }
  }

  template <typename T>
  std::optional<T> require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) {
      errors.push_back(path + "." + key + ": required");
      return std::nullopt;
    }
    try {
      return obj.at(key).get<T>();
    } catch (const std::exception&) {
      errors.push_back(path + "." + key + ": wrong type");
      return std::nullopt;
    }
  }

  void check(bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  }
};

RadioSpec read_radio(Reader& r, const json& j, const std::string& path, const RadioSpec& fallback) {
  RadioSpec radio = fallback;
  if (!j.is_object()) return radio;
  radio.tx_power = r.get(j, "tx_power_dbm", path, radio.tx_power);
  radio.noise_level = r.get(j, "noise_db", path, radio.noise_level);
  radio.bandwidth = r.get(j, "bandwidth_hz", path, radio.bandwidth);
  radio.position.z = r.get(j, "height", path, radio.position.z);
  return radio;
}

TopicConfig read_topic(Reader& r, const json& j, const std::string& path) {
  TopicConfig t;
  if (auto id = r.require<int>(j, "id", path)) {
    if (*id < 0 || *id >= kAggregateTopic)
      r.errors.push_back(path + ".id: must be in [0, 65534]");
    else
      t.topic_id = static_cast<TopicId>(*id);
  }
  const auto cls = r.get<std::string>(j, "class", path, "key");
  try {
    t.data_class = data_class_from_string(cls);
  } catch (const std::exception& e) {
    r.errors.push_back(path + ".class: " + e.what());
  }
  t.token_rate = r.get(j, "token_rate", path, 0.0);
  t.max_payload = r.get<std::size_t>(j, "max_payload", path, 1024);
  t.bucket_depth = r.get(j, "bucket_depth", path, static_cast<double>(t.max_payload) * 4.0);
  t.compression_ratio = r.get(j, "compression_ratio", path, 1.0);
  try {
    t.validate();
  } catch (const std::exception& e) {
    r.errors.push_back(path + ": " + e.what());
  }
  return t;
}

}  // namespace

Scenario parse_scenario(const json& doc) {
  Reader r;
  Scenario s;
  if (!doc.is_object()) throw ValidationError({"scenario: expected a JSON object"});

  s.seed = r.get<std::uint64_t>(doc, "seed", "scenario", s.seed);
  s.duration = r.get(doc, "duration", "scenario", s.duration);
  s.tick = r.get(doc, "tick", "scenario", s.tick);
  s.stale_horizon = r.get(doc, "stale_horizon", "scenario", s.stale_horizon);
  s.intent_horizon = r.get(doc, "intent_horizon", "scenario", s.intent_horizon);
  s.snapshot_interval = r.get(doc, "snapshot_interval", "scenario", s.snapshot_interval);
  s.stratified = r.get(doc, "stratified", "scenario", s.stratified);

  // Graph: every node starts as an unexplored frontier except the base.
  const json graph = doc.value("graph", json::object());
  std::map<NodeId, Vec3> positions;
  if (!graph.contains("nodes") || !graph["nodes"].is_array() || graph["nodes"].empty()) {
    r.errors.push_back("graph.nodes: required non-empty array");
  } else {
    std::size_t i = 0;
    for (const auto& n : graph["nodes"]) {
      const std::string path = "graph.nodes[" + std::to_string(i++) + "]";
      auto id = r.require<std::string>(n, "id", path);
      if (!id) continue;
      if (positions.count(*id)) {
        r.errors.push_back(path + ".id: duplicate '" + *id + "'");
        continue;
      }
      const Vec3 p{r.get(n, "x", path, 0.0), r.get(n, "y", path, 0.0), r.get(n, "z", path, 0.0)};
      positions[*id] = p;
      s.irm_seed_graph.upsert({*id, NodeKind::Frontier, p, 0.0, 0.0});
    }
  }
  if (graph.contains("edges") && graph["edges"].is_array()) {
    std::size_t i = 0;
    for (const auto& e : graph["edges"]) {
      const std::string path = "graph.edges[" + std::to_string(i++) + "]";
      auto a = r.require<std::string>(e, "a", path);
      auto b = r.require<std::string>(e, "b", path);
      if (!a || !b) continue;
      if (!positions.count(*a) || !positions.count(*b)) {
        r.errors.push_back(path + ": references unknown node");
        continue;
      }
      if (*a == *b) {
        r.errors.push_back(path + ": self-loop on '" + *a + "'");
        continue;
      }
      const double len = r.get(e, "length", path, distance(positions[*a], positions[*b]));
      if (!(len >= 0.0)) {
        r.errors.push_back(path + ".length: must be >= 0");
        continue;
      }
      s.irm_seed_graph.connect(*a, *b, len);
    }
  }

  const json base = doc.value("base", json::object());
  s.base_node = r.get<std::string>(base, "node", "base", "base");
  if (!positions.count(s.base_node)) {
    r.errors.push_back("base.node: unknown graph node '" + s.base_node + "'");
  } else {
    s.irm_seed_graph.upsert({s.base_node, NodeKind::Breadcrumb, positions[s.base_node], 0.0, 0.0});
  }
  s.base_radio = read_radio(r, base.value("radio", json::object()), "base.radio", RadioSpec{});
  s.base_radio.id = s.base_node;
  if (positions.count(s.base_node)) {
    const double h = s.base_radio.position.z;
    s.base_radio.position = positions[s.base_node];
    s.base_radio.position.z += h;
  }
  s.drop_radio = read_radio(r, doc.value("drop_radio", json::object()), "drop_radio", s.base_radio);
  s.drop_radio.position = {};

  const json model = doc.value("model", json::object());
  s.model.d0 = r.get(model, "d0", "model", s.model.d0);
  s.model.pl_d0 = r.get(model, "pl_d0", "model", s.model.pl_d0);
  s.model.eta = r.get(model, "eta", "model", s.model.eta);

  const json channel = doc.value("channel", json::object());
  s.channel.efficiency = r.get(channel, "efficiency", "channel", s.channel.efficiency);
  s.channel.loss_snr_hi = r.get(channel, "loss_snr_hi", "channel", s.channel.loss_snr_hi);
  s.channel.loss_snr_lo = r.get(channel, "loss_snr_lo", "channel", s.channel.loss_snr_lo);

  const json drop = doc.value("drop", json::object());
  s.drop.snr_floor = r.get(drop, "snr_floor", "drop", s.drop.snr_floor);
  s.drop.overlap_radius = r.get(drop, "overlap_radius", "drop", s.drop.overlap_radius);
  s.drop.jam_probability = r.get(drop, "jam_probability", "drop", s.drop.jam_probability);
  s.drop.backtrack_limit = r.get(drop, "backtrack_limit", "drop", s.drop.backtrack_limit);

  const json rtc = doc.value("return_to_comms", json::object());
  s.return_to_comms_enabled = r.get(rtc, "enabled", "return_to_comms", true);
  s.return_to_comms.upper_bytes =
      r.get(rtc, "upper_bytes", "return_to_comms", s.return_to_comms.upper_bytes);
  s.return_to_comms.lower_bytes =
      r.get(rtc, "lower_bytes", "return_to_comms", s.return_to_comms.lower_bytes);
  s.return_to_comms.wait_timeout =
      r.get(rtc, "wait_timeout", "return_to_comms", s.return_to_comms.wait_timeout);

  const json transport = doc.value("transport", json::object());
  s.transport.retransmit_timeout =
      r.get(transport, "retransmit_timeout", "transport", s.transport.retransmit_timeout);
  s.transport.window = r.get(transport, "window", "transport", s.transport.window);
  s.transport.rate_smoothing =
      r.get(transport, "rate_smoothing", "transport", s.transport.rate_smoothing);
  s.transport.time_sensitive_share =
      r.get(transport, "time_sensitive_share", "transport", s.transport.time_sensitive_share);

  if (doc.contains("robots") && doc["robots"].is_array()) {
    std::size_t i = 0;
    for (const auto& j : doc["robots"]) {
      const std::string path = "robots[" + std::to_string(i++) + "]";
      RobotSpec robot;
      robot.id = r.require<std::string>(j, "id", path).value_or("");
      robot.start = r.get<std::string>(j, "start", path, s.base_node);
      robot.speed = r.get(j, "speed", path, robot.speed);
      robot.slots = r.get(j, "slots", path, robot.slots);
      robot.parked = r.get(j, "parked", path, robot.parked);
      robot.radio = read_radio(r, j.value("radio", json::object()), path + ".radio", s.drop_radio);
      robot.radio.id = robot.id;
      s.robots.push_back(std::move(robot));
    }
  }

  if (doc.contains("traffic") && doc["traffic"].is_array()) {
    std::size_t i = 0;
    for (const auto& j : doc["traffic"]) {
      const std::string path = "traffic[" + std::to_string(i++) + "]";
      TrafficSpec t;
      t.robot = r.require<std::string>(j, "robot", path).value_or("");
      const auto dir = r.get<std::string>(j, "direction", path, "to_base");
      if (dir != "to_base" && dir != "from_base")
        r.errors.push_back(path + ".direction: expected 'to_base' or 'from_base'");
      t.from_base = dir == "from_base";
      if (j.contains("topic"))
        t.topic = read_topic(r, j["topic"], path + ".topic");
      else
        r.errors.push_back(path + ".topic: required");
      t.rate = r.get(j, "rate", path, 0.0);
      t.message_bytes = r.get<std::size_t>(j, "message_bytes", path, t.message_bytes);
      if (j.contains("bursts") && j["bursts"].is_array()) {
        std::size_t b = 0;
        for (const auto& bj : j["bursts"]) {
          const std::string bp = path + ".bursts[" + std::to_string(b++) + "]";
          t.bursts.push_back({r.get(bj, "t", bp, 0.0), r.get<std::size_t>(bj, "bytes", bp, 0)});
        }
      }
      s.traffic.push_back(std::move(t));
    }
  }

  if (doc.contains("outages") && doc["outages"].is_array()) {
    std::size_t i = 0;
    for (const auto& j : doc["outages"]) {
      const std::string path = "outages[" + std::to_string(i++) + "]";
      Outage o;
      o.start = r.get(j, "start", path, 0.0);
      o.end = r.get(j, "end", path, 0.0);
      if (j.contains("robot")) o.robot = r.get<std::string>(j, "robot", path, "");
      s.outages.push_back(o);
    }
  }

  std::vector<std::string> errors = std::move(r.errors);
  try {
    validate_scenario(s);
  } catch (const ValidationError& e) {
    errors.insert(errors.end(), e.violations().begin(), e.violations().end());
  }
  std::vector<std::string> unique;
  for (auto& e : errors)
    if (std::find(unique.begin(), unique.end(), e) == unique.end()) unique.push_back(std::move(e));
  if (!unique.empty()) throw ValidationError(std::move(unique));
  return s;
}

void validate_scenario(const Scenario& s) {
  Reader r;
  r.check(s.tick > 0.0, "tick: must be > 0");
  r.check(s.duration >= 0.0, "duration: must be >= 0");
  r.check(s.duration == 0.0 || s.duration >= s.tick, "duration: must be 0 or >= tick");
  r.check(s.irm_seed_graph.contains(s.base_node), "base.node: unknown graph node '" + s.base_node + "'");
  r.check(s.base_radio.bandwidth > 0.0, "base.radio.bandwidth_hz: must be > 0");
  r.check(s.drop_radio.bandwidth > 0.0, "drop_radio.bandwidth_hz: must be > 0");
  r.check(s.stale_horizon > 0.0, "stale_horizon: must be > 0");
  r.check(s.intent_horizon > 0.0, "intent_horizon: must be > 0");
  r.check(s.snapshot_interval > 0.0, "snapshot_interval: must be > 0");
  const auto guard = [&](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      r.errors.push_back(where + ": " + e.what());
    }
  };
  guard("model", [&] { s.model.validate(); });
  guard("drop", [&] { s.drop.validate(); });
  guard("return_to_comms", [&] { s.return_to_comms.validate(); });
  r.check(s.channel.efficiency > 0.0 && s.channel.efficiency <= 1.0,
          "channel.efficiency: must be in (0, 1]");
  r.check(s.channel.loss_snr_lo < s.channel.loss_snr_hi,
          "channel: loss_snr_lo must be < loss_snr_hi");
  r.check(s.transport.retransmit_timeout > 0.0, "transport.retransmit_timeout: must be > 0");
  r.check(s.transport.window > 0, "transport.window: must be > 0");

  std::set<NodeId> robot_ids;
  for (std::size_t i = 0; i < s.robots.size(); ++i) {
    const auto& robot = s.robots[i];
    const std::string path = "robots[" + std::to_string(i) + "]";
    r.check(!robot.id.empty(), path + ".id: must be non-empty");
    r.check(robot_ids.insert(robot.id).second, path + ".id: duplicate '" + robot.id + "'");
    r.check(robot.id != s.base_node, path + ".id: clashes with the base node");
    r.check(s.irm_seed_graph.contains(robot.start), path + ".start: unknown graph node");
    r.check(robot.speed > 0.0, path + ".speed: must be > 0");
    r.check(robot.slots >= 0 && robot.slots <= 6, path + ".slots: must be in [0, 6]");
    r.check(robot.radio.bandwidth > 0.0, path + ".radio.bandwidth_hz: must be > 0");
  }

  std::map<std::pair<NodeId, TopicId>, std::size_t> topic_owner;
  for (std::size_t i = 0; i < s.traffic.size(); ++i) {
    const auto& t = s.traffic[i];
    const std::string path = "traffic[" + std::to_string(i) + "]";
    r.check(robot_ids.count(t.robot) != 0, path + ".robot: unknown robot '" + t.robot + "'");
    r.check(t.rate >= 0.0, path + ".rate: must be >= 0");
    r.check(t.message_bytes > 0, path + ".message_bytes: must be > 0");
    r.check(topic_owner.emplace(std::make_pair(t.robot, t.topic.topic_id), i).second,
            path + ".topic.id: duplicate topic id for robot '" + t.robot + "'");
    if (!s.stratified && t.topic.data_class == DataClass::MissionCritical) {
      bool has_key = false;
      for (const auto& o : s.traffic)
        has_key |= o.robot == t.robot && o.from_base == t.from_base &&
                   o.topic.data_class == DataClass::Key;
      r.check(has_key, path + ": unstratified mission-critical traffic needs a key topic");
    }
  }

  for (std::size_t i = 0; i < s.outages.size(); ++i) {
    const auto& o = s.outages[i];
    const std::string path = "outages[" + std::to_string(i) + "]";
    r.check(o.end > o.start, path + ": end must be > start");
    if (o.robot) r.check(robot_ids.count(*o.robot) != 0, path + ".robot: unknown robot");
  }
  if (!r.errors.empty()) throw ValidationError(std::move(r.errors));
}

}  // namespace achord
