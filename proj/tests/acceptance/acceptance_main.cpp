// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "achord/behaviors.hpp"
#include "achord/irm.hpp"
#include "achord/mesh.hpp"
#include "achord/propagation.hpp"
#include "achord/sim.hpp"
#include "achord/transport.hpp"
#include "json.hpp"

using namespace achord;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %2d %-28s %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

json load_scenario(const std::string& name) {
  std::ifstream in(std::string(ACHORD_SOURCE_DIR) + "/scenarios/" + name);
  return json::parse(in);
}

// ---------------------------------------------------------------- 1

double brute_bottleneck(const MeshTopology& t, const NodeId& src, const NodeId& dst) {
  double best = -1.0;
  std::vector<NodeId> path{src};
  std::function<void(double)> dfs = [&](double width) {
    const NodeId at = path.back();
    if (at == dst) {
      best = std::max(best, width);
      return;
    }
    for (const auto& n : t.nodes()) {
      if (std::find(path.begin(), path.end(), n) != path.end()) continue;
      const auto l = t.link(at, n);
      if (!l) continue;
      path.push_back(n);
      dfs(std::min(width, l->snr));
      path.pop_back();
    }
  };
  dfs(kUnboundedSnr);
  return best;
}

void routing_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t pairs = 0, mismatches = 0;
  for (int g = 0; g < 1000; ++g) {
    const int n = size(rng);
    const double density = 0.2 + 0.7 * u(rng);
    MeshTopology t;
    for (int i = 0; i < n; ++i) t.add_node("n" + std::to_string(i));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (u(rng) < density) {
          // Half the graphs use coarse SNR levels so that ties are common.
          const double snr = g % 2 ? 10.0 * (1 + static_cast<int>(rng() % 4)) : 0.5 + 59.5 * u(rng);
          t.set_link("n" + std::to_string(i), "n" + std::to_string(j), snr, 0.0);
        }
    for (const auto& s : t.nodes())
      for (const auto& d : t.nodes()) {
        ++pairs;
        const auto r = t.widest_path_route(s, d);
        const double oracle = brute_bottleneck(t, s, d);
        const bool ok = oracle < 0 ? !r : (r && r->bottleneck == oracle);
        if (!ok) ++mismatches;
      }
  }
  const double dt = seconds_since(t0);
  report(1, "routing oracle", mismatches == 0 && dt < 5.0,
         std::to_string(pairs) + " pairs, " + std::to_string(mismatches) + " mismatches, " +
             fmt("%.2f s", dt));
}

// ---------------------------------------------------------------- 2

void fit_round_trip() {
  std::vector<SnrSample> clean;
  for (double d = 1.0; d <= 120.0; d *= 1.15) clean.push_back({d, 34.0 + 10.0 * 3.83 * std::log10(d)});
  const auto m = fit_path_loss(clean, 1.0);
  const double e_eta = std::abs(m.eta - 3.83), e_pl = std::abs(m.pl_d0 - 34.0);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> logd(0.0, 2.0), noise(-0.5, 0.5);
  std::vector<SnrSample> noisy;
  for (int i = 0; i < 200; ++i) {
    const double d = std::pow(10.0, logd(rng));
    noisy.push_back({d, 34.0 + 38.3 * std::log10(d) + noise(rng)});
  }
  const auto n = fit_path_loss(noisy, 1.0);
  report(2, "path-loss fit", e_eta < 1e-9 && e_pl < 1e-9 && std::abs(n.eta - 3.83) < 0.1,
         fmt("clean |d_eta|=%.1e |d_pl|=%.1e, noisy eta=%.4f", e_eta, e_pl, n.eta));
}

// ---------------------------------------------------------------- 3

void shannon_spot() {
  const double c0 = shannon_capacity(1e6, 0.0);
  const double c20 = shannon_capacity(1e6, 20.0);
  report(3, "shannon spot values", c0 == 1e6 && std::abs(c20 / 1e6 - 6.6582) <= 1e-3,
         fmt("0 dB -> %.6f Mbps, 20 dB -> %.6f Mbps", c0 / 1e6, c20 / 1e6));
}

// ---------------------------------------------------------------- 4

void transport_reliability() {
  const auto t0 = Clock::now();
  std::vector<TopicConfig> topics{{1, DataClass::Key, 200'000, 16'384, 512, 1.0},
                                  {2, DataClass::MissionCritical, 200'000, 16'384, 512, 1.0}};
  Endpoint tx(topics), rx(topics);
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto survives = [&] { return u(rng) >= 0.3; };

  std::map<std::pair<TopicId, MessageSeq>, std::vector<std::uint8_t>> sent;
  std::map<std::pair<TopicId, MessageSeq>, int> seen;
  std::vector<MessageSeq> key_order;
  std::size_t corrupt = 0;
  int published = 0;
  double now = 0.0;
  for (int k = 0; k < 20000 && (published < 10000 || tx.queued_bytes() > 0); ++k, now += 0.1) {
    for (int i = 0; i < 10 && published < 10000; ++i, ++published) {
      const TopicId t = rng() % 4 == 0 ? 2 : 1;
      std::vector<std::uint8_t> p(1 + rng() % 1200);
      for (auto& b : p) b = static_cast<std::uint8_t>(rng());
      sent[{t, tx.publish(t, p, now)}] = p;
    }
    for (const auto& d : tx.service_transmit(now)) {
      if (!survives()) continue;
      auto got = rx.handle_datagram(std::span<const std::uint8_t>(d.encode()), now);
      for (const auto& m : got.deliverable) {
        ++seen[{m.topic_id, m.seq}];
        if (m.payload != sent.at({m.topic_id, m.seq})) ++corrupt;
        if (m.topic_id == 1) key_order.push_back(m.seq);
      }
      for (const auto& a : got.acks)
        if (survives()) tx.handle_datagram(std::span<const std::uint8_t>(a.encode()), now);
    }
  }
  std::size_t once = 0, dup = 0;
  for (const auto& [id, c] : seen) (c == 1 ? once : dup) += 1;
  bool ordered = true;
  for (std::size_t i = 0; i < key_order.size(); ++i) ordered &= key_order[i] == i;
  const double dt = seconds_since(t0);
  const bool ok = once == sent.size() && dup == 0 && corrupt == 0 && ordered && sent.size() == 10000 &&
                  dt < 10.0;
  report(4, "transport reliability", ok,
         std::to_string(once) + "/" + std::to_string(sent.size()) + " exactly once, " +
             std::to_string(dup) + " duplicated, key order " + (ordered ? "intact" : "broken") +
             fmt(", %.2f s", dt));
}

// ---------------------------------------------------------------- 5

void token_conformance() {
  std::size_t windows = 0, violations = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<TopicConfig> topics;
    for (TopicId id = 1; id <= 3; ++id) {
      const DataClass c = id == 1 ? DataClass::Key : id == 2 ? DataClass::MissionCritical : DataClass::TimeSensitive;
      topics.push_back({id, c, 200.0 + static_cast<double>(rng() % 8000),
                        1024.0 + static_cast<double>(rng() % 16000), 1024, 1.0});
    }
    Endpoint tx(topics);
    std::map<TopicId, std::vector<std::pair<double, double>>> emitted;
    const double p_publish = 0.05 + 0.5 * std::uniform_real_distribution<double>(0, 1)(rng);
    for (int k = 0; k < 3000; ++k) {
      const double now = k * 0.1;
      while (std::uniform_real_distribution<double>(0, 1)(rng) < p_publish) {
        const TopicId t = static_cast<TopicId>(1 + rng() % 3);
        tx.publish(t, std::vector<std::uint8_t>(1 + rng() % 5000), now);
      }
      for (const auto& d : tx.service_transmit(now)) {
        emitted[d.topic_id].push_back({now, static_cast<double>(d.wire_size())});
        if (rng() % 3) tx.handle_ack(make_ack(d));
      }
    }
    for (const auto& [id, series] : emitted) {
      const auto& cfg = tx.topic(id);
      const double rate = cfg.data_class == DataClass::TimeSensitive && cfg.token_rate <= 0.0
                              ? 0.0
                              : cfg.token_rate;
      const double bound = cfg.bucket_depth + rate * 60.0;
      double sum = 0.0;
      std::size_t hi = 0;
      for (std::size_t lo = 0; lo < series.size(); ++lo) {
        while (hi < series.size() && series[hi].first <= series[lo].first + 60.0) sum += series[hi++].second;
        ++windows;
        worst = std::max(worst, sum / bound);
        if (sum > bound + 1e-6) ++violations;
        sum -= series[lo].second;
      }
    }
  }
  report(5, "token conformance", violations == 0 && windows > 0,
         std::to_string(windows) + " windows, " + std::to_string(violations) +
             fmt(" violations, worst fill %.3f of bound", worst));
}

// ---------------------------------------------------------------- 6

json stratification_doc(bool stratified) {
  json d = load_scenario("outage_120s.json");
  d["duration"] = 400;
  d["stratified"] = stratified;
  d["outages"] = json::array({{{"start", 60}, {"end", 180}}});
  d["traffic"] = json::array(
      {{{"robot", "r1"},
        {"topic", {{"id", 1}, {"class", "key"}, {"token_rate", 12000}, {"bucket_depth", 8192}}},
        {"rate", 10000},
        {"message_bytes", 1000}},
       {{"robot", "r1"},
        {"topic", {{"id", 2}, {"class", "mission_critical"}, {"token_rate", 6000}, {"bucket_depth", 4096}}},
        {"rate", 4000},
        {"message_bytes", 200}}});
  return d;
}

void stratification() {
  const auto a = run(parse_scenario(stratification_doc(false)));
  const auto b = run(parse_scenario(stratification_doc(true)));
  const auto mc = [](const SimOutput& o) {
    auto it = o.accounting.latency_by_class.find("mission_critical");
    return it == o.accounting.latency_by_class.end() ? std::nan("") : it->second.mean();
  };
  const double lat_a = mc(a), lat_b = mc(b);
  const double peak_a = static_cast<double>(a.metrics.peak_buffer.at("r1"));
  const double peak_b = static_cast<double>(b.metrics.peak_buffer.at("r1"));
  report(6, "stratification", lat_b < lat_a && peak_b < peak_a,
         fmt("MC mean latency %.2f s -> %.2f s, peak buffer %.0f B -> %.0f B", lat_a, lat_b, peak_a,
             peak_b));
}

// ---------------------------------------------------------------- 7

void return_to_comms() {
  Irm g;
  g.upsert({"base", NodeKind::Breadcrumb, {0, 0, 0}, 0, 0});
  g.upsert({"mid", NodeKind::Breadcrumb, {30, 0, 0}, 0, 0});
  g.upsert({"far", NodeKind::Breadcrumb, {60, 0, 0}, 0, 0});
  g.upsert({"cp:mid", NodeKind::CommsCheckpoint, {30, 0, 0}, 25, 0});
  g.upsert({"cp:far", NodeKind::CommsCheckpoint, {60, 0, 0}, 21, 0});
  g.connect("base", "mid", 30);
  g.connect("mid", "far", 30);
  g.connect("mid", "cp:mid", 0);
  g.connect("far", "cp:far", 0);
  const ReturnToCommsConfig cfg;
  const double tick = 0.1;

  // Ramp of 1,300 bytes per tick from zero.
  RobotCommsState s;
  int crossing = -1, triggered = -1;
  for (int k = 0; k < 400 && triggered < 0; ++k) {
    const std::size_t bytes = static_cast<std::size_t>(k) * 1300;
    if (crossing < 0 && bytes > cfg.upper_bytes) crossing = k;
    s = return_to_comms_step(s, bytes, g, "far", "base", cfg, k * tick).state;
    if (s.mode == CommsMode::ReturningToComms) triggered = k;
  }
  const bool trigger_ok = triggered >= 0 && triggered == crossing && s.target == "cp:far";

  // Decay: stays returning until strictly below the lower threshold.
  int restored = -1, lower_crossing = -1;
  for (int k = 0; k < 400 && restored < 0; ++k) {
    const std::size_t bytes = 390'000 - static_cast<std::size_t>(k) * 1300;
    if (lower_crossing < 0 && bytes < cfg.lower_bytes) lower_crossing = k;
    s = return_to_comms_step(s, bytes, g, "mid", "base", cfg, 40.0 + k * tick, true).state;
    if (s.mode == CommsMode::Exploring) restored = k;
  }
  const bool restore_ok = restored >= 0 && restored == lower_crossing;

  // Held 250 KB at the checkpoint.
  RobotCommsState w;
  w = return_to_comms_step(w, 310'000, g, "far", "base", cfg, 100.0).state;
  w = return_to_comms_step(w, 250'000, g, "far", "base", cfg, 100.1).state;
  const double arrived = w.wait_since.value_or(-1);
  double escalated = -1;
  for (int k = 1; k < 1000 && escalated < 0; ++k) {
    const double now = 100.1 + k * tick;
    w = return_to_comms_step(w, 250'000, g, "far", "base", cfg, now).state;
    if (w.mode == CommsMode::EscalatingCloser) escalated = now;
  }
  const double waited = escalated - arrived;
  const bool escalate_ok = escalated > 0 && std::abs(waited - cfg.wait_timeout) <= tick + 1e-9 &&
                           w.target == "cp:mid";
  report(7, "return-to-comms thresholds", trigger_ok && restore_ok && escalate_ok,
         "trigger tick " + std::to_string(triggered) + " (crossing " + std::to_string(crossing) +
             "), restore tick " + std::to_string(restored) + " (crossing " +
             std::to_string(lower_crossing) + ")" +
             fmt(", escalated after %.1f s to ", waited) + w.target.value_or("-"));
}

// ---------------------------------------------------------------- 8

void classification() {
  const std::vector<std::pair<double, CheckpointStrength>> cases{
      {0.0, CheckpointStrength::None},
      {std::numeric_limits<double>::denorm_min(), CheckpointStrength::Weak},
      {19.99, CheckpointStrength::Weak},
      {20.0, CheckpointStrength::Strong},
      {100.0, CheckpointStrength::Strong}};
  std::string got;
  bool ok = true;
  for (const auto& [snr, want] : cases) {
    const auto c = classify_checkpoint(snr);
    ok &= c == want;
    got += std::string(got.empty() ? "" : ",") + to_string(c);
  }
  report(8, "checkpoint classification", ok, got);
}

// ---------------------------------------------------------------- 9

void connectivity_map() {
  const PathLossModel model;
  const double noise = -90.0;
  std::vector<RadioSpec> radios(3);
  radios[0] = {"base", {2.0, 3.0, 0.0}, 30.0, -90.0, 20e6};
  radios[1] = {"r1", {11.5, 7.25, 0.0}, 20.0, -90.0, 20e6};
  radios[2] = {"r2", {17.0, 15.0, 1.0}, 24.0, -90.0, 20e6};
  const std::map<std::string, double> bottleneck{{"base", kUnboundedSnr}, {"r1", 35.0}, {"r2", 18.5}};
  GridSpec spec;
  spec.origin_x = -2.0;
  spec.origin_y = -1.0;
  spec.resolution = 1.25;
  spec.width = 20;
  spec.height = 20;
  const auto grid = build_connectivity_map(radios, bottleneck, spec, noise, model);

  std::size_t mismatches = 0;
  for (std::size_t row = 0; row < 20; ++row)
    for (std::size_t col = 0; col < 20; ++col) {
      const double x = -2.0 + (static_cast<double>(col) + 0.5) * 1.25;
      const double y = -1.0 + (static_cast<double>(row) + 0.5) * 1.25;
      double best = 0.0;
      for (const auto& r : radios) {
        const double dx = x - r.position.x, dy = y - r.position.y, dz = 0.0 - r.position.z;
        const double d = std::max(std::sqrt(dx * dx + dy * dy + dz * dz), 1.0);
        const double snr = r.tx_power - (34.0 + 10.0 * 3.83 * std::log10(d / 1.0)) - noise;
        best = std::max(best, std::min(bottleneck.at(r.id), snr));
      }
      if (grid.cells.size() != 400 || grid.at(col, row) != best) ++mismatches;
    }
  report(9, "connectivity map oracle", mismatches == 0,
         std::to_string(400 - mismatches) + "/400 cells exact");
}

// ---------------------------------------------------------------- 10, 11

void determinism(const Scenario& s) {
  const auto a = run(s);
  const auto b = run(s);
  const bool metrics_same = a.metrics.to_json().dump() == b.metrics.to_json().dump();
  const std::string ea = events_to_jsonl(a.events), eb = events_to_jsonl(b.events);
  report(10, "determinism", metrics_same && ea == eb,
         std::to_string(ea.size()) + " event bytes, metrics " + (metrics_same ? "identical" : "differ"));
}

// Farthest graph distance from the base at which a robot still has a direct
// link to the base radio, scanning every edge at 5 cm steps.
double single_hop_range(const Scenario& s) {
  const auto& robot = s.robots.front().radio;
  const auto dist = s.irm_seed_graph.graph_distances(s.base_node);
  const auto direct = [&](const Vec3& p) {
    const double d = std::max(distance(p, s.base_radio.position), s.model.d0);
    const double pl = path_loss(d, s.model);
    return std::min(s.base_radio.tx_power - pl - robot.noise_level,
                    robot.tx_power - pl - s.base_radio.noise_level) > 0.0;
  };
  double best = 0.0;
  for (const auto& [key, len] : s.irm_seed_graph.edges()) {
    const auto& pa = s.irm_seed_graph.node(key.first).position;
    const auto& pb = s.irm_seed_graph.node(key.second).position;
    const double da = dist.count(key.first) ? dist.at(key.first) : INFINITY;
    const double db = dist.count(key.second) ? dist.at(key.second) : INFINITY;
    const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.05)));
    for (int i = 0; i <= steps; ++i) {
      const double f = static_cast<double>(i) / steps;
      const Vec3 p{pa.x + f * (pb.x - pa.x), pa.y + f * (pb.y - pa.y), pa.z + f * (pb.z - pa.z) + robot.position.z};
      const double g = std::min(da + f * len, db + (1 - f) * len);
      if (std::isfinite(g) && direct(p)) best = std::max(best, g);
    }
  }
  return best;
}

void smoke(const Scenario& s) {
  const auto t0 = Clock::now();
  const auto out = run(s);
  const double dt = seconds_since(t0);
  const double base_only = single_hop_range(s);
  const auto& m = out.metrics;
  report(11, "end-to-end smoke",
         dt < 60.0 && m.deployed_radios >= 1 && m.effective_comm_range > base_only,
         fmt("%.2f s wall, %.0f radios, range %.1f m vs base-only %.1f m", dt,
             static_cast<double>(m.deployed_radios), m.effective_comm_range, base_only));
}

}  // namespace

int main() {
  routing_oracle();
  fit_round_trip();
  shannon_spot();
  transport_reliability();
  token_conformance();
  stratification();
  return_to_comms();
  classification();
  connectivity_map();
  const Scenario reference = parse_scenario(load_scenario("corridor_smoke.json"));
  determinism(reference);
  smoke(reference);
  std::printf("%s: %d failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
