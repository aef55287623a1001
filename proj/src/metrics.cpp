#include "achord/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <ostream>

#include "achord/errors.hpp"

namespace achord {

using nlohmann::json;

json MetricsReport::to_json() const {
  json up = json::object();
  for (const auto& [robot, s] : up_time) up[robot] = s;
  json peaks = json::object();
  for (const auto& [robot, b] : peak_buffer) peaks[robot] = b;
  return json{{"duration_s", duration},
              {"max_delay_s", max_delay},
              {"effective_comm_range_m", effective_comm_range},
              {"up_time_s", max_up_time},
              {"up_time_percent", max_up_time_percent},
              {"up_time_per_robot_s", up},
              {"peak_rate_to_base_bps", peak_rate_to_base},
              {"peak_rate_from_base_bps", peak_rate_from_base},
              {"deployed_radios", deployed_radios},
              {"peak_buffer_bytes", peaks}};
}

namespace {

double peak_window_rate(const std::vector<double>& bytes_per_tick, std::size_t window, double tick) {
  if (bytes_per_tick.empty()) return 0.0;
  double sum = 0.0;
  double best = 0.0;
  for (std::size_t i = 0; i < bytes_per_tick.size(); ++i) {
    sum += bytes_per_tick[i];
    if (i >= window) sum -= bytes_per_tick[i - window];
    best = std::max(best, sum);
  }
  return best * 8.0 / (static_cast<double>(window) * tick);
}

}  // namespace

MetricsReport compute_metrics(const std::vector<json>& log, const Scenario& scenario) {
  if (log.empty() || log.front().value("type", "") != "start")
    throw TruncatedLogError("event log does not begin with a start record");
  if (log.back().value("type", "") != "end")
    throw TruncatedLogError("event log does not end with an end record");

  MetricsReport out;
  out.duration = log.front().value("duration", scenario.duration);
  const double tick = log.front().value("tick", scenario.tick);

  struct RobotTrack {
    std::size_t last_acked = 0;
    std::size_t stall_ticks = 0;
    std::size_t worst_stall = 0;
    double up = 0.0;
    std::size_t peak = 0;
  };
  std::map<std::string, RobotTrack> robots;
  for (const auto& id : log.front().value("robots", std::vector<std::string>{})) robots[id];

  std::vector<double> to_base;
  std::vector<double> from_base;

  for (const auto& ev : log) {
    const std::string type = ev.value("type", "");
    if (type == "sample") {
      const std::string robot = ev.at("robot").get<std::string>();
      RobotTrack& r = robots[robot];
      const auto buffer = ev.at("buffer").get<std::size_t>();
      const auto acked = ev.at("acked").get<std::size_t>();
      const bool connected = ev.at("connected").get<bool>();
      const double t = ev.at("t").get<double>();

      // A stall is a run of ticks with data waiting and no ACK progress.
      if (buffer > 0 && acked == r.last_acked) {
        ++r.stall_ticks;
        r.worst_stall = std::max(r.worst_stall, r.stall_ticks);
      } else {
        r.stall_ticks = 0;
      }
      r.last_acked = acked;
      r.peak = std::max(r.peak, buffer);
      if (connected) {
        out.effective_comm_range = std::max(out.effective_comm_range, ev.at("dist").get<double>());
        if (buffer < scenario.return_to_comms.lower_bytes) r.up += tick;
      }
      if (ev.contains("topics")) {
        for (const auto& [topic, bytes] : ev["topics"].items())
          out.buffer_series.push_back(
              {t, robot, static_cast<TopicId>(std::stoul(topic)), bytes.get<std::size_t>()});
      }
    } else if (type == "throughput") {
      to_base.push_back(ev.value("to_base", 0.0));
      from_base.push_back(ev.value("from_base", 0.0));
    } else if (type == "drop") {
      ++out.deployed_radios;
    }
  }

  for (const auto& [id, r] : robots) {
    out.max_delay = std::max(out.max_delay, static_cast<double>(r.worst_stall) * tick);
    out.up_time[id] = r.up;
    out.max_up_time = std::max(out.max_up_time, r.up);
    out.peak_buffer[id] = r.peak;
  }
  if (out.duration > 0.0) out.max_up_time_percent = 100.0 * out.max_up_time / out.duration;

  const double span = std::min(kRateWindow, out.duration);
  const auto window = static_cast<std::size_t>(std::max<long long>(1, std::llround(span / tick)));
  out.peak_rate_to_base = peak_window_rate(to_base, window, tick);
  out.peak_rate_from_base = peak_window_rate(from_base, window, tick);
  return out;
}

void write_buffer_csv(const MetricsReport& report, std::ostream& out) {
  out << "t,robot,topic,queued_bytes\n";
  char buf[32];
  for (const auto& s : report.buffer_series) {
    std::snprintf(buf, sizeof buf, "%.3f", s.t);
    out << buf << ',' << s.robot << ',' << s.topic << ',' << s.queued_bytes << '\n';
  }
}

}  // namespace achord
