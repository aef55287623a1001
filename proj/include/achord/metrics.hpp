#pragma once

// Mission metrics derived from the simulator event log.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "achord/scenario.hpp"
#include "json.hpp"

namespace achord {

struct BufferSample {
  double t = 0.0;
  std::string robot;
  TopicId topic = 0;
  std::size_t queued_bytes = 0;
};

struct MetricsReport {
  double duration = 0.0;
  double max_delay = 0.0;              // s
  double effective_comm_range = 0.0;   // m, graph distance from base
  std::map<std::string, double> up_time;  // s per robot
  double max_up_time = 0.0;            // s
  double max_up_time_percent = 0.0;    // of duration
  double peak_rate_to_base = 0.0;      // bit/s
  double peak_rate_from_base = 0.0;    // bit/s
  std::size_t deployed_radios = 0;
  std::map<std::string, std::size_t> peak_buffer;  // bytes per robot
  std::vector<BufferSample> buffer_series;

  nlohmann::json to_json() const;
};

inline constexpr double kRateWindow = 10.0;  // s, sliding window for peak rates

// Throws TruncatedLogError when the log lacks its start or end record.
MetricsReport compute_metrics(const std::vector<nlohmann::json>& event_log, const Scenario& scenario);

// `t,robot,topic,queued_bytes`
void write_buffer_csv(const MetricsReport& report, std::ostream& out);

}  // namespace achord
