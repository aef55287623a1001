// achord: run scenarios, fit path-loss models, render connectivity maps.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "achord/errors.hpp"
#include "achord/irm.hpp"
#include "achord/mesh.hpp"
#include "achord/metrics.hpp"
#include "achord/propagation.hpp"
#include "achord/scenario.hpp"
#include "achord/sim.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_file(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw achord::ValidationError({path + ": " + e.what()});
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

// Widest bottleneck from the first radio over predicted radio-to-radio links.
std::map<std::string, double> backbone_bottlenecks(const std::vector<achord::RadioSpec>& radios,
                                                   const achord::PathLossModel& model) {
  std::map<std::string, double> out;
  if (radios.empty()) return out;
  achord::MeshTopology mesh;
  for (const auto& r : radios) mesh.add_node(r.id);
  for (std::size_t i = 0; i < radios.size(); ++i)
    for (std::size_t j = i + 1; j < radios.size(); ++j) {
      const double d = std::max(achord::distance(radios[i].position, radios[j].position), model.d0);
      const double pl = achord::path_loss(d, model);
      const double snr = std::min(radios[i].tx_power - pl - radios[j].noise_level,
                                  radios[j].tx_power - pl - radios[i].noise_level);
      if (snr > 0.0) mesh.set_link(radios[i].id, radios[j].id, snr, 0.0);
    }
  const auto widths = mesh.widest_bottlenecks_from(radios.front().id);
  for (const auto& r : radios) {
    auto it = widths.find(r.id);
    out[r.id] = it == widths.end() ? 0.0 : it->second;
  }
  out[radios.front().id] = achord::kUnboundedSnr;
  return out;
}

achord::GridSpec grid_around(const std::vector<achord::Vec3>& points, double res, double extent,
                             double z) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  achord::GridSpec g;
  g.origin_x = x0 - extent;
  g.origin_y = y0 - extent;
  g.z = z;
  g.resolution = res;
  g.width = static_cast<std::size_t>(std::max(1.0, std::ceil((x1 - x0 + 2 * extent) / res)));
  g.height = static_cast<std::size_t>(std::max(1.0, std::ceil((y1 - y0 + 2 * extent) / res)));
  return g;
}

void write_map(const achord::ConnectivityGrid& grid, const fs::path& dir) {
  auto csv = open_out(dir / "connectivity.csv");
  achord::write_grid_csv(grid, csv);
  auto svg = open_out(dir / "connectivity.svg");
  achord::write_grid_svg(grid, svg);
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed, bool svg) {
  const json doc = parse_json_file(scenario_path);
  achord::Scenario s = achord::parse_scenario(doc);
  if (seed) s.seed = *seed;
  const fs::path dir(out_dir);
  ensure_dir(dir);

  const auto result = achord::run(s);

  auto metrics = open_out(dir / "metrics.json");
  metrics << result.metrics.to_json().dump(2) << '\n';
  auto events = open_out(dir / "events.jsonl");
  events << achord::events_to_jsonl(result.events);
  auto buffers = open_out(dir / "buffers.csv");
  achord::write_buffer_csv(result.metrics, buffers);
  auto topology = open_out(dir / "topology.jsonl");
  topology << result.topology_jsonl;
  auto irm = open_out(dir / "irm.json");
  achord::write_irm_json(result.base_irm, irm);

  if (svg) {
    std::vector<achord::Vec3> points;
    for (const auto& [id, n] : s.irm_seed_graph.nodes()) points.push_back(n.position);
    const auto grid = achord::build_connectivity_map(
        result.backbone, backbone_bottlenecks(result.backbone, s.model),
        grid_around(points, 1.0, 10.0, s.base_radio.position.z), s.drop_radio.noise_level,
        s.model);
    write_map(grid, dir);
  }
  std::cout << result.metrics.to_json().dump() << '\n';
  return 0;
}

int cmd_fit(const std::string& csv_path, double d0) {
  std::istringstream in(read_file(csv_path));
  const auto samples = achord::read_snr_samples(in);
  const auto model = achord::fit_path_loss(samples, d0);
  const json out{{"d0", model.d0},
                 {"pl_d0", model.pl_d0},
                 {"eta", model.eta},
                 {"residual_rms", achord::fit_residual_rms(samples, model)}};
  std::cout << out.dump() << '\n';
  return 0;
}

int cmd_map(const std::string& radios_path, double res, double extent, double rx_noise,
            const achord::PathLossModel& model, const std::string& out_dir) {
  const json doc = parse_json_file(radios_path);
  if (!doc.is_array()) throw achord::ValidationError({"radios: expected a JSON array"});
  if (doc.empty()) throw achord::ValidationError({"radios: list is empty"});
  if (!(res > 0.0)) throw achord::ValidationError({"res: must be positive"});
  if (!(extent >= 0.0)) throw achord::ValidationError({"extent: must be non-negative"});
  model.validate();

  std::vector<achord::RadioSpec> radios;
  std::map<std::string, double> bottlenecks;
  std::vector<achord::Vec3> points;
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& r = doc[i];
    const std::string where = "radios[" + std::to_string(i) + "]";
    try {
      achord::RadioSpec spec;
      spec.id = r.value("id", where);
      spec.position = {r.at("x").get<double>(), r.at("y").get<double>(), r.value("z", 0.0)};
      spec.tx_power = r.value("tx_power_dbm", spec.tx_power);
      spec.noise_level = r.value("noise_db", spec.noise_level);
      spec.bandwidth = r.value("bandwidth_hz", spec.bandwidth);
      bottlenecks[spec.id] = r.value("bottleneck_db", achord::kUnboundedSnr);
      points.push_back(spec.position);
      radios.push_back(spec);
    } catch (const json::exception& e) {
      errors.push_back(where + ": " + e.what());
    }
  }
  if (!errors.empty()) throw achord::ValidationError(errors);

  const auto grid = achord::build_connectivity_map(
      radios, bottlenecks, grid_around(points, res, extent, 0.0), rx_noise, model);
  const fs::path dir(out_dir);
  ensure_dir(dir);
  write_map(grid, dir);
  std::cout << json{{"width", grid.spec.width}, {"height", grid.spec.height}}.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACHORD multi-robot communication stack"};
  app.require_subcommand(1);

  std::string scenario, out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool svg = false;
  auto* run = app.add_subcommand("run", "Run a scenario and write metrics, events and series");
  run->add_option("--scenario", scenario, "Scenario JSON")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_flag("--svg", svg, "Also render the final backbone connectivity map");

  std::string csv;
  double d0 = 1.0;
  auto* fit = app.add_subcommand("fit", "Fit a log-distance path-loss model to samples");
  fit->add_option("--csv", csv, "CSV with distance_m,path_loss_db")->required();
  fit->add_option("--d0", d0, "Reference distance in metres");

  std::string radios, map_out = ".";
  double res = 1.0, extent = 50.0, tx_noise = -90.0;
  achord::PathLossModel model;
  auto* map = app.add_subcommand("map", "Render a connectivity map for a set of radios");
  map->add_option("--radios", radios, "Radio list JSON")->required();
  map->add_option("--res", res, "Cell size in metres");
  map->add_option("--extent", extent, "Margin around the radios in metres");
  map->add_option("--tx-noise", tx_noise, "Receiver noise level in dB");
  map->add_option("--eta", model.eta, "Path-loss exponent");
  map->add_option("--pl0", model.pl_d0, "Path loss at the reference distance in dB");
  map->add_option("--d0", model.d0, "Reference distance in metres");
  map->add_option("--out", map_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return cmd_run(scenario, out_dir, seed, svg);
    if (*fit) return cmd_fit(csv, d0);
    return cmd_map(radios, res, extent, tx_noise, model, map_out);
  } catch (const achord::ValidationError& e) {
    std::cerr << "error: validation failed\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << '\n';
    return kExitValidation;
  } catch (const achord::DegenerateFitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
