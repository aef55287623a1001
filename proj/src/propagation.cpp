#include "achord/propagation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "achord/errors.hpp"

namespace achord {

void PathLossModel::validate() const {
  if (!(d0 > 0.0)) throw DomainError("path loss model: d0 must be > 0");
  if (!(eta > 0.0)) throw DomainError("path loss model: eta must be > 0");
  if (!(pl_d0 >= 0.0)) throw DomainError("path loss model: pl_d0 must be >= 0");
}

double path_loss(double d, const PathLossModel& model) {
  if (!(d > 0.0)) throw DomainError("path_loss: distance must be > 0");
  return model.pl_d0 + 10.0 * model.eta * std::log10(d / model.d0);
}

double predict_snr(const RadioSpec& tx, const Vec3& rx_position, double rx_noise,
                   const PathLossModel& model) {
  const double d = distance(tx.position, rx_position);
  if (!(d > 0.0)) throw DomainError("predict_snr: transmitter and receiver are coincident");
  return tx.tx_power - path_loss(d, model) - rx_noise;
}

double shannon_capacity(double bandwidth, double snr_db) {
  if (!(bandwidth > 0.0)) throw DomainError("shannon_capacity: bandwidth must be > 0");
  const double linear = std::pow(10.0, snr_db / 10.0);
  return bandwidth * std::log2(1.0 + linear);
}

PathLossModel fit_path_loss(std::span<const SnrSample> samples, double d0) {
  if (!(d0 > 0.0)) throw DomainError("fit_path_loss: d0 must be > 0");
  std::vector<double> xs;
  xs.reserve(samples.size());
  for (const auto& s : samples) {
    if (!(s.distance > 0.0)) throw DomainError("fit_path_loss: sample distance must be > 0");
    xs.push_back(10.0 * std::log10(s.distance / d0));
  }
  const auto distinct = [&] {
    for (const auto& s : samples)
      if (s.distance != samples.front().distance) return true;
    return false;
  };
  if (samples.size() < 2 || !distinct())
    throw DegenerateFitError("fit_path_loss: need at least two distinct distances");

  const double n = static_cast<double>(samples.size());
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    mean_x += xs[i];
    mean_y += samples[i].observed_path_loss;
  }
  mean_x /= n;
  mean_y /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double dx = xs[i] - mean_x;
    sxx += dx * dx;
    sxy += dx * (samples[i].observed_path_loss - mean_y);
  }
  PathLossModel out;
  out.d0 = d0;
  out.eta = sxy / sxx;
  out.pl_d0 = mean_y - out.eta * mean_x;
  return out;
}

double fit_residual_rms(std::span<const SnrSample> samples, const PathLossModel& model) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples) {
    const double r = s.observed_path_loss - path_loss(s.distance, model);
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

double coverage_snr(std::span<const RadioSpec> backbone,
                    const std::map<std::string, double>& bottlenecks, const Vec3& position,
                    double rx_noise, const PathLossModel& model) {
  double best = 0.0;
  for (const auto& radio : backbone) {
    const auto it = bottlenecks.find(radio.id);
    if (it == bottlenecks.end())
      throw DomainError("coverage_snr: no backbone bottleneck for radio " + radio.id);
    const double d = std::max(distance(radio.position, position), model.d0);
    const double predicted = radio.tx_power - path_loss(d, model) - rx_noise;
    best = std::max(best, std::min(it->second, predicted));
  }
  return best;
}

ConnectivityGrid build_connectivity_map(std::span<const RadioSpec> backbone,
                                        const std::map<std::string, double>& bottlenecks,
                                        const GridSpec& grid, double rx_noise,
                                        const PathLossModel& model) {
  if (backbone.empty()) throw DomainError("build_connectivity_map: backbone is empty");
  if (!(grid.resolution > 0.0)) throw DomainError("build_connectivity_map: resolution must be > 0");
  model.validate();
  ConnectivityGrid out{grid, std::vector<double>(grid.width * grid.height, 0.0)};
  for (std::size_t row = 0; row < grid.height; ++row)
    for (std::size_t col = 0; col < grid.width; ++col)
      out.cells[row * grid.width + col] =
          coverage_snr(backbone, bottlenecks, grid.cell_center(col, row), rx_noise, model);
  return out;
}

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(t, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == t.size();
}

}  // namespace

std::vector<SnrSample> read_snr_samples(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError({"samples csv: empty input"});
  if (trim(line) != "distance_m,path_loss_db")
    throw ValidationError({"samples csv: expected header 'distance_m,path_loss_db'"});

  std::vector<SnrSample> samples;
  std::vector<std::string> errors;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    SnrSample s;
    if (comma == std::string::npos || !parse_double(line.substr(0, comma), s.distance) ||
        !parse_double(line.substr(comma + 1), s.observed_path_loss)) {
      errors.push_back("samples csv line " + std::to_string(lineno) + ": expected two numbers");
      continue;
    }
    if (!(s.distance > 0.0)) {
      errors.push_back("samples csv line " + std::to_string(lineno) + ": distance must be > 0");
      continue;
    }
    samples.push_back(s);
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return samples;
}

void write_grid_csv(const ConnectivityGrid& grid, std::ostream& out) {
  char buf[32];
  for (std::size_t row = 0; row < grid.spec.height; ++row) {
    for (std::size_t col = 0; col < grid.spec.width; ++col) {
      std::snprintf(buf, sizeof buf, "%.2f", grid.at(col, row));
      if (col) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

namespace {

// Dark (no comms) to bright (strong) ramp.
std::string heat_color(double v, double vmax) {
  const double t = vmax > 0.0 ? std::clamp(v / vmax, 0.0, 1.0) : 0.0;
  const int r = static_cast<int>(std::lround(68 + t * (253 - 68)));
  const int g = static_cast<int>(std::lround(1 + t * (231 - 1)));
  const int b = static_cast<int>(std::lround(84 + t * (37 - 84)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void write_grid_svg(const ConnectivityGrid& grid, std::ostream& out) {
  constexpr int kCell = 8;
  constexpr int kLegendWidth = 140;
  const auto w = static_cast<int>(grid.spec.width) * kCell;
  const auto h = static_cast<int>(grid.spec.height) * kCell;
  double vmax = kStrongSnrThreshold * 2.0;
  for (double v : grid.cells) vmax = std::max(vmax, v);

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w + kLegendWidth
      << "\" height=\"" << std::max(h, 220) << "\">\n";
  // Row 0 is the southern edge; flip so north is up.
  for (std::size_t row = 0; row < grid.spec.height; ++row) {
    for (std::size_t col = 0; col < grid.spec.width; ++col) {
      const int x = static_cast<int>(col) * kCell;
      const int y = h - static_cast<int>(row + 1) * kCell;
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\""
          << kCell << "\" fill=\"" << heat_color(grid.at(col, row), vmax) << "\"/>\n";
    }
  }

  constexpr int kBarHeight = 200;
  const int bx = w + 20;
  for (int i = 0; i < kBarHeight; ++i) {
    const double v = vmax * (1.0 - static_cast<double>(i) / kBarHeight);
    out << "<rect x=\"" << bx << "\" y=\"" << i + 10 << "\" width=\"20\" height=\"1\" fill=\""
        << heat_color(v, vmax) << "\"/>\n";
  }
  const int ty = 10 + static_cast<int>(std::lround(kBarHeight * (1.0 - kStrongSnrThreshold / vmax)));
  char label[64];
  std::snprintf(label, sizeof label, "%.0f dB", vmax);
  out << "<text x=\"" << bx + 26 << "\" y=\"18\" font-size=\"10\">" << label << "</text>\n";
  out << "<line x1=\"" << bx - 4 << "\" y1=\"" << ty << "\" x2=\"" << bx + 24 << "\" y2=\"" << ty
      << "\" stroke=\"#00a000\" stroke-width=\"2\"/>\n";
  out << "<text x=\"" << bx + 26 << "\" y=\"" << ty + 4
      << "\" font-size=\"10\" fill=\"#00a000\">strong &#8805; 20 dB</text>\n";
  out << "<text x=\"" << bx + 26 << "\" y=\"" << kBarHeight + 10
      << "\" font-size=\"10\">0 dB</text>\n";
  out << "</svg>\n";
}

}  // namespace achord
