#pragma once

// First-order radio propagation: log-distance path loss, SNR prediction,
// Shannon capacity, regression of the path-loss model from measurements and
// rasterised connectivity maps.

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "achord/geometry.hpp"

namespace achord {

// Bottleneck SNR of a node that is the data sink itself (the base station).
inline constexpr double kUnboundedSnr = std::numeric_limits<double>::infinity();

// Checkpoints at or above this SNR count as strong comms.
inline constexpr double kStrongSnrThreshold = 20.0;

struct PathLossModel {
  double d0 = 1.0;       // reference distance, m
  double pl_d0 = 34.0;   // path loss at d0, dB
  double eta = 3.83;     // path loss exponent

  // Throws DomainError unless d0 > 0, eta > 0, pl_d0 >= 0.
  void validate() const;

  friend bool operator==(const PathLossModel&, const PathLossModel&) = default;
};

struct RadioSpec {
  std::string id;
  Vec3 position;
  double tx_power = 30.0;     // dBm
  double noise_level = -90.0; // sigma_dB, signed, subtracted verbatim
  double bandwidth = 20e6;    // Hz
};

struct SnrSample {
  double distance = 0.0;            // m
  double observed_path_loss = 0.0;  // dB
};

struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double z = 0.0;  // height of the evaluation plane
  double resolution = 1.0;
  std::size_t width = 0;
  std::size_t height = 0;

  Vec3 cell_center(std::size_t col, std::size_t row) const {
    return {origin_x + (static_cast<double>(col) + 0.5) * resolution,
            origin_y + (static_cast<double>(row) + 0.5) * resolution, z};
  }
};

struct ConnectivityGrid {
  GridSpec spec;
  std::vector<double> cells;  // row-major, row = y index

  double at(std::size_t col, std::size_t row) const { return cells.at(row * spec.width + col); }
};

// PL(d) = PL(d0) + 10 eta log10(d / d0). Throws DomainError for d <= 0.
double path_loss(double d, const PathLossModel& model);

// Tx - PL(d) - sigma. May be negative. Throws DomainError on coincident positions.
double predict_snr(const RadioSpec& tx, const Vec3& rx_position, double rx_noise,
                   const PathLossModel& model);

// B log2(1 + 10^(snr/10)) in bit/s.
double shannon_capacity(double bandwidth, double snr_db);

// Ordinary least squares of observed loss against 10 log10(d / d0).
PathLossModel fit_path_loss(std::span<const SnrSample> samples, double d0);

double fit_residual_rms(std::span<const SnrSample> samples, const PathLossModel& model);

// Max over backbone radios of min(bottleneck[radio], predicted SNR at `position`),
// clamped at zero. Inside the reference distance the prediction is held at its
// value at d0, so a radio's own position is well defined.
double coverage_snr(std::span<const RadioSpec> backbone,
                    const std::map<std::string, double>& bottlenecks, const Vec3& position,
                    double rx_noise, const PathLossModel& model);

ConnectivityGrid build_connectivity_map(std::span<const RadioSpec> backbone,
                                        const std::map<std::string, double>& bottlenecks,
                                        const GridSpec& grid, double rx_noise,
                                        const PathLossModel& model);

// CSV with header `distance_m,path_loss_db`. Throws ValidationError on bad rows.
std::vector<SnrSample> read_snr_samples(std::istream& in);

// Row-major raster, one grid row per line, two decimals.
void write_grid_csv(const ConnectivityGrid& grid, std::ostream& out);

// Heatmap with a legend that marks the strong-comms threshold.
void write_grid_svg(const ConnectivityGrid& grid, std::ostream& out);

}  // namespace achord
