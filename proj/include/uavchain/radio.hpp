#pragma once

// Link budget, Shannon capacity and the four-part message latency model.
//
// noise_power_w is the total in-band noise power in watts. It divides the
// received power directly; it is not a spectral density to be scaled by B.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace uavchain::radio {

inline constexpr double kSpeedOfLight = 2.998e8;      // m/s, sets the carrier wavelength
inline constexpr double kPropagationSpeed = 3.0e8;    // m/s, the rounded value used for propagation delay
inline constexpr double kMinDistance = 1.0;           // co-located UAVs are clamped to this

struct LinkBudgetParams {
  double tx_power_w = 1.0;
  double tx_gain_dbi = 6.0;
  double rx_gain_dbi = 6.0;
  double carrier_hz = 915e6;
  double noise_power_w = 1e-13;
  double bandwidth_hz = 10e6;

  bool valid() const noexcept {
    return tx_power_w > 0 && carrier_hz > 0 && noise_power_w > 0 && bandwidth_hz > 0 && std::isfinite(tx_gain_dbi) &&
           std::isfinite(rx_gain_dbi);
  }
  double wavelength_m() const noexcept { return kSpeedOfLight / carrier_hz; }
};

struct NodeServiceProfile {
  double proc_latency_s = 0.010;
  double service_rate_msgs_per_s = 1000.0;
};

struct LatencyBreakdown {
  double proc_s = 0.0;
  double queue_s = 0.0;
  double trans_s = 0.0;
  double prop_s = 0.0;
  double total_s = 0.0;
};

class RadioError : public std::runtime_error {
 public:
  enum class Kind { ZeroDistance, ZeroCapacity };
  RadioError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline double dbi_to_linear(double gain_dbi) { return std::pow(10.0, gain_dbi / 10.0); }

/// Free-space received SNR at `distance_m`. Throws ZeroDistance for d <= 0.
inline double snr(const LinkBudgetParams& p, double distance_m) {
  if (!(distance_m > 0.0)) {
    throw RadioError(RadioError::Kind::ZeroDistance, "snr: distance must be positive");
  }
  const double lambda = p.wavelength_m();
  const double spread = 4.0 * std::numbers::pi * distance_m;
  return p.tx_power_w * dbi_to_linear(p.tx_gain_dbi) * dbi_to_linear(p.rx_gain_dbi) * lambda * lambda /
         (spread * spread * p.noise_power_w);
}

inline double capacity(double bandwidth_hz, double snr_ratio) { return bandwidth_hz * std::log2(1.0 + snr_ratio); }

inline double clamp_distance(double distance_m) noexcept { return distance_m < kMinDistance ? kMinDistance : distance_m; }

/// Latency of one message over one link. `queue_len_msgs` feeds the analytic
/// queue term (length over service rate); pass 0 when the caller measures
/// queueing itself.
inline LatencyBreakdown latency_components(double msg_bits, double distance_m, double queue_len_msgs,
                                           const LinkBudgetParams& params, const NodeServiceProfile& service) {
  const double c = capacity(params.bandwidth_hz, snr(params, distance_m));
  if (!(c > 0.0)) {
    throw RadioError(RadioError::Kind::ZeroCapacity, "latency_components: link capacity is zero");
  }
  LatencyBreakdown out;
  out.proc_s = service.proc_latency_s;
  out.queue_s = queue_len_msgs / service.service_rate_msgs_per_s;
  out.trans_s = msg_bits / c;
  out.prop_s = distance_m / kPropagationSpeed;
  out.total_s = out.proc_s + out.queue_s + out.trans_s + out.prop_s;
  return out;
}

/// Per-component latencies of the cluster latency table. The printed totals
/// of that table are not the sums of its rows; only the rows are used.
struct LatencyPreset {
  double proc_s;
  double queue_s;
  double trans_s;
  double prop_s;

  double total_s() const noexcept { return proc_s + queue_s + trans_s + prop_s; }
};

inline constexpr LatencyPreset kIntraClusterPreset{0.010, 0.001, 0.010, 0.0003};
inline constexpr LatencyPreset kInterClusterPreset{0.010, 0.001, 0.010, 0.0006};

/// Number of radio hops needed to cover `distance_m` when a single link reaches
/// at most `range_m`; range 0 means unlimited.
inline std::uint32_t hop_count(double distance_m, double range_m) noexcept {
  if (range_m <= 0.0 || distance_m <= range_m) return 1;
  return static_cast<std::uint32_t>(std::ceil(distance_m / range_m));
}

/// Latency of a path of equal-length relay hops spanning `distance_m`. Every hop
/// pays processing, transmission and propagation; only the last hop pays the
/// receiver's queue term. With one hop this is exactly latency_components.
inline LatencyBreakdown relayed_latency(double msg_bits, double distance_m, double range_m, double queue_len_msgs,
                                        const LinkBudgetParams& params, const NodeServiceProfile& service) {
  const auto hops = hop_count(distance_m, range_m);
  if (hops == 1) return latency_components(msg_bits, distance_m, queue_len_msgs, params, service);
  const double hop_len = distance_m / hops;
  const auto first = latency_components(msg_bits, hop_len, 0.0, params, service);
  LatencyBreakdown out;
  out.proc_s = first.proc_s * hops;
  out.queue_s = queue_len_msgs / service.service_rate_msgs_per_s;
  out.trans_s = first.trans_s * hops;
  out.prop_s = distance_m / kPropagationSpeed;
  out.total_s = out.proc_s + out.queue_s + out.trans_s + out.prop_s;
  return out;
}

}  // namespace uavchain::radio
