#pragma once

// Probabilistic air-to-ground channel: free-space loss with LoS/NLoS excess,
// elevation-dependent LoS probability, expected loss, SINR and Shannon rate.
// Everything here is a pure function of its arguments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>

#include "uavnet/error.hpp"
#include "uavnet/geometry.hpp"

namespace uavnet {

/// Logistic LoS-probability curve P(psi) = 1 / (1 + a exp(-b (psi - a))),
/// psi in degrees.
struct SCurve {
  double a = 9.61;
  double b = 0.16;

  friend bool operator==(const SCurve&, const SCurve&) = default;
};

struct ChannelParams {
  static constexpr double kSpeedOfLight = 3e8;

  double carrier_hz = 2e9;
  double excess_los_db = 1.0;
  double excess_nlos_db = 20.0;
  SCurve g2a;  // UGV -> UAV backhaul
  SCurve a2g;  // UAV -> user access
  double bandwidth_hz = 1e6;  // per UAV, split evenly among its users
  double uav_power_w = 1.0;
  double ugv_power_w = 1.0;
  double noise_w = 1e-12;

  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;

  void validate() const {
    require_config(carrier_hz > 0.0, "channel: carrier frequency must be positive");
    require_config(excess_nlos_db >= excess_los_db,
                   "channel: NLoS excess loss must be >= LoS excess loss");
    require_config(g2a.a >= 0.0 && g2a.b > 0.0, "channel: invalid G2A S-curve");
    require_config(a2g.a >= 0.0 && a2g.b > 0.0, "channel: invalid A2G S-curve");
    require_config(bandwidth_hz > 0.0, "channel: bandwidth must be positive");
    require_config(uav_power_w > 0.0 && ugv_power_w > 0.0 && noise_w > 0.0,
                   "channel: powers and noise must be positive");
  }
};

enum class Propagation { kLos, kNlos };

/// G2A is the UGV -> UAV backhaul, A2G the UAV -> user access link.
enum class LinkKind { kGroundToAir, kAirToGround };

struct LinkBudget {
  double distance_m = 0.0;
  double elevation_deg = 0.0;
  double p_los = 0.0;
  double loss_db = 0.0;
  double gain_linear = 0.0;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

/// Free-space loss at distance_m plus the LoS or NLoS excess, in dB.
inline double path_loss_component(const ChannelParams& params, double distance_m,
                                  Propagation kind) {
  require(distance_m > 0.0, "path loss: distance must be positive");
  double excess = kind == Propagation::kLos ? params.excess_los_db : params.excess_nlos_db;
  return 20.0 * std::log10(4.0 * std::numbers::pi * params.carrier_hz * distance_m /
                           ChannelParams::kSpeedOfLight) +
         excess;
}

/// Elevation of `air` as seen from `ground`, in degrees within (0, 90].
inline double elevation_angle(Vec3 ground, Vec3 air) {
  double d = distance(ground, air);
  require(d > 0.0, "elevation angle: coincident points");
  double rise = air.z - ground.z;
  require(rise > 0.0, "elevation angle: aerial endpoint must be above the ground endpoint");
  return 180.0 / std::numbers::pi * std::asin(std::min(1.0, rise / d));
}

inline double p_los(SCurve curve, double elevation_deg) {
  return 1.0 / (1.0 + curve.a * std::exp(-curve.b * (elevation_deg - curve.a)));
}

/// LoS-probability-weighted path loss of a link. `tx` and `rx` follow the
/// link direction: for G2A the transmitter is on the ground, for A2G in the air.
inline LinkBudget expected_path_loss(const ChannelParams& params, LinkKind kind, Vec3 tx,
                                     Vec3 rx) {
  Vec3 ground = kind == LinkKind::kGroundToAir ? tx : rx;
  Vec3 air = kind == LinkKind::kGroundToAir ? rx : tx;
  const SCurve& curve = kind == LinkKind::kGroundToAir ? params.g2a : params.a2g;

  LinkBudget out;
  out.distance_m = distance(ground, air);
  out.elevation_deg = elevation_angle(ground, air);
  out.p_los = p_los(curve, out.elevation_deg);
  double los = path_loss_component(params, out.distance_m, Propagation::kLos);
  double nlos = path_loss_component(params, out.distance_m, Propagation::kNlos);
  out.loss_db = los * out.p_los + nlos * (1.0 - out.p_los);
  out.gain_linear = db_to_linear(-out.loss_db);
  return out;
}

/// Downlink SINR at `user` from UAV `serving`; every other UAV interferes
/// with its own transmit power.
inline double sinr_user(const ChannelParams& params, std::span<const Vec3> uavs,
                        std::span<const double> powers_w, std::size_t serving, Vec3 user) {
  require(serving < uavs.size(), "sinr_user: serving UAV index out of range");
  require(powers_w.size() == uavs.size(), "sinr_user: one transmit power per UAV required");
  double signal = 0.0;
  double interference = 0.0;
  for (std::size_t u = 0; u < uavs.size(); ++u) {
    double received =
        powers_w[u] * expected_path_loss(params, LinkKind::kAirToGround, uavs[u], user).gain_linear;
    if (u == serving) {
      signal = received;
    } else {
      interference += received;
    }
  }
  return signal / (interference + params.noise_w);
}

/// Interference-free backhaul SNR of the UGV -> UAV link, gated by the
/// association variable.
inline double sinr_backhaul(const ChannelParams& params, Vec3 ugv, Vec3 uav, bool associated) {
  if (!associated) return 0.0;
  double gain = expected_path_loss(params, LinkKind::kGroundToAir, ugv, uav).gain_linear;
  return params.ugv_power_w * gain / params.noise_w;
}

/// Shannon rate in bit/s over `bandwidth_hz`, gated by the association variable.
inline double rate(double bandwidth_hz, bool associated, double sinr) {
  if (!associated) return 0.0;
  return bandwidth_hz * std::log2(1.0 + sinr);
}

}  // namespace uavnet
