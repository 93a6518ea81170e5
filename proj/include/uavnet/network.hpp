#pragma once

// Associations, per-user and sum rates, and the C1..C11 constraint checker
// of the sum-rate problem.

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "uavnet/channel.hpp"
#include "uavnet/error.hpp"
#include "uavnet/geometry.hpp"
#include "uavnet/scenario.hpp"

namespace uavnet {

/// Dense row-major matrix of association variables. Entries are int so that
/// corrupted (non-binary) matrices stay representable for the checker.
class AssocMatrix {
 public:
  AssocMatrix() = default;
  AssocMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  int& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  int operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const int> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const int> data() const { return data_; }

  friend bool operator==(const AssocMatrix&, const AssocMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<int> data_;
};

struct AssociationState {
  AssocMatrix alpha;  // K x U, user k served by UAV u
  AssocMatrix x;      // M x U, UGV m backhauls UAV u

  friend bool operator==(const AssociationState&, const AssociationState&) = default;

  /// UAV serving user k, or npos.
  std::size_t serving_uav(std::size_t k) const {
    for (std::size_t u = 0; u < alpha.cols(); ++u) {
      if (alpha(k, u) != 0) return u;
    }
    return npos;
  }

  /// UGV backhauling UAV u, or npos.
  std::size_t backhaul_ugv(std::size_t u) const {
    for (std::size_t m = 0; m < x.rows(); ++m) {
      if (x(m, u) != 0) return m;
    }
    return npos;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Positions of everything in one slot. Users and UGVs sit at z = 0.
struct NetworkGeometry {
  std::span<const Vec3> uavs;
  std::span<const Vec3> ugvs;
  std::span<const Vec3> users;
};

/// Backhaul SNR matrix (M x U) with every pair hypothetically associated.
inline std::vector<double> backhaul_snr_table(const NetworkGeometry& geo,
                                              const ChannelParams& params) {
  std::vector<double> snr(geo.ugvs.size() * geo.uavs.size());
  for (std::size_t m = 0; m < geo.ugvs.size(); ++m) {
    for (std::size_t u = 0; u < geo.uavs.size(); ++u) {
      snr[m * geo.uavs.size() + u] = sinr_backhaul(params, geo.ugvs[m], geo.uavs[u], true);
    }
  }
  return snr;
}

/// Greedy association. UGV-UAV pairs are formed in descending backhaul SNR
/// order; each user then joins the highest-SINR UAV whose backhaul SNR
/// clears the threshold. Ties go to the lowest index.
inline AssociationState associate(const NetworkGeometry& geo, const ChannelParams& params,
                                  const QoSParams& qos) {
  const std::size_t num_uav = geo.uavs.size();
  const std::size_t num_ugv = geo.ugvs.size();
  const std::size_t num_users = geo.users.size();
  AssociationState out{AssocMatrix(num_users, num_uav), AssocMatrix(num_ugv, num_uav)};

  std::vector<double> snr = backhaul_snr_table(geo, params);
  std::vector<std::size_t> order(snr.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return snr[a] > snr[b]; });

  std::vector<bool> ugv_used(num_ugv, false);
  std::vector<double> uav_backhaul(num_uav, 0.0);
  std::vector<bool> uav_used(num_uav, false);
  for (std::size_t idx : order) {
    std::size_t m = idx / num_uav;
    std::size_t u = idx % num_uav;
    if (ugv_used[m] || uav_used[u]) continue;
    ugv_used[m] = uav_used[u] = true;
    out.x(m, u) = 1;
    uav_backhaul[u] = snr[idx];
  }

  std::vector<double> powers(num_uav, params.uav_power_w);
  for (std::size_t k = 0; k < num_users; ++k) {
    std::size_t best = AssociationState::npos;
    double best_sinr = -1.0;
    for (std::size_t u = 0; u < num_uav; ++u) {
      if (uav_backhaul[u] < qos.sinr_backhaul_min) continue;
      double s = sinr_user(params, geo.uavs, powers, u, geo.users[k]);
      if (s > best_sinr) {
        best_sinr = s;
        best = u;
      }
    }
    if (best != AssociationState::npos) out.alpha(k, best) = 1;
  }
  return out;
}

struct RateReport {
  std::vector<double> per_user_rate;   // bit/s
  std::vector<double> user_sinr;       // SINR to the serving UAV, 0 if unserved
  std::vector<std::size_t> served_count;
  std::vector<double> backhaul_sinr;   // per UAV, 0 without a UGV
  std::vector<bool> backhaul_paired;   // per UAV
  double sum_rate = 0.0;
};

/// Rates under the association: each UAV splits its bandwidth evenly over
/// the users it serves.
inline RateReport evaluate_rates(const NetworkGeometry& geo, const AssociationState& assoc,
                                 const ChannelParams& params) {
  const std::size_t num_uav = geo.uavs.size();
  const std::size_t num_users = geo.users.size();
  require(assoc.alpha.rows() == num_users && assoc.alpha.cols() == num_uav &&
              assoc.x.rows() == geo.ugvs.size() && assoc.x.cols() == num_uav,
          "evaluate_rates: association dimensions do not match geometry");

  RateReport report;
  report.per_user_rate.assign(num_users, 0.0);
  report.user_sinr.assign(num_users, 0.0);
  report.served_count.assign(num_uav, 0);
  report.backhaul_sinr.assign(num_uav, 0.0);
  report.backhaul_paired.assign(num_uav, false);

  for (std::size_t u = 0; u < num_uav; ++u) {
    std::size_t m = assoc.backhaul_ugv(u);
    if (m == AssociationState::npos) continue;
    report.backhaul_paired[u] = true;
    report.backhaul_sinr[u] = sinr_backhaul(params, geo.ugvs[m], geo.uavs[u], true);
  }
  for (std::size_t k = 0; k < num_users; ++k) {
    std::size_t u = assoc.serving_uav(k);
    if (u != AssociationState::npos) ++report.served_count[u];
  }

  std::vector<double> powers(num_uav, params.uav_power_w);
  for (std::size_t k = 0; k < num_users; ++k) {
    std::size_t u = assoc.serving_uav(k);
    if (u == AssociationState::npos) continue;
    double s = sinr_user(params, geo.uavs, powers, u, geo.users[k]);
    double share = params.bandwidth_hz / static_cast<double>(report.served_count[u]);
    report.user_sinr[k] = s;
    report.per_user_rate[k] = rate(share, true, s);
    report.sum_rate += report.per_user_rate[k];
  }
  return report;
}

// ---------------------------------------------------------------------------
// Constraint checking

/// C1..C11 in order; index = constraint number - 1.
enum class Constraint : std::size_t {
  kBackhaulSinr = 0,   // C1, violation in linear SNR units
  kUserRate,           // C2, bit/s
  kUavSpeed,           // C3, m/s
  kUavReturn,          // C4, m (terminal slot only)
  kUavSeparation,      // C5, m
  kUgvSpeed,           // C6, m/s
  kUgvOnGraph,         // C7, m
  kUgvReturn,          // C8, m (terminal slot only)
  kUserSingleUav,      // C9, excess association count
  kUgvSingleUav,       // C10, excess association count
  kBinary,             // C11, number of non-binary entries
};

inline constexpr std::size_t kNumConstraints = 11;

inline std::string constraint_name(std::size_t i) { return "c" + std::to_string(i + 1); }

struct ConstraintStatus {
  bool satisfied = true;
  double violation = 0.0;
};

/// Tolerances below which a violation counts as numerical noise.
struct ConstraintTolerance {
  double speed = 1e-9;     // m/s
  double distance = 1e-6;  // m
};

struct ConstraintReport {
  std::array<ConstraintStatus, kNumConstraints> status{};

  const ConstraintStatus& operator[](Constraint c) const {
    return status[static_cast<std::size_t>(c)];
  }

  /// Record the worst violation seen; values within `tol` are treated as 0.
  void record(Constraint c, double violation, double tol = 0.0) {
    auto& s = status[static_cast<std::size_t>(c)];
    if (!(violation > tol)) return;  // satisfied
    s.violation = std::max(s.violation, violation);
    s.satisfied = false;
  }

  bool all_satisfied() const {
    return std::all_of(status.begin(), status.end(), [](const auto& s) { return s.satisfied; });
  }
};

/// Checks one slot. `prev_*` are the previous slot's positions (empty at
/// slot 0, which skips the speed checks). Return-to-start checks run only
/// when `uav_start`/`ugv_start` are given.
struct SlotCheckInput {
  NetworkGeometry geometry;
  const AssociationState* assoc = nullptr;
  std::span<const Vec3> prev_uavs;
  std::span<const Vec3> prev_ugvs;
  std::span<const Vec3> uav_start;
  std::span<const Vec3> ugv_start;
};

inline ConstraintReport check_slot(const SlotCheckInput& in, const ChannelParams& params,
                                   const QoSParams& qos, const FleetParams& fleet,
                                   const RoadGraph& graph, ConstraintTolerance tol = {}) {
  ConstraintReport report;
  const auto& geo = in.geometry;
  const auto& assoc = *in.assoc;
  const std::size_t num_uav = geo.uavs.size();

  // C9..C11 structure
  for (std::size_t k = 0; k < assoc.alpha.rows(); ++k) {
    auto row = assoc.alpha.row(k);
    double total = std::accumulate(row.begin(), row.end(), 0.0);
    report.record(Constraint::kUserSingleUav, total - 1.0);
  }
  for (std::size_t m = 0; m < assoc.x.rows(); ++m) {
    auto row = assoc.x.row(m);
    double total = std::accumulate(row.begin(), row.end(), 0.0);
    report.record(Constraint::kUgvSingleUav, total - 1.0);
  }
  double non_binary = 0.0;
  for (int v : assoc.alpha.data()) non_binary += (v != 0 && v != 1) ? 1.0 : 0.0;
  for (int v : assoc.x.data()) non_binary += (v != 0 && v != 1) ? 1.0 : 0.0;
  report.record(Constraint::kBinary, non_binary);

  // C1: every UAV that serves users or holds a backhaul pairing.
  for (std::size_t u = 0; u < num_uav; ++u) {
    bool serves = false;
    for (std::size_t k = 0; k < assoc.alpha.rows(); ++k) serves = serves || assoc.alpha(k, u) != 0;
    double snr = 0.0;
    bool paired = false;
    for (std::size_t m = 0; m < assoc.x.rows(); ++m) {
      if (assoc.x(m, u) != 0) {
        paired = true;
        snr = std::max(snr, sinr_backhaul(params, geo.ugvs[m], geo.uavs[u], true));
      }
    }
    if (serves || paired) report.record(Constraint::kBackhaulSinr, qos.sinr_backhaul_min - snr);
  }

  // C2 on achieved per-user rate (after the bandwidth split).
  bool structurally_valid = report[Constraint::kUserSingleUav].satisfied &&
                            report[Constraint::kUgvSingleUav].satisfied &&
                            report[Constraint::kBinary].satisfied;
  if (structurally_valid) {
    RateReport rates = evaluate_rates(geo, assoc, params);
    for (double r : rates.per_user_rate) report.record(Constraint::kUserRate, qos.r_min_bps - r);
  } else {
    report.record(Constraint::kUserRate, qos.r_min_bps);
  }

  // C3 / C6 via finite differences.
  if (!in.prev_uavs.empty()) {
    for (std::size_t u = 0; u < num_uav; ++u) {
      double v = distance(geo.uavs[u], in.prev_uavs[u]) / fleet.slot_s;
      report.record(Constraint::kUavSpeed, v - fleet.v_max_uav, tol.speed);
    }
  }
  if (!in.prev_ugvs.empty()) {
    for (std::size_t m = 0; m < geo.ugvs.size(); ++m) {
      double v = distance(geo.ugvs[m], in.prev_ugvs[m]) / fleet.slot_s;
      report.record(Constraint::kUgvSpeed, v - fleet.v_max_ugv, tol.speed);
    }
  }

  // C4 / C8 terminal return.
  if (!in.uav_start.empty()) {
    for (std::size_t u = 0; u < num_uav; ++u) {
      report.record(Constraint::kUavReturn, distance(geo.uavs[u], in.uav_start[u]), tol.distance);
    }
  }
  if (!in.ugv_start.empty()) {
    for (std::size_t m = 0; m < geo.ugvs.size(); ++m) {
      report.record(Constraint::kUgvReturn, distance(geo.ugvs[m], in.ugv_start[m]), tol.distance);
    }
  }

  // C5 pairwise separation.
  for (std::size_t a = 0; a < num_uav; ++a) {
    for (std::size_t b = a + 1; b < num_uav; ++b) {
      report.record(Constraint::kUavSeparation, qos.d_safe_m - distance(geo.uavs[a], geo.uavs[b]),
                    tol.distance);
    }
  }

  // C7 distance to the road graph (UGVs must also be on the ground).
  for (const Vec3& p : geo.ugvs) {
    double off = project_to_graph(graph, planar(p)).distance + std::abs(p.z);
    report.record(Constraint::kUgvOnGraph, off, tol.distance);
  }
  return report;
}

/// Full trajectory record for slots 0..N.
struct EpisodeHistory {
  std::vector<std::vector<Vec3>> uavs;
  std::vector<std::vector<Vec3>> ugvs;
  std::vector<AssociationState> associations;
  std::vector<Vec3> users;
};

struct EpisodeConstraintReport {
  std::vector<ConstraintReport> per_slot;
  ConstraintReport summary;  // worst violation over all slots
};

inline EpisodeConstraintReport check_constraints(const EpisodeHistory& history,
                                                 const ChannelParams& params,
                                                 const QoSParams& qos, const FleetParams& fleet,
                                                 const RoadGraph& graph,
                                                 ConstraintTolerance tol = {}) {
  const std::size_t slots = history.uavs.size();
  require(slots >= 1 && history.ugvs.size() == slots && history.associations.size() == slots,
          "check_constraints: mismatched history lengths");
  require(slots == fleet.num_slots + 1, "check_constraints: history must cover slots 0..N");
  for (std::size_t n = 0; n < slots; ++n) {
    require(history.uavs[n].size() == history.uavs[0].size() &&
                history.ugvs[n].size() == history.ugvs[0].size(),
            "check_constraints: entity count changes within the history");
    const auto& a = history.associations[n];
    require(a.alpha.rows() == history.users.size() && a.alpha.cols() == history.uavs[n].size() &&
                a.x.rows() == history.ugvs[n].size() && a.x.cols() == history.uavs[n].size(),
            "check_constraints: association dimensions do not match the history");
  }

  EpisodeConstraintReport out;
  for (std::size_t n = 0; n < slots; ++n) {
    SlotCheckInput in;
    in.geometry = {history.uavs[n], history.ugvs[n], history.users};
    in.assoc = &history.associations[n];
    if (n > 0) {
      in.prev_uavs = history.uavs[n - 1];
      in.prev_ugvs = history.ugvs[n - 1];
    }
    if (n + 1 == slots) {
      in.uav_start = history.uavs[0];
      in.ugv_start = history.ugvs[0];
    }
    ConstraintReport r = check_slot(in, params, qos, fleet, graph, tol);
    for (std::size_t c = 0; c < kNumConstraints; ++c) {
      out.summary.record(static_cast<Constraint>(c), r.status[c].violation);
    }
    out.per_slot.push_back(r);
  }
  return out;
}

}  // namespace uavnet
