#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bezbot/avoidance.hpp"
#include "bezbot/config.hpp"
#include "bezbot/control.hpp"
#include "bezbot/dataset.hpp"
#include "bezbot/dynamics.hpp"
#include "bezbot/encoding.hpp"
#include "bezbot/plant.hpp"
#include "bezbot/svg.hpp"

namespace bezbot {

namespace fs = std::filesystem;

inline uint64_t fnv64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash missing file: " + path);
  uint64_t h = 1469598103934665603ull;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------- collect

struct CollectStats {
  int requested = 0;
  int written = 0;
  int skipped = 0;
  bool degraded = false;  // more than 5% of samples lost to encoding errors
};

// Seeded bounded random walk in u. Each sample commands a new u, holds it
// for one sample interval (the model horizon by default; input constancy
// over the interval is what the transition model assumes), and records
// (x, u, x+) for the shape and tip states through the full measurement
// pipeline.
inline CollectStats collect(const SystemConfig& sys, int samples, uint64_t seed,
                            const std::string& outdir) {
  fs::create_directories(outdir);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> step(-1.0, 1.0);

  const double dt =
      sys.collect_interval > 0.0 ? sys.collect_interval : sys.shape_spec.horizon;
  auto state = make_state(sys.plant, Eigen::VectorXd::Zero(sys.plant.actuators()));
  const double bound = sys.collect_u_bound;

  Dataset shape_ds, pos_ds;
  CollectStats stats;
  stats.requested = samples;

  std::optional<Eigen::VectorXd> xs_prev;
  Eigen::Vector3d xp_prev = measure_tip(state, sys.tip_noise_std, rng);

  for (int k = 0; k < samples; ++k) {
    // draw the next held command, reflecting at the exploration bounds
    Eigen::VectorXd target = state.u_cmd;
    for (int i = 0; i < target.size(); ++i) {
      target[i] += step(rng) * sys.plant.u_dot_max * dt;
      if (target[i] > bound) target[i] = 2.0 * bound - target[i];
      if (target[i] < -bound) target[i] = -2.0 * bound - target[i];
    }
    const Eigen::VectorXd u_dot = (target - state.u_cmd) / dt;

    try {
      if (!xs_prev) {
        const auto r1 = render(state, sys.view1);
        const auto r2 = render(state, sys.view2);
        xs_prev = encode_views(r1.image, r2.image, sys.enc);
      }
      const auto next = bezbot::step(sys.plant, state, u_dot, dt);
      const auto n1 = render(next, sys.view1);
      const auto n2 = render(next, sys.view2);
      const Eigen::VectorXd xs_next = encode_views(n1.image, n2.image, sys.enc);
      const Eigen::Vector3d xp_next = measure_tip(next, sys.tip_noise_std, rng);

      shape_ds.samples.push_back({*xs_prev, next.u_cmd, xs_next});
      pos_ds.samples.push_back({xp_prev, next.u_cmd, xp_next});
      ++stats.written;

      xs_prev = xs_next;
      xp_prev = xp_next;
      state = next;
    } catch (const Error&) {
      ++stats.skipped;
      state = bezbot::step(sys.plant, state, u_dot, dt);
      xs_prev.reset();
      xp_prev = measure_tip(state, sys.tip_noise_std, rng);
    }
  }
  stats.degraded = stats.skipped * 20 > stats.requested;  // > 5%

  const int sd = shape_state_dim(sys.plant.segments);
  write_dataset(shape_ds, (fs::path(outdir) / "shape.csv").string(), "xs", sd,
                sys.plant.actuators());
  write_dataset(pos_ds, (fs::path(outdir) / "position.csv").string(), "xp", 3,
                sys.plant.actuators());

  nlohmann::json meta;
  meta["requested"] = stats.requested;
  meta["written"] = stats.written;
  meta["skipped"] = stats.skipped;
  meta["degraded"] = stats.degraded;
  meta["seed"] = seed;
  std::ofstream mo((fs::path(outdir) / "collect_meta.json").string());
  mo << meta.dump(1) << "\n";
  return stats;
}

// ------------------------------------------------------------- references

struct ReferenceSet {
  std::string kind;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> xs;
  std::vector<Eigen::VectorXd> xp;
  Eigen::VectorXd u_start;

  bool sampled() const { return t.size() > 1; }

  // nearest sample at or before time `when`, clamped to the last row
  std::size_t index_at(double when, double dt) const {
    if (!sampled()) return 0;
    const auto k = static_cast<std::size_t>(std::llround(when / dt));
    return std::min(k, t.size() - 1);
  }
};

namespace detail {

inline void write_rows(const std::string& path, const std::string& header,
                       const std::vector<double>& t,
                       const std::vector<Eigen::VectorXd>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << header << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << csv::fmt(t[i]);
    for (int j = 0; j < rows[i].size(); ++j) out << "," << csv::fmt(rows[i][j]);
    out << "\n";
  }
}

inline std::pair<std::vector<double>, std::vector<Eigen::VectorXd>> read_rows(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> t;
  std::vector<Eigen::VectorXd> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = csv::split_line(line);
    t.push_back(std::stod(cells[0]));
    Eigen::VectorXd v(cells.size() - 1);
    for (std::size_t i = 1; i < cells.size(); ++i) v[i - 1] = std::stod(cells[i]);
    rows.push_back(std::move(v));
  }
  return {t, rows};
}

inline std::string xs_header(int dim) {
  std::string h = "t";
  for (int i = 0; i < dim; ++i) h += ",xs_" + std::to_string(i);
  return h;
}

// Tip target curves for the two tracking tasks, theta in [0, 2pi]. The
// double-frequency axis gets the smaller amplitude so both tasks peak at
// comparable actuation rates.
inline Eigen::Vector3d lissajous_point(const std::string& kind, double theta, double ax,
                                       double bz, double y0) {
  if (kind == "infinity") return {bz * std::sin(2.0 * theta), y0, ax * std::sin(theta)};
  return {ax * std::sin(theta), y0, bz * std::sin(2.0 * theta)};  // "eight"
}

// d(tip)/du of the lag-free static plant map, central differences.
inline Eigen::MatrixXd plant_tip_jacobian(const PlantParams& p, const Eigen::VectorXd& u,
                                          double du = 1e-5) {
  Eigen::MatrixXd jac(3, u.size());
  for (int j = 0; j < u.size(); ++j) {
    Eigen::VectorXd up = u, dn = u;
    up[j] += du;
    dn[j] -= du;
    jac.col(j) = (make_state(p, up).tip - make_state(p, dn).tip) / (2.0 * du);
  }
  return jac;
}

inline Eigen::VectorXd encode_state(const SystemConfig& sys, const PlantState& state,
                                    std::pair<BezierChain, BezierChain>* chains = nullptr) {
  const auto r1 = render(state, sys.view1);
  const auto r2 = render(state, sys.view2);
  return encode_views(r1.image, r2.image, sys.enc, chains);
}

}  // namespace detail

// Build reference files for one task. Kinds: regulate, infinity, eight,
// self-motion, obstacle-regulate. Trajectory references are generated by
// driving the actual plant (resolved-rate IK on the true tip sensitivity)
// and recording the encoded shapes, so every reference is feasible.
inline void make_reference(const SystemConfig& sys, const std::string& kind, uint64_t seed,
                           const std::string& outdir) {
  fs::create_directories(outdir);
  const int m = sys.plant.actuators();
  const int sd = shape_state_dim(sys.plant.segments);
  nlohmann::json meta;
  meta["kind"] = kind;
  meta["seed"] = seed;

  auto write_constant_refs = [&](const PlantState& target_state) {
    const Eigen::VectorXd xs = detail::encode_state(sys, target_state);
    detail::write_rows((fs::path(outdir) / "shape_ref.csv").string(), detail::xs_header(sd),
                       {0.0}, {xs});
    detail::write_rows((fs::path(outdir) / "tip_ref.csv").string(), "t,x,y,z", {0.0},
                       {Eigen::VectorXd(target_state.tip)});
  };

  if (kind == "regulate" || kind == "obstacle-regulate") {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> du(-0.7, 0.7);
    Eigen::VectorXd u_target(m);
    for (int i = 0; i < m; ++i) u_target[i] = du(rng);
    Eigen::VectorXd u_start = Eigen::VectorXd::Zero(m);
    if (kind == "obstacle-regulate") {
      // a dominant one-plane swing from an opposite pre-bend sweeps a wide
      // arc in view 1, leaving room to stage an obstacle that is breached
      // en route yet clear of both end configurations
      std::uniform_real_distribution<double> mag(0.55, 0.75), xtra(-0.15, 0.15);
      const double sign = du(rng) < 0.0 ? -1.0 : 1.0;
      for (int i = 0; i < m; i += 2) {
        u_target[i] = sign * mag(rng);
        u_start[i] = -sign * 0.3;
      }
      for (int i = 1; i < m; i += 2) u_target[i] = xtra(rng);
    }
    const auto target_state = make_state(sys.plant, u_target);
    write_constant_refs(target_state);
    meta["u_target"] = std::vector<double>(u_target.data(), u_target.data() + m);
    meta["u_start"] = std::vector<double>(u_start.data(), u_start.data() + m);

    if (kind == "obstacle-regulate") {
      // place the obstacle on a mid-path body point: guaranteed to breach
      // the warning distance en route, while the scan keeps the target
      // configuration clear so regulation can finish
      const auto clearance = [&](const PlantState& st, const Eigen::Vector3d& obs) {
        std::pair<BezierChain, BezierChain> ch;
        detail::encode_state(sys, st, &ch);
        const double d1 = view_distance(ch.first, sys.view1.project(obs), sys.avoid.n_d).d;
        const double d2 = view_distance(ch.second, sys.view2.project(obs), sys.avoid.n_d).d;
        return std::max(d1, d2);
      };
      // candidates sit on a mid-path body point, displaced out of the swing
      // plane. The view-1 projection is still crossed en route (breach
      // guaranteed), while the displacement keeps the crossing safe in
      // view 2, which is exactly where the escape controller has authority
      // the approach task does not contest. The target configuration must
      // stay clear so regulation can finish.
      const auto start_state = make_state(sys.plant, u_start);
      double z_sum = 0.0;
      for (const auto& p : target_state.backbone) z_sum += p.z();
      const double dz = (z_sum <= 0.0 ? 1.0 : -1.0) * 0.04;  // away from the target body
      Eigen::Vector3d best_obs = Eigen::Vector3d::Zero();
      double best_target_clear = -1.0;
      for (double f = 0.45; f <= 0.85; f += 0.05) {
        const auto mid = make_state(sys.plant, u_start + f * (u_target - u_start));
        for (double arc : {0.55, 0.65, 0.75, 0.85}) {
          const auto idx = static_cast<std::size_t>(arc * (mid.backbone.size() - 1));
          Eigen::Vector3d obs = mid.backbone[idx];
          obs.z() += dz;
          if (clearance(start_state, obs) < sys.avoid.d_w + 5.0) continue;
          const double tc = clearance(target_state, obs);
          if (tc > best_target_clear) {
            best_target_clear = tc;
            best_obs = obs;
          }
        }
      }
      if (best_target_clear < sys.avoid.d_w + 5.0)
        throw ConfigError("no obstacle placement leaves the target clear; reseed");
      detail::write_rows((fs::path(outdir) / "obstacle.csv").string(), "t,x,y,z", {0.0},
                         {Eigen::VectorXd(best_obs)});
      meta["obstacle"] = {best_obs.x(), best_obs.y(), best_obs.z()};
      meta["target_clearance_px"] = best_target_clear;
    }
  } else if (kind == "infinity" || kind == "eight") {
    const double ax = 0.027, bz = 0.019, y0 = -0.294;
    const int ticks = static_cast<int>(std::llround(sys.duration / sys.dt));
    ControllerGains ik;
    ik.lambda_p = 3.0;
    ik.lambda_damp = 1e-3;
    ik.u_dot_max = 0.4 * sys.plant.u_dot_max;  // leave the controller headroom

    auto state = make_state(sys.plant, Eigen::VectorXd::Zero(m));
    // warm-start ramp: from exactly straight the tip height is second-order
    // in the bend, the Jacobian's vertical row vanishes, and IK would stall
    Eigen::VectorXd u_warm = Eigen::VectorXd::Constant(m, 0.2);
    for (int k = 0; k < static_cast<int>(1.5 / sys.dt); ++k)
      state = step(sys.plant, state, (u_warm - state.u_cmd) / sys.dt, sys.dt);
    // pre-roll: settle on the curve start before recording
    const Eigen::Vector3d start = detail::lissajous_point(kind, 0.0, ax, bz, y0);
    for (int k = 0; k < static_cast<int>(12.0 / sys.dt); ++k) {
      JacobianEstimate jac;
      jac.matrix = detail::plant_tip_jacobian(sys.plant, state.u_cmd);
      jac.one_sided.assign(m, 0);
      const auto cmd = position_control_step(state.tip, Reference::hold(start), jac, ik);
      state = step(sys.plant, state, cmd, sys.dt);
      if ((state.tip - start).norm() < 2e-5 && k > 40) break;
    }
    if ((state.tip - start).norm() > 5e-4)
      throw ConfigError("reference pre-roll failed to reach the trajectory start");
    meta["u_start"] = std::vector<double>(state.u_cmd.data(), state.u_cmd.data() + m);

    std::vector<double> ts;
    std::vector<Eigen::VectorXd> xs_rows, xp_rows;
    Eigen::Vector3d prev_target = start;
    for (int k = 0; k <= ticks; ++k) {
      const double t = k * sys.dt;
      ts.push_back(t);
      xs_rows.push_back(detail::encode_state(sys, state));
      xp_rows.push_back(Eigen::VectorXd(state.tip));
      // drive toward the next sample with feedforward
      const double theta = 2.0 * M_PI * std::min(1.0, (k + 1.0) / ticks);
      const Eigen::Vector3d target = detail::lissajous_point(kind, theta, ax, bz, y0);
      JacobianEstimate jac;
      jac.matrix = detail::plant_tip_jacobian(sys.plant, state.u_cmd);
      jac.one_sided.assign(m, 0);
      Reference ref{target, (target - prev_target) / sys.dt};
      const auto cmd = position_control_step(state.tip, ref, jac, ik);
      state = step(sys.plant, state, cmd, sys.dt);
      prev_target = target;
    }
    // zero-phase moving average over the encoded rows: the raw encodings
    // carry pixel quantization noise that would otherwise be differentiated
    // into the tracking feedforward. The trajectory is closed, so the
    // window wraps around instead of clamping at the ends.
    std::vector<Eigen::VectorXd> xs_smooth(xs_rows.size());
    const int w = 4;
    const long n_rows = static_cast<long>(xs_rows.size());
    for (long i = 0; i < n_rows; ++i) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(sd);
      for (int k = -w; k <= w; ++k) {
        long j = (i + k) % n_rows;
        if (j < 0) j += n_rows;
        acc += xs_rows[j];
      }
      xs_smooth[i] = acc / (2 * w + 1);
    }
    detail::write_rows((fs::path(outdir) / "shape_ref.csv").string(), detail::xs_header(sd),
                       ts, xs_smooth);
    detail::write_rows((fs::path(outdir) / "tip_ref.csv").string(), "t,x,y,z", ts, xp_rows);
  } else if (kind == "self-motion") {
    const auto hold_state = make_state(sys.plant, Eigen::VectorXd::Zero(m));
    write_constant_refs(hold_state);
    meta["u_start"] = std::vector<double>(m, 0.0);
    // the obstacle sweeps across the body in view 1 at mid-height, offset
    // out of the bending plane so the crossing stays safe in view 2; the
    // escape controller keeps that view clear with small z-plane
    // deformations while the tip is held
    const int ticks = static_cast<int>(std::llround(sys.duration / sys.dt));
    std::vector<double> ts;
    std::vector<Eigen::VectorXd> obs_rows;
    for (int k = 0; k <= ticks; ++k) {
      const double t = k * sys.dt;
      const double frac = static_cast<double>(k) / ticks;
      Eigen::VectorXd obs(3);
      obs << 0.12 - 0.24 * frac, -0.15, 0.036;
      ts.push_back(t);
      obs_rows.push_back(obs);
    }
    detail::write_rows((fs::path(outdir) / "obstacle.csv").string(), "t,x,y,z", ts, obs_rows);
  } else {
    throw ConfigError("unknown reference kind: " + kind);
  }

  std::ofstream mo((fs::path(outdir) / "ref_meta.json").string());
  mo << meta.dump(1) << "\n";
}

inline ReferenceSet load_reference(const std::string& dir, const SystemConfig& sys) {
  ReferenceSet ref;
  auto [ts, xs] = detail::read_rows((fs::path(dir) / "shape_ref.csv").string());
  auto [tp, xp] = detail::read_rows((fs::path(dir) / "tip_ref.csv").string());
  if (ts.size() != tp.size() || ts.empty())
    throw IoError("reference files in " + dir + " are inconsistent or empty");
  ref.t = ts;
  ref.xs = std::move(xs);
  ref.xp = std::move(xp);

  std::ifstream mi((fs::path(dir) / "ref_meta.json").string());
  if (!mi) throw IoError("missing ref_meta.json in " + dir);
  nlohmann::json meta;
  mi >> meta;
  ref.kind = meta.value("kind", "regulate");
  const auto us = meta.value("u_start", std::vector<double>(sys.plant.actuators(), 0.0));
  ref.u_start = Eigen::Map<const Eigen::VectorXd>(us.data(), us.size());
  return ref;
}

// Obstacle trajectory: CSV waypoints, linear interpolation, clamped ends.
struct ObstacleTrack {
  std::vector<double> t;
  std::vector<Eigen::Vector3d> p;

  static ObstacleTrack load(const std::string& path) {
    auto [ts, rows] = detail::read_rows(path);
    if (ts.empty()) throw IoError("empty obstacle file: " + path);
    ObstacleTrack tr;
    tr.t = ts;
    for (const auto& r : rows) tr.p.emplace_back(r[0], r[1], r[2]);
    return tr;
  }

  Eigen::Vector3d at(double when) const {
    if (when <= t.front()) return p.front();
    if (when >= t.back()) return p.back();
    std::size_t i = 0;
    while (i + 1 < t.size() && t[i + 1] < when) ++i;
    const double span = t[i + 1] - t[i];
    const double a = span > 0.0 ? (when - t[i]) / span : 0.0;
    return p[i] + a * (p[i + 1] - p[i]);
  }
};

// ---------------------------------------------------------------- run_task

struct TaskConfig {
  std::string task;  // regulate | track | obstacle-regulate | self-motion
  std::string ref_dir;
  std::string shape_model_path;
  std::string position_model_path;
  std::string out_dir;
  std::string obstacle_file;  // optional; defaults to ref_dir/obstacle.csv when present
  double duration = 0.0;      // 0: take from SystemConfig
  uint64_t seed = 0;
};

struct RunRow {
  double t = 0.0;
  Eigen::VectorXd xs, xp, u, u_dot;
  double es_maxpt = 0.0, es_norm = 0.0, ep_norm = 0.0;
  double d1 = -1.0, d2 = -1.0;
  int active = 0, sel_view = 0, clamped = 0, one_sided = 0;
};

struct RunResult {
  std::vector<RunRow> rows;
  nlohmann::json summary;
};

namespace detail {

inline double max_point_error(const Eigen::VectorXd& xs, const Eigen::VectorXd& xs_ref,
                              int segments) {
  const int n = 2 * segments;
  double worst = 0.0;
  for (int view = 0; view < 2; ++view) {
    for (int k = 0; k < n; ++k) {
      const int xi = view * n + k;
      const int yi = 2 * n + view * n + k;
      const double ex = xs[xi] - xs_ref[xi];
      const double ey = xs[yi] - xs_ref[yi];
      worst = std::max(worst, std::hypot(ex, ey));
    }
  }
  return worst;
}

inline void write_runlog(const std::string& path, const std::vector<RunRow>& rows, int sd,
                         int m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "t";
  for (int i = 0; i < sd; ++i) out << ",xs_" << i;
  for (int i = 0; i < 3; ++i) out << ",xp_" << i;
  out << ",es_maxpt,es_norm,ep_norm";
  for (int i = 0; i < m; ++i) out << ",u_" << i;
  for (int i = 0; i < m; ++i) out << ",udot_" << i;
  out << ",d1,d2,avoid_active,sel_view,clamped,one_sided\n";
  for (const auto& r : rows) {
    out << csv::fmt(r.t);
    for (int i = 0; i < sd; ++i) out << "," << csv::fmt(r.xs[i]);
    for (int i = 0; i < 3; ++i) out << "," << csv::fmt(r.xp[i]);
    out << "," << csv::fmt(r.es_maxpt) << "," << csv::fmt(r.es_norm) << ","
        << csv::fmt(r.ep_norm);
    for (int i = 0; i < m; ++i) out << "," << csv::fmt(r.u[i]);
    for (int i = 0; i < m; ++i) out << "," << csv::fmt(r.u_dot[i]);
    out << "," << csv::fmt(r.d1) << "," << csv::fmt(r.d2) << "," << r.active << ","
        << r.sel_view << "," << r.clamped << "," << r.one_sided << "\n";
  }
}

inline nlohmann::json summarize(const std::vector<RunRow>& rows, const TaskConfig& task,
                                double dt) {
  nlohmann::json s;
  s["task"] = task.task;
  s["rows"] = rows.size();
  s["dt"] = dt;
  double max_es = 0.0, max_ep = 0.0, sum_es = 0.0, sum_ep = 0.0;
  int active_ticks = 0, clamp_ticks = 0, onesided_ticks = 0;
  long first_active = -1;
  double min_maxd_after = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    max_es = std::max(max_es, r.es_maxpt);
    max_ep = std::max(max_ep, r.ep_norm);
    sum_es += r.es_maxpt;
    sum_ep += r.ep_norm;
    active_ticks += r.active;
    clamp_ticks += r.clamped;
    onesided_ticks += r.one_sided > 0;
    if (r.active && first_active < 0) first_active = static_cast<long>(i);
    if (first_active >= 0 && static_cast<long>(i) >= first_active && r.d1 >= 0.0)
      min_maxd_after = std::min(min_maxd_after, std::max(r.d1, r.d2));
  }
  const double n = static_cast<double>(rows.size());
  s["final"] = {{"shape_maxpt_px", rows.back().es_maxpt},
                {"shape_norm_px", rows.back().es_norm},
                {"tip_err_m", rows.back().ep_norm}};
  s["max"] = {{"shape_maxpt_px", max_es}, {"tip_err_m", max_ep}};
  s["mean"] = {{"shape_maxpt_px", sum_es / n}, {"tip_err_m", sum_ep / n}};
  s["activation"] = {{"ticks_active", active_ticks},
                     {"first_active_tick", first_active},
                     {"min_max_d_after_activation",
                      std::isfinite(min_maxd_after) ? min_maxd_after : -1.0}};
  s["clamped_ticks"] = clamp_ticks;
  s["one_sided_ticks"] = onesided_ticks;
  // per-axis mean absolute tip error needs the reference; filled by caller
  return s;
}

}  // namespace detail

// Closed loop: render -> encode -> estimate Jacobians -> controller ->
// plant step, one row per tick plus a final row. Any module error aborts
// with the partial log flushed and the tick recorded in the exception.
inline RunResult run_task(const SystemConfig& sys, const TaskConfig& task) {
  fs::create_directories(task.out_dir);
  const int m = sys.plant.actuators();
  const int sd = shape_state_dim(sys.plant.segments);
  const double duration = task.duration > 0.0 ? task.duration : sys.duration;
  const int ticks = static_cast<int>(std::llround(duration / sys.dt));

  const auto shape_model = load_model(task.shape_model_path, sd);
  const auto position_model = load_model(task.position_model_path, 3);
  const auto ref = load_reference(task.ref_dir, sys);

  std::optional<ObstacleTrack> obstacle;
  std::string obstacle_path = task.obstacle_file;
  if (obstacle_path.empty()) {
    const auto candidate = fs::path(task.ref_dir) / "obstacle.csv";
    if (fs::exists(candidate)) obstacle_path = candidate.string();
  }
  if (!obstacle_path.empty()) obstacle = ObstacleTrack::load(obstacle_path);

  std::mt19937_64 rng(task.seed);
  auto state = make_state(sys.plant, ref.u_start);

  RunResult result;
  result.rows.reserve(ticks + 1);
  // held escape directions for the degenerate-contact fallback
  std::array<Point2, 2> held_escape{Point2(1.0, 0.0), Point2(1.0, 0.0)};

  auto flush = [&]() {
    detail::write_runlog((fs::path(task.out_dir) / "runlog.csv").string(), result.rows, sd, m);
  };

  int snapshot_at[3] = {0, ticks / 2, ticks};
  long tick = 0;
  try {
    for (tick = 0; tick <= ticks; ++tick) {
      const double t = tick * sys.dt;
      const auto r1 = render(state, sys.view1);
      const auto r2 = render(state, sys.view2);
      std::pair<BezierChain, BezierChain> chains;
      const Eigen::VectorXd xs = encode_views(r1.image, r2.image, sys.enc, &chains);
      const Eigen::Vector3d xp = measure_tip(state, sys.tip_noise_std, rng);

      for (int si = 0; si < 3; ++si) {
        if (tick == snapshot_at[si]) {
          write_pgm(r1.image, (fs::path(task.out_dir) / ("view1_tick" + std::to_string(tick) + ".pgm")).string());
          write_pgm(r2.image, (fs::path(task.out_dir) / ("view2_tick" + std::to_string(tick) + ".pgm")).string());
        }
      }

      const std::size_t ri = ref.index_at(t, sys.dt);
      Reference ref_s{ref.xs[ri], Eigen::VectorXd::Zero(sd)};
      Reference ref_p{ref.xp[ri], Eigen::VectorXd::Zero(3)};
      if (ref.sampled() && ri > 0) {
        // backward difference over a few ticks; the encoded shape reference
        // carries pixel quantization noise that a one-tick difference
        // would amplify into actuator-saturating rate spikes
        const std::size_t back = std::min<std::size_t>(ri, sys.ff_window);
        ref_s.x_d_rate = (ref.xs[ri] - ref.xs[ri - back]) / (back * sys.dt);
        ref_p.x_d_rate = (ref.xp[ri] - ref.xp[ri - back]) / (back * sys.dt);
      }

      RunRow row;
      row.t = t;
      row.xs = xs;
      row.xp = xp;
      row.u = state.u_cmd;
      row.es_maxpt = detail::max_point_error(xs, ref_s.x_d, sys.plant.segments);
      row.es_norm = (xs - ref_s.x_d).norm();
      row.ep_norm = (Eigen::Vector3d(xp) - Eigen::Vector3d(ref_p.x_d)).norm();

      if (tick == ticks) {  // final measurement row, no command
        row.u_dot = Eigen::VectorXd::Zero(m);
        if (obstacle) {
          const Eigen::Vector3d obs = obstacle->at(t);
          row.d1 = view_distance(chains.first, sys.view1.project(obs), sys.avoid.n_d).d;
          row.d2 = view_distance(chains.second, sys.view2.project(obs), sys.avoid.n_d).d;
          row.active = avoidance_active(row.d1, row.d2, sys.avoid.d_w);
        }
        result.rows.push_back(std::move(row));
        break;
      }

      const auto j_s = estimate_jacobian(shape_model, xs, state.u_cmd, sys.delta_u);
      const auto j_p = estimate_jacobian(position_model, xp, state.u_cmd, sys.delta_u);
      row.one_sided = 0;
      for (uint8_t f : j_s.one_sided) row.one_sided += f;

      const Eigen::VectorXd cmd_s = shape_command(xs, ref_s, j_s, sys.gains);
      const Eigen::VectorXd cmd_p = position_command(xp, ref_p, j_p, sys.gains);

      Eigen::VectorXd u_dot;
      if (obstacle) {
        const Eigen::Vector3d obs = obstacle->at(t);
        const Point2 obs1 = sys.view1.project(obs);
        const Point2 obs2 = sys.view2.project(obs);
        const auto vd1 = view_distance(chains.first, obs1, sys.avoid.n_d);
        const auto vd2 = view_distance(chains.second, obs2, sys.avoid.n_d);
        row.d1 = vd1.d;
        row.d2 = vd2.d;
        row.active = avoidance_active(vd1.d, vd2.d, sys.avoid.d_w);
        Eigen::VectorXd cmd_o = Eigen::VectorXd::Zero(m);
        if (row.active) {
          row.sel_view = selected_view(vd1.d, vd2.d);
          const auto& vd = row.sel_view == 1 ? vd1 : vd2;
          const auto& obs_px = row.sel_view == 1 ? obs1 : obs2;
          Point2 v_c;
          try {
            v_c = escape_velocity(vd.sample, obs_px);
            held_escape[row.sel_view - 1] = v_c;
          } catch (const DegenerateContact&) {
            v_c = held_escape[row.sel_view - 1];  // hold last direction on contact
          }
          cmd_o = escape_control_step(vd.d, sys.avoid, j_s, vd.sample, v_c, row.sel_view,
                                      sys.plant.segments);
        }
        u_dot = overall_step(vd1.d, vd2.d, sys.avoid.d_w, cmd_s, cmd_p, cmd_o,
                             sys.gains.u_dot_max);
      } else {
        u_dot = clamp_rate(cmd_s + cmd_p, sys.gains.u_dot_max);
      }
      row.clamped = ((cmd_s + cmd_p).cwiseAbs().maxCoeff() > sys.gains.u_dot_max) ? 1 : 0;
      row.u_dot = u_dot;
      result.rows.push_back(row);

      state = step(sys.plant, state, u_dot, sys.dt);
    }
  } catch (const Error& e) {
    flush();
    throw Error("tick " + std::to_string(tick) + ": " + e.what());
  }

  flush();

  // summary: runlog stats + per-axis tip errors against the reference
  nlohmann::json summary = detail::summarize(result.rows, task, sys.dt);
  Eigen::Vector3d axis_sum = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const std::size_t ri = ref.index_at(result.rows[i].t, sys.dt);
    axis_sum += (Eigen::Vector3d(result.rows[i].xp) - Eigen::Vector3d(ref.xp[ri])).cwiseAbs();
  }
  axis_sum /= static_cast<double>(result.rows.size());
  summary["mean_axis_abs_tip_err_m"] = {axis_sum.x(), axis_sum.y(), axis_sum.z()};
  summary["models"] = {
      {"shape", {{"path", task.shape_model_path},
                 {"fnv64", hex64(fnv64_file(task.shape_model_path))}}},
      {"position", {{"path", task.position_model_path},
                    {"fnv64", hex64(fnv64_file(task.position_model_path))}}}};
  summary["ref_dir"] = task.ref_dir;
  summary["seed"] = task.seed;
  summary["duration"] = duration;

  // plots
  SvgSeries es, ep;
  es.label = "max control-point error";
  es.color = "#d62728";
  ep.label = "tip error";
  ep.color = "#1f77b4";
  for (const auto& r : result.rows) {
    es.x.push_back(r.t);
    es.y.push_back(r.es_maxpt);
    ep.x.push_back(r.t);
    ep.y.push_back(r.ep_norm);
  }
  write_svg_chart((fs::path(task.out_dir) / "error_shape.svg").string(), "Shape error",
                  "time [s]", "error [px]", {es});
  write_svg_chart((fs::path(task.out_dir) / "error_tip.svg").string(), "Tip error",
                  "time [s]", "error [m]", {ep});
  SvgSeries traj, traj_ref;
  traj.label = "tip";
  traj.color = "#1f77b4";
  traj_ref.label = "reference";
  traj_ref.color = "#d62728";
  for (const auto& r : result.rows) {
    traj.x.push_back(r.xp[0]);
    traj.y.push_back(r.xp[2]);
  }
  for (const auto& p : ref.xp) {
    traj_ref.x.push_back(p[0]);
    traj_ref.y.push_back(p[2]);
  }
  write_svg_chart((fs::path(task.out_dir) / "tip_trajectory.svg").string(), "Tip trajectory",
                  "x [m]", "z [m]", {traj_ref, traj});

  std::ofstream so((fs::path(task.out_dir) / "summary.json").string());
  so << summary.dump(1) << "\n";
  result.summary = std::move(summary);
  return result;
}

// Standalone encoding of a stored image pair.
inline Eigen::VectorXd encode_files(const SystemConfig& sys, const std::string& img1_path,
                                    const std::string& img2_path) {
  const GrayImage img1 = read_pgm(img1_path);
  const GrayImage img2 = read_pgm(img2_path);
  return encode_views(img1, img2, sys.enc);
}

}  // namespace bezbot
