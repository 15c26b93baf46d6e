#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "bezbot/errors.hpp"
#include "bezbot/image.hpp"

namespace bezbot {

using PixelCoord = Eigen::Vector2i;  // (x, y)

enum class ThresholdPolicy { Otsu, Fixed };

struct BinarizeOptions {
  ThresholdPolicy policy = ThresholdPolicy::Otsu;
  int fixed_threshold = 128;
};

namespace detail {

inline int otsu_threshold(const GrayImage& img) {
  std::array<std::size_t, 256> hist{};
  for (uint8_t p : img.pixels) ++hist[p];
  const double total = static_cast<double>(img.pixels.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += i * static_cast<double>(hist[i]);

  double sum_b = 0.0, w_b = 0.0, best_var = -1.0;
  int best_t = 127;
  for (int t = 0; t < 256; ++t) {
    w_b += static_cast<double>(hist[t]);
    if (w_b == 0.0) continue;
    const double w_f = total - w_b;
    if (w_f == 0.0) break;
    sum_b += t * static_cast<double>(hist[t]);
    const double m_b = sum_b / w_b;
    const double m_f = (sum_all - sum_b) / w_f;
    const double var = w_b * w_f * (m_b - m_f) * (m_b - m_f);
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace detail

// Threshold, with polarity chosen so the foreground is the minority class
// (the robot occupies well under half the frame).
inline BinaryImage binarize(const GrayImage& img, const BinarizeOptions& opt = {}) {
  const int t = opt.policy == ThresholdPolicy::Otsu ? detail::otsu_threshold(img)
                                                    : opt.fixed_threshold;
  std::size_t above = 0;
  for (uint8_t p : img.pixels) above += p > t;
  const bool bright_fg = above * 2 <= img.pixels.size();
  BinaryImage out = BinaryImage::zeros(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = bright_fg ? img.pixels[i] > t : img.pixels[i] <= t;
  if (out.count() == 0) throw NoForeground();
  return out;
}

// Keep only the largest 8-connected foreground component. Ties break toward
// the component whose first row-major pixel comes first.
inline BinaryImage largest_component(const BinaryImage& img) {
  if (img.count() == 0) throw NoForeground();
  const int w = img.width, h = img.height;
  std::vector<int32_t> label(img.pixels.size(), -1);
  int next_label = 0;
  std::size_t best_size = 0;
  int best_label = -1;

  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < img.pixels.size(); ++start) {
    if (!img.pixels[start] || label[start] >= 0) continue;
    std::size_t size = 0;
    label[start] = next_label;
    queue.push_back(start);
    while (!queue.empty()) {
      const std::size_t idx = queue.front();
      queue.pop_front();
      ++size;
      const int x = static_cast<int>(idx % w), y = static_cast<int>(idx / w);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
          if (img.pixels[nidx] && label[nidx] < 0) {
            label[nidx] = next_label;
            queue.push_back(nidx);
          }
        }
      }
    }
    if (size > best_size) {  // strict: earlier component wins ties
      best_size = size;
      best_label = next_label;
    }
    ++next_label;
  }

  BinaryImage out = BinaryImage::zeros(w, h);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = img.pixels[i] && label[i] == best_label;
  return out;
}

namespace detail {

inline std::vector<PixelCoord> disk_offsets(int radius) {
  std::vector<PixelCoord> off;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) off.emplace_back(dx, dy);
  return off;
}

inline BinaryImage dilate(const BinaryImage& img, const std::vector<PixelCoord>& se) {
  BinaryImage out = BinaryImage::zeros(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (!img.at(x, y)) continue;
      for (const auto& d : se) {
        const int nx = x + d.x(), ny = y + d.y();
        if (out.inside(nx, ny)) out.at(nx, ny) = 1;
      }
    }
  }
  return out;
}

inline BinaryImage erode(const BinaryImage& img, const std::vector<PixelCoord>& se) {
  BinaryImage out = BinaryImage::zeros(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      bool keep = true;
      for (const auto& d : se) {
        const int nx = x + d.x(), ny = y + d.y();
        if (!img.inside(nx, ny) || !img.at(nx, ny)) {
          keep = false;
          break;
        }
      }
      if (keep) out.at(x, y) = 1;
    }
  }
  return out;
}

}  // namespace detail

// Morphological closing with a disk structuring element.
inline BinaryImage close(const BinaryImage& img, int radius) {
  if (radius < 0) throw DomainError("closing radius must be >= 0");
  if (radius == 0) return img;
  const auto se = detail::disk_offsets(radius);
  return detail::erode(detail::dilate(img, se), se);
}

// Zhang-Suen iterative thinning. Two subiterations per pass; a pixel is
// removed when it has 2..6 foreground neighbours, exactly one 0->1
// transition around its 8-neighbourhood, and the pass-specific directional
// products vanish.
inline BinaryImage skeletonize(const BinaryImage& img) {
  const int w = img.width, h = img.height;
  BinaryImage g = img;
  auto at = [&g, w, h](int x, int y) -> uint8_t {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return g.pixels[static_cast<std::size_t>(y) * w + x];
  };

  // active set: only re-examine pixels near recent deletions
  std::vector<std::size_t> active;
  active.reserve(img.count());
  for (std::size_t i = 0; i < g.pixels.size(); ++i)
    if (g.pixels[i]) active.push_back(i);

  std::vector<std::size_t> kill;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      kill.clear();
      for (std::size_t idx : active) {
        if (!g.pixels[idx]) continue;
        const int x = static_cast<int>(idx % w), y = static_cast<int>(idx / w);
        const uint8_t p2 = at(x, y - 1), p3 = at(x + 1, y - 1), p4 = at(x + 1, y),
                      p5 = at(x + 1, y + 1), p6 = at(x, y + 1), p7 = at(x - 1, y + 1),
                      p8 = at(x - 1, y), p9 = at(x - 1, y - 1);
        const int bsum = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
        if (bsum < 2 || bsum > 6) continue;
        const uint8_t seq[9] = {p2, p3, p4, p5, p6, p7, p8, p9, p2};
        int transitions = 0;
        for (int i = 0; i < 8; ++i)
          if (seq[i] == 0 && seq[i + 1] == 1) ++transitions;
        if (transitions != 1) continue;
        if (pass == 0) {
          if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
        } else {
          if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
        }
        kill.push_back(idx);
      }
      for (std::size_t idx : kill) g.pixels[idx] = 0;
      if (!kill.empty()) changed = true;
    }
    if (changed) {
      std::vector<std::size_t> next;
      next.reserve(active.size());
      for (std::size_t idx : active)
        if (g.pixels[idx]) next.push_back(idx);
      active.swap(next);
    }
  }
  return g;
}

namespace detail {

inline std::vector<PixelCoord> foreground_pixels(const BinaryImage& img) {
  std::vector<PixelCoord> pts;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (img.at(x, y)) pts.emplace_back(x, y);
  return pts;
}

inline int neighbor_count(const BinaryImage& img, int x, int y) {
  int n = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int nx = x + dx, ny = y + dy;
      if (img.inside(nx, ny) && img.at(nx, ny)) ++n;
    }
  return n;
}

// Yokoi connectivity number for 8-connected foreground. 1 means the pixel
// is simple (removable without changing topology), 2 a curve interior,
// >= 3 a genuine junction.
inline int yokoi8(const BinaryImage& img, int x, int y) {
  // ring indexed from E, counter-clockwise: E, NE, N, NW, W, SW, S, SE
  const int ring[8][2] = {{1, 0}, {1, -1}, {0, -1}, {-1, -1},
                          {-1, 0}, {-1, 1}, {0, 1}, {1, 1}};
  int bg[10];
  for (int i = 0; i < 8; ++i) {
    const int nx = x + ring[i][0], ny = y + ring[i][1];
    bg[i] = !(img.inside(nx, ny) && img.at(nx, ny));
  }
  bg[8] = bg[0];
  bg[9] = bg[1];
  int n = 0;
  for (int k = 0; k < 8; k += 2) n += bg[k] - bg[k] * bg[k + 1] * bg[k + 2];
  return n;
}

// Delete simple pixels that still have 2+ neighbours: thick corners and
// the two-pixel staircases thinning leaves on diagonals. Endpoints
// (degree 1) are never touched, and removing a simple pixel cannot
// disconnect the skeleton, so chains come out with interior degree 2.
inline void remove_redundant(BinaryImage& img) {
  bool removed = true;
  while (removed) {
    removed = false;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        if (!img.at(x, y)) continue;
        if (neighbor_count(img, x, y) >= 2 && yokoi8(img, x, y) == 1) {
          img.at(x, y) = 0;
          removed = true;
        }
      }
  }
}

// Remove endpoint chains of at most `max_len` pixels that terminate at a
// junction (degree >= 3 once redundant pixels are gone). Thinning leaves
// such barbs on thick strokes and they would otherwise read as extra
// endpoints. Genuine curve ends are never touched.
inline void prune_spurs(BinaryImage& img, int max_len) {
  remove_redundant(img);
  bool removed = true;
  while (removed) {
    removed = false;
    for (const auto& p : foreground_pixels(img)) {
      if (neighbor_count(img, p.x(), p.y()) != 1) continue;
      std::vector<PixelCoord> walk{p};
      PixelCoord prev(-1, -1), cur = p;
      bool is_spur = false;
      for (int step = 0; step < max_len; ++step) {
        PixelCoord next(-1, -1);
        for (int dy = -1; dy <= 1 && next.x() < 0; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = cur.x() + dx, ny = cur.y() + dy;
            if (!img.inside(nx, ny) || !img.at(nx, ny)) continue;
            if ((nx == prev.x() && ny == prev.y()) ||
                std::any_of(walk.begin(), walk.end(), [&](const PixelCoord& q) {
                  return q.x() == nx && q.y() == ny;
                }))
              continue;
            next = PixelCoord(nx, ny);
            break;
          }
        if (next.x() < 0) break;
        if (neighbor_count(img, next.x(), next.y()) >= 3) {
          is_spur = true;  // reached a junction: everything walked is a barb
          break;
        }
        walk.push_back(next);
        prev = cur;
        cur = next;
      }
      if (is_spur) {
        for (const auto& q : walk) img.at(q.x(), q.y()) = 0;
        removed = true;
      }
    }
    if (removed) remove_redundant(img);  // ex-junctions may now be stubs
  }
}

}  // namespace detail

// Order a thinned skeleton from the endpoint nearest `base_anchor` to the
// far endpoint. Spurs up to `spur_len` pixels are pruned first; the
// ordering is the BFS tree path between the two endpoints, so redundant
// diagonal adjacencies cannot shortcut or revisit pixels.
inline std::vector<PixelCoord> order_skeleton(const BinaryImage& skeleton,
                                              const Eigen::Vector2d& base_anchor,
                                              int spur_len = 3) {
  BinaryImage img = skeleton;
  detail::prune_spurs(img, spur_len);

  const auto pts = detail::foreground_pixels(img);
  if (pts.empty()) throw NoForeground("skeleton is empty");
  if (pts.size() == 1) return {pts.front()};

  std::vector<PixelCoord> endpoints;
  for (const auto& p : pts)
    if (detail::neighbor_count(img, p.x(), p.y()) == 1) endpoints.push_back(p);
  if (endpoints.empty()) throw CyclicSkeleton("skeleton has no endpoints");
  if (endpoints.size() > 2)
    throw BranchedSkeleton("skeleton has " + std::to_string(endpoints.size()) +
                           " endpoints after spur pruning");

  auto nearer_anchor = [&base_anchor](const PixelCoord& a, const PixelCoord& b) {
    const double da = (a.cast<double>() - base_anchor).squaredNorm();
    const double db = (b.cast<double>() - base_anchor).squaredNorm();
    if (da != db) return da < db;
    return a.y() != b.y() ? a.y() < b.y() : a.x() < b.x();
  };
  PixelCoord start = endpoints[0];
  for (const auto& e : endpoints)
    if (nearer_anchor(e, start)) start = e;

  // BFS distances from start
  const int w = img.width;
  std::vector<int32_t> dist(img.pixels.size(), -1);
  std::deque<PixelCoord> queue{start};
  dist[static_cast<std::size_t>(start.y()) * w + start.x()] = 0;
  PixelCoord far = start;
  int far_d = 0;
  while (!queue.empty()) {
    const PixelCoord cur = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<std::size_t>(cur.y()) * w + cur.x()];
    if (d > far_d) {
      far_d = d;
      far = cur;
    }
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = cur.x() + dx, ny = cur.y() + dy;
        if (!img.inside(nx, ny) || !img.at(nx, ny)) continue;
        auto& dn = dist[static_cast<std::size_t>(ny) * w + nx];
        if (dn < 0) {
          dn = d + 1;
          queue.emplace_back(nx, ny);
        }
      }
  }

  // prefer the other endpoint as the walk target when it was reached
  PixelCoord target = far;
  if (endpoints.size() == 2) {
    const PixelCoord other = (endpoints[0] == start) ? endpoints[1] : endpoints[0];
    if (dist[static_cast<std::size_t>(other.y()) * w + other.x()] >= 0) target = other;
  }

  // walk back along decreasing BFS distance; deterministic neighbour order
  std::vector<PixelCoord> path{target};
  PixelCoord cur = target;
  while (cur != start) {
    const int d = dist[static_cast<std::size_t>(cur.y()) * w + cur.x()];
    PixelCoord next(-1, -1);
    for (int dy = -1; dy <= 1 && next.x() < 0; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = cur.x() + dx, ny = cur.y() + dy;
        if (!img.inside(nx, ny) || !img.at(nx, ny)) continue;
        if (dist[static_cast<std::size_t>(ny) * w + nx] == d - 1) {
          next = PixelCoord(nx, ny);
          break;
        }
      }
    if (next.x() < 0) throw Error("skeleton walk failed (disconnected BFS tree)");
    path.push_back(next);
    cur = next;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

// Extend an ordered skeleton from both ends by following the stroke ridge,
// returning sub-pixel points. Thinning retracts the ends of the
// centerline, badly so on diagonal strokes, while the mask overshoots it
// by half a stroke width (rounded cap). The walk steps one pixel at a
// time, re-centres across the stroke, re-estimates its direction from
// recent motion, and stops once the forward foreground run drops to the
// local half-width, which is where the centerline actually ends.
inline std::vector<Eigen::Vector2d> extend_into_mask(const std::vector<PixelCoord>& path,
                                                     const BinaryImage& mask,
                                                     int max_ext = 24) {
  std::vector<Eigen::Vector2d> mid;
  mid.reserve(path.size());
  for (const auto& p : path) mid.push_back(p.cast<double>());
  if (path.size() < 2 || max_ext <= 0) return mid;

  auto fg = [&mask](const Eigen::Vector2d& q) {
    const int x = static_cast<int>(std::lround(q.x()));
    const int y = static_cast<int>(std::lround(q.y()));
    return mask.inside(x, y) && mask.at(x, y);
  };
  auto run_length = [&fg](const Eigen::Vector2d& from, const Eigen::Vector2d& dir,
                          double limit) {
    double r = 0.0;
    while (r < limit && fg(from + dir * (r + 0.25))) r += 0.25;
    return r;
  };

  auto extend = [&](bool at_back) {
    std::vector<Eigen::Vector2d> pts;
    const std::size_t k = std::min<std::size_t>(9, path.size());
    for (std::size_t i = path.size() - k; i < path.size(); ++i)
      pts.push_back(at_back ? mid[i] : mid[path.size() - 1 - i]);
    std::vector<Eigen::Vector2d> out;
    for (int step = 0; step < max_ext; ++step) {
      const std::size_t back = pts.size() - 1;
      const std::size_t ref = back - std::min<std::size_t>(6, back);
      const Eigen::Vector2d dir = (pts[back] - pts[ref]).normalized();
      const Eigen::Vector2d perp(-dir.y(), dir.x());
      Eigen::Vector2d cand = pts[back] + dir;
      const double left = run_length(cand, perp, 6.0);
      const double right = run_length(cand, -perp, 6.0);
      if (!fg(cand) && left + right < 1.0) break;
      const double shift = std::clamp(0.5 * (left - right), -0.75, 0.75);
      cand += perp * shift;
      // effective cap radius: thresholding erodes the mask edge along the
      // tangent while widening nothing laterally, so the lateral
      // half-width overestimates the remaining cap by roughly a pixel
      const double half = std::max(1.0, 0.5 * (left + right));
      const double ahead = run_length(cand, dir, half + 2.0);
      if (!fg(cand) || ahead < half) {
        // sub-pixel finish: the centerline ends where the forward run
        // equals the cap radius; walk the fractional remainder
        const Eigen::Vector2d& last = pts[back];
        const double rem = run_length(last, dir, half + 2.0) - half;
        if (rem > 0.05 && rem <= 2.5) out.push_back(last + dir * rem);
        break;
      }
      pts.push_back(cand);
      out.push_back(cand);
    }
    return out;
  };

  std::vector<Eigen::Vector2d> head = extend(false);
  std::reverse(head.begin(), head.end());
  const std::vector<Eigen::Vector2d> tail = extend(true);

  std::vector<Eigen::Vector2d> out;
  out.reserve(head.size() + mid.size() + tail.size());
  out.insert(out.end(), head.begin(), head.end());
  out.insert(out.end(), mid.begin(), mid.end());
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

}  // namespace bezbot
