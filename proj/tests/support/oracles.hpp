#pragma once

// Reference implementations written independently of the library, used by
// the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "palmscan/geo.hpp"
#include "palmscan/timeline.hpp"

namespace palmscan::oracle {

#if defined(__SIZEOF_FLOAT128__)
__extension__ typedef __float128 Quad;
#else
typedef long double Quad;
#endif

// Slippy-map tile corner formulas as published for OpenStreetMap.
inline double tilex2long(std::int64_t x, int z) { return x / std::ldexp(1.0, z) * 360.0 - 180; }
inline double tiley2lat(std::int64_t y, int z) {
  const double n = M_PI - 2.0 * M_PI * y / std::ldexp(1.0, z);
  return 180.0 / M_PI * std::atan(0.5 * (std::exp(n) - std::exp(-n)));
}

// Box center in EPSG:3857 as the midpoint of its georeferenced corners, each
// corner found by linear interpolation between the tile's Mercator edges.
inline geo::MercatorPoint box_center_mercator(const geo::TileId& t, const geo::PixelBox& b, int tile_size) {
  const Quad h = geo::kMercatorHalfWorld;
  const Quad tile_m = 2 * h / static_cast<Quad>(std::ldexp(1.0, t.zoom));
  const Quad west = -h + static_cast<Quad>(t.x) * tile_m;
  const Quad north = h - static_cast<Quad>(t.y) * tile_m;
  const Quad size = tile_size;
  const Quad x0 = west + (static_cast<Quad>(b.x_min) / size) * tile_m;
  const Quad x1 = west + (static_cast<Quad>(b.x_max) / size) * tile_m;
  const Quad y0 = north - (static_cast<Quad>(b.y_min) / size) * tile_m;
  const Quad y1 = north - (static_cast<Quad>(b.y_max) / size) * tile_m;
  return {static_cast<double>((x0 + x1) / 2), static_cast<double>((y0 + y1) / 2)};
}

// Timeline rule written as a single left-to-right scan over same-length
// label and date sequences (no unknown labels).
struct TimelineVerdict {
  timeline::TimelineStatus status = timeline::TimelineStatus::never_infested;
  std::optional<std::pair<YearMonth, YearMonth>> transition;
};

inline TimelineVerdict timeline_rule(const std::vector<std::pair<YearMonth, CrownLabel>>& seq) {
  TimelineVerdict v;
  std::optional<YearMonth> last_healthy;
  std::optional<YearMonth> first_infested;
  bool healthy_after = false;
  for (const auto& [date, label] : seq) {
    if (label == CrownLabel::infested) {
      if (!first_infested) first_infested = date;
    } else if (label == CrownLabel::healthy) {
      if (first_infested) {
        healthy_after = true;
      } else {
        last_healthy = date;
      }
    }
  }
  if (!first_infested) return v;
  if (last_healthy) v.transition = std::make_pair(*last_healthy, *first_infested);
  if (healthy_after) {
    v.status = timeline::TimelineStatus::inconsistent;
  } else {
    v.status = last_healthy ? timeline::TimelineStatus::onset_known : timeline::TimelineStatus::onset_unknown;
  }
  return v;
}

// Pairwise AUC: P(score_pos > score_neg) + 0.5 P(tie).
inline double pairwise_auc(const std::vector<std::pair<bool, double>>& labelled) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (const auto& [pi, si] : labelled) {
    if (!pi) continue;
    for (const auto& [pj, sj] : labelled) {
      if (pj) continue;
      ++pairs;
      if (si > sj) wins += 1.0;
      else if (si == sj) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

struct OracleBox {
  std::string image;
  double x0, y0, x1, y1;
  double score = 0.0;
};

inline double box_iou(const OracleBox& a, const OracleBox& b) {
  const double iw = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double ih = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = iw * ih;
  const double uni = (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// VOC average precision by explicit cumulative counting: detections in the
// given order, precision envelope taken as a max over every later rank.
inline double voc_ap(const std::vector<OracleBox>& ranked, const std::vector<OracleBox>& gts, double thr) {
  std::vector<int> tp(ranked.size(), 0);
  std::set<std::size_t> used;
  for (std::size_t d = 0; d < ranked.size(); ++d) {
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].image != ranked[d].image) continue;
      const double o = box_iou(ranked[d], gts[g]);
      if (o > best) {
        best = o;
        best_g = g;
      }
    }
    if (best >= thr && !used.count(best_g)) {
      used.insert(best_g);
      tp[d] = 1;
    }
  }
  std::vector<double> prec(ranked.size()), rec(ranked.size());
  int cum = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    cum += tp[k];
    prec[k] = static_cast<double>(cum) / static_cast<double>(k + 1);
    rec[k] = static_cast<double>(cum) / static_cast<double>(gts.size());
  }
  double ap = 0.0;
  double prev_r = 0.0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    double pmax = 0.0;
    for (std::size_t j = k; j < ranked.size(); ++j) pmax = std::max(pmax, prec[j]);
    ap += (rec[k] - prev_r) * pmax;
    prev_r = rec[k];
  }
  return ap;
}

}  // namespace palmscan::oracle
