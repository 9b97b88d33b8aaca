#include "svnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace svnet::geom {

namespace {
// SSD box-coding variances.
constexpr double kVarCenter = 0.1;
constexpr double kVarSize = 0.2;
}  // namespace

Box Box::clipped_to_unit() const {
  const double nx0 = std::max(0.0, x0()), ny0 = std::max(0.0, y0());
  const double nx1 = std::min(1.0, x1()), ny1 = std::min(1.0, y1());
  Box b;
  b.w = std::max(1e-6, nx1 - nx0);
  b.h = std::max(1e-6, ny1 - ny0);
  b.cx = 0.5 * (nx0 + nx1);
  b.cy = 0.5 * (ny0 + ny1);
  return b;
}

AnchorConfig AnchorConfig::ssd300() {
  AnchorConfig c;
  c.input_h = 300;
  c.input_w = 300;
  c.grid_sizes = {38, 19, 10, 5, 3, 1};
  c.anchors_per_cell = {4, 6, 6, 6, 4, 4};
  c.scale_min = 0.2;
  c.scale_max = 0.9;
  return c;
}

AnchorConfig AnchorConfig::toy64() {
  AnchorConfig c;
  c.input_h = 64;
  c.input_w = 64;
  c.grid_sizes = {8, 4, 2, 1};
  c.anchors_per_cell = {4, 6, 6, 4};
  c.scale_min = 0.15;
  c.scale_max = 0.8;
  return c;
}

AnchorConfig AnchorConfig::micro8() {
  AnchorConfig c;
  c.input_h = 8;
  c.input_w = 8;
  c.grid_sizes = {2, 1};
  c.anchors_per_cell = {4, 4};
  c.scale_min = 0.3;
  c.scale_max = 0.8;
  return c;
}

void AnchorConfig::validate() const {
  if (grid_sizes.empty()) throw std::invalid_argument("AnchorConfig: empty grid list");
  if (grid_sizes.size() != anchors_per_cell.size())
    throw std::invalid_argument("AnchorConfig: grids and anchors-per-cell length mismatch");
  for (std::size_t i = 0; i < grid_sizes.size(); ++i) {
    if (grid_sizes[i] <= 0) throw std::invalid_argument("AnchorConfig: grid size must be positive");
    if (i > 0 && grid_sizes[i] >= grid_sizes[i - 1])
      throw std::invalid_argument("AnchorConfig: grid sizes must be strictly descending");
    if (anchors_per_cell[i] != 4 && anchors_per_cell[i] != 6)
      throw std::invalid_argument("AnchorConfig: anchors per cell must be 4 or 6");
  }
  if (input_h <= 0 || input_w <= 0) throw std::invalid_argument("AnchorConfig: bad resolution");
  if (!(scale_min > 0.0) || !(scale_max > scale_min) || scale_max > 1.5)
    throw std::invalid_argument("AnchorConfig: bad scale range");
}

int AnchorConfig::anchor_count() const {
  int n = 0;
  for (std::size_t i = 0; i < grid_sizes.size(); ++i)
    n += grid_sizes[i] * grid_sizes[i] * anchors_per_cell[i];
  return n;
}

AnchorSet generate_anchors(const AnchorConfig& config) {
  config.validate();
  const int m = static_cast<int>(config.grid_sizes.size());
  // One scale per grid, linearly spaced over the configured range; the extra
  // ratio-1 anchor uses the geometric mean with the next scale (1.0 past the
  // end, the usual SSD convention).
  std::vector<double> scales(static_cast<std::size_t>(m) + 1);
  for (int k = 0; k < m; ++k)
    scales[static_cast<std::size_t>(k)] =
        m == 1 ? config.scale_min
               : config.scale_min + (config.scale_max - config.scale_min) * k / (m - 1);
  scales[static_cast<std::size_t>(m)] = 1.0;

  AnchorSet set;
  set.config = config;
  set.boxes.reserve(static_cast<std::size_t>(config.anchor_count()));
  for (int k = 0; k < m; ++k) {
    const int grid = config.grid_sizes[static_cast<std::size_t>(k)];
    const int per_cell = config.anchors_per_cell[static_cast<std::size_t>(k)];
    const double s = scales[static_cast<std::size_t>(k)];
    const double s_prime = std::sqrt(s * scales[static_cast<std::size_t>(k) + 1]);
    // Ratio order: 1, 1 (geomean scale), 2, 1/2[, 3, 1/3]
    std::vector<std::pair<double, double>> shapes = {
        {s, s}, {s_prime, s_prime}, {s * std::sqrt(2.0), s / std::sqrt(2.0)},
        {s / std::sqrt(2.0), s * std::sqrt(2.0)}};
    if (per_cell == 6) {
      shapes.emplace_back(s * std::sqrt(3.0), s / std::sqrt(3.0));
      shapes.emplace_back(s / std::sqrt(3.0), s * std::sqrt(3.0));
    }
    for (int row = 0; row < grid; ++row)
      for (int col = 0; col < grid; ++col)
        for (const auto& [w, h] : shapes) {
          Box b;
          b.cx = (col + 0.5) / grid;
          b.cy = (row + 0.5) / grid;
          b.w = w;
          b.h = h;
          set.boxes.push_back(b);
        }
  }
  return set;
}

double iou(const Box& b1, const Box& b2) {
  const double ix = std::min(b1.x1(), b2.x1()) - std::max(b1.x0(), b2.x0());
  if (ix <= 0.0) return 0.0;
  const double iy = std::min(b1.y1(), b2.y1()) - std::max(b1.y0(), b2.y0());
  if (iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (b1.area() + b2.area() - inter);
}

std::array<double, 4> encode_offsets(const Box& gt, const Box& anchor) {
  if (gt.w <= 0.0 || gt.h <= 0.0)
    throw std::invalid_argument("encode_offsets: ground-truth box has nonpositive size");
  if (anchor.w <= 0.0 || anchor.h <= 0.0)
    throw std::invalid_argument("encode_offsets: anchor has nonpositive size");
  return {(gt.cx - anchor.cx) / anchor.w / kVarCenter,
          (gt.cy - anchor.cy) / anchor.h / kVarCenter,
          std::log(gt.w / anchor.w) / kVarSize,
          std::log(gt.h / anchor.h) / kVarSize};
}

Box decode_offsets(const std::array<double, 4>& offsets, const Box& anchor) {
  Box b;
  b.cx = offsets[0] * kVarCenter * anchor.w + anchor.cx;
  b.cy = offsets[1] * kVarCenter * anchor.h + anchor.cy;
  b.w = std::exp(offsets[2] * kVarSize) * anchor.w;
  b.h = std::exp(offsets[3] * kVarSize) * anchor.h;
  return b;
}

BestMatch match_one_best(const Box& gt, const AnchorSet& anchors) {
  if (anchors.boxes.empty()) throw std::invalid_argument("match_one_best: empty anchor set");
  BestMatch best;
  for (int i = 0; i < anchors.count(); ++i) {
    const double v = iou(gt, anchors.boxes[static_cast<std::size_t>(i)]);
    if (v > best.iou) {
      best.iou = v;
      best.index = i;
    }
  }
  best.any_overlap = best.iou > 0.0;
  return best;
}

std::vector<int> match_multi(const Box& gt, const AnchorSet& anchors, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("match_multi: threshold must be in (0,1)");
  const BestMatch best = match_one_best(gt, anchors);
  std::vector<int> out;
  for (int i = 0; i < anchors.count(); ++i)
    if (iou(gt, anchors.boxes[static_cast<std::size_t>(i)]) >= threshold) out.push_back(i);
  if (!std::binary_search(out.begin(), out.end(), best.index)) {
    out.push_back(best.index);
    std::sort(out.begin(), out.end());
  }
  return out;
}

std::vector<int> mine_hard_negatives(const Tensor& per_anchor_losses,
                                     const std::vector<int>& positives, int ratio) {
  if (ratio < 1) throw std::invalid_argument("mine_hard_negatives: ratio must be >= 1");
  if (positives.empty()) return {};
  const std::int64_t a = per_anchor_losses.size();
  std::vector<int> candidates;
  candidates.reserve(static_cast<std::size_t>(a));
  for (int i = 0; i < a; ++i)
    if (!std::binary_search(positives.begin(), positives.end(), i)) candidates.push_back(i);
  const std::size_t want = std::min(candidates.size(), positives.size() * static_cast<std::size_t>(ratio));
  // Stable sort by descending loss keeps the lowest-index-first tie rule.
  std::stable_sort(candidates.begin(), candidates.end(), [&](int l, int r) {
    return per_anchor_losses[l] > per_anchor_losses[r];
  });
  candidates.resize(want);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

}  // namespace svnet::geom
