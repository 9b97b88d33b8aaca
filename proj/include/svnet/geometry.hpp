#ifndef SVNET_GEOMETRY_HPP_
#define SVNET_GEOMETRY_HPP_

#include <array>
#include <vector>

#include "svnet/tensor.hpp"

namespace svnet::geom {

// Center-size box, normalized to [0,1] relative to the frame. Boxes may
// extend past the frame edges; nothing is clipped during matching.
struct Box {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  Box clipped_to_unit() const;
};

struct AnchorConfig {
  int input_h = 300;
  int input_w = 300;
  std::vector<int> grid_sizes;          // descending, e.g. {38,19,10,5,3,1}
  std::vector<int> anchors_per_cell;    // 4 or 6 per grid
  double scale_min = 0.2;
  double scale_max = 0.9;

  static AnchorConfig ssd300();
  static AnchorConfig toy64();   // grids {8,4,2,1}, per-cell {4,6,6,4} -> 380
  static AnchorConfig micro8();  // grids {2,1},    per-cell {4,4}     -> 20

  void validate() const;
  int anchor_count() const;  // closed form: sum(grid^2 * per_cell)
};

struct AnchorSet {
  std::vector<Box> boxes;
  AnchorConfig config;

  int count() const { return static_cast<int>(boxes.size()); }
};

// Deterministic grid-major, row-major, ratio-minor anchor enumeration.
AnchorSet generate_anchors(const AnchorConfig& config);

double iou(const Box& b1, const Box& b2);

// Faster R-CNN / SSD offset parameterization with variances (0.1, 0.2).
std::array<double, 4> encode_offsets(const Box& gt, const Box& anchor);
Box decode_offsets(const std::array<double, 4>& offsets, const Box& anchor);

struct BestMatch {
  int index = 0;
  double iou = 0.0;
  bool any_overlap = false;  // false when every IoU was zero
};

// Argmax IoU with lowest-index tie-break.
BestMatch match_one_best(const Box& gt, const AnchorSet& anchors);

// All anchors with IoU >= threshold, with the one-best anchor always
// included. Sorted ascending.
std::vector<int> match_multi(const Box& gt, const AnchorSet& anchors, double threshold);

// Highest-loss non-positive anchors, ratio * |positives| of them (fewer if
// exhausted). Ties broken toward the lower index. `positives` must be sorted.
std::vector<int> mine_hard_negatives(const Tensor& per_anchor_losses,
                                     const std::vector<int>& positives, int ratio);

}  // namespace svnet::geom

#endif  // SVNET_GEOMETRY_HPP_
