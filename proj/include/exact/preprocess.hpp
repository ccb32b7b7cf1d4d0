#pragma once

#include "exact/volume.hpp"

namespace exact {

// The deterministic preprocessing chain applied before a volume reaches the
// model: resample -> percentile clip -> CLAHE -> rescale to [0,1] -> resize.
// Images travel through trilinear interpolation, masks only through nearest.
struct PreprocessParams {
  Spacing target_spacing{1.0f, 1.0f, 3.0f};
  double lo_pct = 0.5;
  double hi_pct = 99.5;
  double clahe_clip_limit = 2.0;
  std::int64_t clahe_tiles_h = 8;
  std::int64_t clahe_tiles_w = 8;
  std::int64_t clahe_bins = 256;
  Tri target_size{64, 128, 128};
};

// New extent per axis = max(1, round(old_extent * old_spacing / target_spacing)).
Volume resample_spacing(const Volume& v, Spacing target);

// Clamp to the linear-interpolated [lo_pct, hi_pct] percentiles over all voxels.
Volume percentile_clip(const Volume& v, double lo_pct = 0.5, double hi_pct = 99.5);

// Contrast-limited adaptive histogram equalization, 2D per axial slice.
// Histogram bins span the slice's [min,max]; clipped excess is redistributed
// uniformly; per-pixel output blends the four neighboring tile mappings
// bilinearly by distance to tile centers. A constant slice passes unchanged.
Volume clahe(const Volume& v, double clip_limit = 2.0, std::int64_t tiles_h = 8,
             std::int64_t tiles_w = 8, std::int64_t bins = 256);

// Affine map of [min,max] onto [0,1]; a constant volume maps to all zeros.
Volume rescale_unit(const Volume& v);

// Trilinear for image/map kinds, nearest for masks.
Volume resize_to(const Volume& v, Tri target);

Volume preprocess_chain(const Volume& v, const PreprocessParams& params);

// Linear-interpolation percentile of an unsorted sample (exposed for tests).
double percentile_linear(std::vector<double> values, double pct);

}  // namespace exact
