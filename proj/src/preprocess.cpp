#include "exact/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "exact/tape.hpp"

namespace exact {

namespace {

Tensor<float> resize_tensor(const Tensor<float>& data, Tri target, bool nearest) {
  Tape<float> tape;
  Var<float> v = tape.constant(data);
  Var<float> out = nearest ? resize_nearest(v, target) : resize_trilinear(v, target);
  return out.value();
}

}  // namespace

double percentile_linear(std::vector<double> values, double pct) {
  if (values.empty()) fail(ErrCode::shape_mismatch, "percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = (static_cast<double>(values.size()) - 1.0) * pct / 100.0;
  const auto i0 = static_cast<std::size_t>(pos);
  const std::size_t i1 = std::min(i0 + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(i0);
  return values[i0] + frac * (values[i1] - values[i0]);
}

Volume resample_spacing(const Volume& v, Spacing target) {
  if (!(target.x > 0.0f && target.y > 0.0f && target.z > 0.0f))
    fail(ErrCode::config_invalid, "resample_spacing: target spacing components must be > 0");
  auto new_extent = [](std::int64_t old, float old_sp, float new_sp) {
    const double e = std::round(static_cast<double>(old) * static_cast<double>(old_sp) /
                                static_cast<double>(new_sp));
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(e));
  };
  Tri size{new_extent(v.depth(), v.spacing.z, target.z),
           new_extent(v.height(), v.spacing.y, target.y),
           new_extent(v.width(), v.spacing.x, target.x)};
  Volume out;
  out.data = resize_tensor(v.data, size, v.kind == VolKind::mask);
  out.spacing = target;
  out.kind = v.kind;
  return out;
}

Volume percentile_clip(const Volume& v, double lo_pct, double hi_pct) {
  if (v.kind != VolKind::image)
    fail(ErrCode::config_invalid, "percentile_clip expects an image-kind volume");
  std::vector<double> sample(v.data.data().begin(), v.data.data().end());
  const auto lo = static_cast<float>(percentile_linear(sample, lo_pct));
  const auto hi = static_cast<float>(percentile_linear(std::move(sample), hi_pct));
  Volume out = v;
  out.data = v.data.clone();
  for (auto& x : out.data.mutable_data()) x = std::clamp(x, lo, hi);
  return out;
}

namespace {

struct TileGrid {
  std::vector<std::int64_t> row_lo, row_hi, col_lo, col_hi;
  std::vector<double> row_center, col_center;
};

TileGrid make_grid(std::int64_t H, std::int64_t W, std::int64_t th, std::int64_t tw) {
  TileGrid g;
  for (std::int64_t i = 0; i < th; ++i) {
    g.row_lo.push_back(i * H / th);
    g.row_hi.push_back((i + 1) * H / th);
    g.row_center.push_back(static_cast<double>(g.row_lo.back()) +
                           static_cast<double>(g.row_hi.back() - g.row_lo.back()) / 2.0);
  }
  for (std::int64_t j = 0; j < tw; ++j) {
    g.col_lo.push_back(j * W / tw);
    g.col_hi.push_back((j + 1) * W / tw);
    g.col_center.push_back(static_cast<double>(g.col_lo.back()) +
                           static_cast<double>(g.col_hi.back() - g.col_lo.back()) / 2.0);
  }
  return g;
}

// Per-tile clipped-histogram equalization mapping: bin -> output value.
std::vector<double> tile_mapping(const float* slice, std::int64_t W, const TileGrid& g,
                                 std::int64_t ti, std::int64_t tj, double lo, double hi,
                                 std::int64_t bins, double clip_limit) {
  const double range = hi - lo;
  std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
  const std::int64_t r0 = g.row_lo[static_cast<std::size_t>(ti)], r1 = g.row_hi[static_cast<std::size_t>(ti)];
  const std::int64_t c0 = g.col_lo[static_cast<std::size_t>(tj)], c1 = g.col_hi[static_cast<std::size_t>(tj)];
  const double area = static_cast<double>((r1 - r0) * (c1 - c0));
  for (std::int64_t y = r0; y < r1; ++y)
    for (std::int64_t x = c0; x < c1; ++x) {
      auto b = static_cast<std::int64_t>((static_cast<double>(slice[y * W + x]) - lo) / range *
                                         static_cast<double>(bins));
      b = std::clamp<std::int64_t>(b, 0, bins - 1);
      hist[static_cast<std::size_t>(b)] += 1.0;
    }
  const double limit = std::max(1.0, clip_limit * area / static_cast<double>(bins));
  double excess = 0.0;
  for (double& h : hist)
    if (h > limit) {
      excess += h - limit;
      h = limit;
    }
  const double bonus = excess / static_cast<double>(bins);
  for (double& h : hist) h += bonus;
  std::vector<double> map(static_cast<std::size_t>(bins));
  double cdf = 0.0;
  for (std::int64_t b = 0; b < bins; ++b) {
    cdf += hist[static_cast<std::size_t>(b)];
    map[static_cast<std::size_t>(b)] = lo + range * (cdf / area);
  }
  return map;
}

// Interpolation anchor along one axis: neighbor tile indices and blend weight.
struct Anchor {
  std::int64_t i0, i1;
  double f;
};

Anchor anchor_for(double pos, const std::vector<double>& centers) {
  const auto n = static_cast<std::int64_t>(centers.size());
  if (pos <= centers.front()) return {0, 0, 0.0};
  if (pos >= centers.back()) return {n - 1, n - 1, 0.0};
  std::int64_t i = 0;
  while (i + 1 < n && centers[static_cast<std::size_t>(i + 1)] <= pos) ++i;
  if (centers[static_cast<std::size_t>(i + 1)] == centers[static_cast<std::size_t>(i)]) return {i, i, 0.0};
  return {i, i + 1,
          (pos - centers[static_cast<std::size_t>(i)]) /
              (centers[static_cast<std::size_t>(i + 1)] - centers[static_cast<std::size_t>(i)])};
}

}  // namespace

Volume clahe(const Volume& v, double clip_limit, std::int64_t tiles_h, std::int64_t tiles_w,
             std::int64_t bins) {
  if (v.kind != VolKind::image) fail(ErrCode::config_invalid, "clahe expects an image-kind volume");
  const std::int64_t C = v.channels(), D = v.depth(), H = v.height(), W = v.width();
  if (H < tiles_h || W < tiles_w)
    fail(ErrCode::config_invalid, "clahe: slice " + std::to_string(H) + "x" + std::to_string(W) +
                                      " smaller than tile grid " + std::to_string(tiles_h) + "x" +
                                      std::to_string(tiles_w));
  Volume out = v;
  out.data = v.data.clone();
  const TileGrid grid = make_grid(H, W, tiles_h, tiles_w);
  const std::int64_t plane = H * W;
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t d = 0; d < D; ++d) {
      const float* slice = v.data.data().data() + (c * D + d) * plane;
      float* dst = out.data.mutable_data().data() + (c * D + d) * plane;
      double lo = slice[0], hi = slice[0];
      for (std::int64_t i = 1; i < plane; ++i) {
        lo = std::min(lo, static_cast<double>(slice[i]));
        hi = std::max(hi, static_cast<double>(slice[i]));
      }
      if (hi == lo) continue;  // degenerate histogram: constant slice unchanged
      std::vector<std::vector<double>> maps(static_cast<std::size_t>(tiles_h * tiles_w));
      for (std::int64_t ti = 0; ti < tiles_h; ++ti)
        for (std::int64_t tj = 0; tj < tiles_w; ++tj)
          maps[static_cast<std::size_t>(ti * tiles_w + tj)] =
              tile_mapping(slice, W, grid, ti, tj, lo, hi, bins, clip_limit);
      for (std::int64_t y = 0; y < H; ++y) {
        const Anchor ay = anchor_for(static_cast<double>(y), grid.row_center);
        for (std::int64_t x = 0; x < W; ++x) {
          const Anchor ax = anchor_for(static_cast<double>(x), grid.col_center);
          auto b = static_cast<std::int64_t>((static_cast<double>(slice[y * W + x]) - lo) /
                                             (hi - lo) * static_cast<double>(bins));
          b = std::clamp<std::int64_t>(b, 0, bins - 1);
          const double m00 = maps[static_cast<std::size_t>(ay.i0 * tiles_w + ax.i0)][static_cast<std::size_t>(b)];
          const double m01 = maps[static_cast<std::size_t>(ay.i0 * tiles_w + ax.i1)][static_cast<std::size_t>(b)];
          const double m10 = maps[static_cast<std::size_t>(ay.i1 * tiles_w + ax.i0)][static_cast<std::size_t>(b)];
          const double m11 = maps[static_cast<std::size_t>(ay.i1 * tiles_w + ax.i1)][static_cast<std::size_t>(b)];
          const double top = m00 * (1.0 - ax.f) + m01 * ax.f;
          const double bot = m10 * (1.0 - ax.f) + m11 * ax.f;
          dst[y * W + x] = static_cast<float>(top * (1.0 - ay.f) + bot * ay.f);
        }
      }
    }
  }
  return out;
}

Volume rescale_unit(const Volume& v) {
  Volume out = v;
  out.data = v.data.clone();
  auto d = out.data.mutable_data();
  float lo = d[0], hi = d[0];
  for (float x : d) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi == lo) {
    for (auto& x : d) x = 0.0f;  // constant volume maps to all zeros
    return out;
  }
  const float inv = 1.0f / (hi - lo);
  for (auto& x : d) x = (x - lo) * inv;
  return out;
}

Volume resize_to(const Volume& v, Tri target) {
  Volume out = v;
  out.data = resize_tensor(v.data, target, v.kind == VolKind::mask);
  // Physical span per axis is preserved under resizing.
  out.spacing.z = v.spacing.z * static_cast<float>(v.depth()) / static_cast<float>(target.d);
  out.spacing.y = v.spacing.y * static_cast<float>(v.height()) / static_cast<float>(target.h);
  out.spacing.x = v.spacing.x * static_cast<float>(v.width()) / static_cast<float>(target.w);
  return out;
}

Volume preprocess_chain(const Volume& v, const PreprocessParams& p) {
  Volume r = resample_spacing(v, p.target_spacing);
  if (v.kind == VolKind::image) {
    r = percentile_clip(r, p.lo_pct, p.hi_pct);
    r = clahe(r, p.clahe_clip_limit, p.clahe_tiles_h, p.clahe_tiles_w, p.clahe_bins);
    r = rescale_unit(r);
  }
  return resize_to(r, p.target_size);
}

}  // namespace exact
