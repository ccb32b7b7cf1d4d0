#pragma once

#include <cstdint>
#include <string>

#include "exact/tensor.hpp"

namespace exact {

enum class VolKind : std::uint8_t { image = 0, mask = 1, map = 2 };

// Voxel spacing in millimeters per voxel: x along W, y along H, z along D.
struct Spacing {
  float x = 1.0f;
  float y = 1.0f;
  float z = 1.0f;
  bool operator==(const Spacing&) const = default;
};

// Dense [C,D,H,W] float volume with spacing metadata. Masks carry only {0,1};
// fully preprocessed images lie in [0,1].
struct Volume {
  Tensor<float> data;
  Spacing spacing;
  VolKind kind = VolKind::image;

  std::int64_t channels() const { return data.extent(0); }
  std::int64_t depth() const { return data.extent(1); }
  std::int64_t height() const { return data.extent(2); }
  std::int64_t width() const { return data.extent(3); }

  void check_invariants() const;
};

Volume make_volume(Extents shape, Spacing spacing, VolKind kind);

// EVL1 container: magic 'E','V','L','1'; u32le C,D,H,W; f32le sx,sy,sz;
// u8 kind; 3 zero pad bytes; then C*D*H*W f32le in (c,d,h,w) row-major order.
Volume load_volume(const std::string& path);
void save_volume(const Volume& v, const std::string& path);

// Binary PPM (P6) axial-slice overlay: grayscale base with mask voxels
// blended toward red. Used by the localize command for eyeballing.
void write_overlay_ppm(const Volume& image, const Volume& mask, std::int64_t slice,
                       const std::string& path);

}  // namespace exact
