#pragma once

#include "exact/manifest.hpp"
#include "exact/schema.hpp"
#include "exact/volume.hpp"

namespace exact {

// Deterministic synthetic stand-in for the CT corpus: jittered ellipsoidal
// organs, intensity-shifted ellipsoidal lesions with soft edges, Gaussian
// noise. Lesion masks are emitted for evaluation only; training consumes the
// image, organ masks and image-level labels.
struct PhantomSpec {
  Tri size{16, 32, 32};
  std::int64_t organs = 2;  // M specific organs; a global union channel is appended
  double lesion_radius_min = 1.6;  // ellipsoid semi-axes, voxels
  double lesion_radius_max = 3.2;
  double lesion_delta_min = 0.25;
  double lesion_delta_max = 0.40;
  int max_lesions_per_disease = 2;
  double max_lesion_prevalence = 0.03;  // voxel budget per volume
  double noise_sigma = 0.07;
  std::uint64_t seed = 1234;
  double train_fraction = 0.80;
  double val_fraction = 0.10;

  void validate(const TaskSchema& schema) const;
};

struct PhantomSample {
  Volume image;         // [1,D,H,W], values in [0,1]
  Volume organ_masks;   // [M+1,D,H,W], channel M = union of organs
  Volume lesion_masks;  // [N,D,H,W]
  std::vector<int> labels;
};

// Pure function of (spec, schema, sample_index): embarrassingly parallel.
PhantomSample generate_sample(const PhantomSpec& spec, const TaskSchema& schema,
                              std::uint64_t sample_index);

// Writes EVL1 volumes, the manifest (split tags assigned positionally from
// the configured fractions) and a JSON provenance sidecar. Returns the manifest.
DatasetManifest generate_dataset(const PhantomSpec& spec, const TaskSchema& schema,
                                 std::int64_t n_samples, const std::string& out_dir);

}  // namespace exact
