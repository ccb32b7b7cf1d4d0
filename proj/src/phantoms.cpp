#include "exact/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "exact/rng.hpp"
#include "json.hpp"

namespace exact {

namespace {

struct Ellipsoid {
  double cz, cy, cx;
  double rz, ry, rx;

  double norm2(double z, double y, double x) const {
    const double dz = (z - cz) / rz, dy = (y - cy) / ry, dx = (x - cx) / rx;
    return dz * dz + dy * dy + dx * dx;
  }
};

}  // namespace

void PhantomSpec::validate(const TaskSchema& schema) const {
  schema.validate();
  if (organs < 1) fail(ErrCode::config_invalid, "phantom: at least one organ required");
  if (organs + 1 != schema.mask_channels)
    fail(ErrCode::config_invalid, "phantom: organs+1 (" + std::to_string(organs + 1) +
                                      ") must equal schema mask channels (" +
                                      std::to_string(schema.mask_channels) + ")");
  if (!(lesion_radius_min > 0.0 && lesion_radius_max >= lesion_radius_min))
    fail(ErrCode::config_invalid, "phantom: invalid lesion radius range");
  if (!(lesion_delta_min > 0.0 && lesion_delta_max >= lesion_delta_min))
    fail(ErrCode::config_invalid, "phantom: invalid lesion intensity delta range");
  if (max_lesions_per_disease < 1)
    fail(ErrCode::config_invalid, "phantom: max_lesions_per_disease must be >= 1");
  if (!(max_lesion_prevalence > 0.0 && max_lesion_prevalence <= 0.05))
    fail(ErrCode::config_invalid, "phantom: max_lesion_prevalence must lie in (0, 0.05]");
  if (noise_sigma < 0.0) fail(ErrCode::config_invalid, "phantom: noise_sigma must be >= 0");
  if (!(train_fraction >= 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0))
    fail(ErrCode::config_invalid, "phantom: split fractions must be nonnegative and sum to <= 1");
  const double min_extent = static_cast<double>(std::min({size.d, size.h, size.w}));
  if (min_extent < 8.0) fail(ErrCode::config_invalid, "phantom: extents must be >= 8 voxels");
}

PhantomSample generate_sample(const PhantomSpec& spec, const TaskSchema& schema,
                              std::uint64_t sample_index) {
  spec.validate(schema);
  Rng rng = Rng::substream(spec.seed, sample_index);
  const std::int64_t D = spec.size.d, H = spec.size.h, W = spec.size.w;
  const std::int64_t M = spec.organs;
  const std::int64_t N = schema.diseases();
  const std::int64_t plane = H * W, total = D * plane;

  PhantomSample s;
  s.labels.resize(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i)
    s.labels[static_cast<std::size_t>(i)] =
        rng.next_bernoulli(schema.prevalence[static_cast<std::size_t>(i)]) ? 1 : 0;

  // Fixed-pose organs, jittered per sample.
  std::vector<Ellipsoid> organs;
  for (std::int64_t m = 0; m < M; ++m) {
    Ellipsoid e;
    const double wfrac = static_cast<double>(m + 1) / static_cast<double>(M + 1);
    e.cz = 0.5 * static_cast<double>(D) + rng.next_range(-0.03, 0.03) * static_cast<double>(D);
    e.cy = 0.5 * static_cast<double>(H) + rng.next_range(-0.03, 0.03) * static_cast<double>(H);
    e.cx = wfrac * static_cast<double>(W) + rng.next_range(-0.03, 0.03) * static_cast<double>(W);
    e.rz = 0.30 * static_cast<double>(D) * rng.next_range(0.9, 1.1);
    e.ry = 0.34 * static_cast<double>(H) * rng.next_range(0.9, 1.1);
    e.rx = (0.33 / static_cast<double>(M + 1)) * static_cast<double>(W) * 2.0 * rng.next_range(0.9, 1.1);
    organs.push_back(e);
    const double min_semi = std::min({e.rz, e.ry, e.rx});
    if (min_semi < spec.lesion_radius_max)
      fail(ErrCode::config_invalid,
           "phantom: organ " + std::to_string(m) + " too small (min semi-axis " +
               std::to_string(min_semi) + ") for lesion radius " +
               std::to_string(spec.lesion_radius_max));
  }

  s.organ_masks = make_volume({M + 1, D, H, W}, Spacing{}, VolKind::mask);
  s.image = make_volume({1, D, H, W}, Spacing{}, VolKind::image);
  s.lesion_masks = make_volume({N, D, H, W}, Spacing{}, VolKind::mask);
  auto om = s.organ_masks.data.mutable_data();
  auto img = s.image.data.mutable_data();
  auto lm = s.lesion_masks.data.mutable_data();

  const double background = 0.12;
  for (std::int64_t z = 0; z < D; ++z)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        const std::int64_t at = z * plane + y * W + x;
        double intensity = background;
        bool any = false;
        for (std::int64_t m = 0; m < M; ++m) {
          if (organs[static_cast<std::size_t>(m)].norm2(static_cast<double>(z), static_cast<double>(y),
                                                        static_cast<double>(x)) <= 1.0) {
            om[m * total + at] = 1.0f;
            any = true;
            intensity = std::max(intensity, 0.40 + 0.12 * static_cast<double>(m));
          }
        }
        if (any) om[M * total + at] = 1.0f;  // global = union of organs
        img[at] = static_cast<float>(intensity);
      }

  // Lesions: every positive disease receives at least one; further lesions
  // are budgeted by max_lesion_prevalence.
  const auto budget = static_cast<std::int64_t>(spec.max_lesion_prevalence * static_cast<double>(total));
  std::int64_t used = 0;
  for (std::int64_t i = 0; i < N; ++i) {
    if (s.labels[static_cast<std::size_t>(i)] == 0) continue;
    const std::int64_t c = schema.organ_channel[static_cast<std::size_t>(i)];
    const int n_lesions = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.max_lesions_per_disease)));
    for (int l = 0; l < n_lesions; ++l) {
      const std::int64_t host =
          c < M ? c : static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(M)));
      const Ellipsoid& org = organs[static_cast<std::size_t>(host)];
      Ellipsoid les;
      les.rz = rng.next_range(spec.lesion_radius_min, spec.lesion_radius_max);
      les.ry = rng.next_range(spec.lesion_radius_min, spec.lesion_radius_max);
      les.rx = rng.next_range(spec.lesion_radius_min, spec.lesion_radius_max);
      // Center well inside the host organ (rejection sampling, bounded).
      bool placed = false;
      for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        les.cz = org.cz + rng.next_range(-org.rz, org.rz);
        les.cy = org.cy + rng.next_range(-org.ry, org.ry);
        les.cx = org.cx + rng.next_range(-org.rx, org.rx);
        placed = org.norm2(les.cz, les.cy, les.cx) <= 0.45;
      }
      if (!placed) {
        les.cz = org.cz;
        les.cy = org.cy;
        les.cx = org.cx;
      }
      const double delta = rng.next_range(spec.lesion_delta_min, spec.lesion_delta_max);

      // Count voxels first so the budget check precedes any mutation.
      const auto z0 = static_cast<std::int64_t>(std::floor(les.cz - les.rz));
      const auto z1 = static_cast<std::int64_t>(std::ceil(les.cz + les.rz));
      const auto y0 = static_cast<std::int64_t>(std::floor(les.cy - les.ry));
      const auto y1 = static_cast<std::int64_t>(std::ceil(les.cy + les.ry));
      const auto x0 = static_cast<std::int64_t>(std::floor(les.cx - les.rx));
      const auto x1 = static_cast<std::int64_t>(std::ceil(les.cx + les.rx));
      std::int64_t count = 0;
      for (std::int64_t z = std::max<std::int64_t>(0, z0); z <= std::min(D - 1, z1); ++z)
        for (std::int64_t y = std::max<std::int64_t>(0, y0); y <= std::min(H - 1, y1); ++y)
          for (std::int64_t x = std::max<std::int64_t>(0, x0); x <= std::min(W - 1, x1); ++x) {
            const std::int64_t at = z * plane + y * W + x;
            if (om[host * total + at] == 1.0f &&
                les.norm2(static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)) <= 1.0)
              ++count;
          }
      const bool mandatory = l == 0;
      if (count == 0 || (!mandatory && used + count > budget)) continue;
      used += count;
      for (std::int64_t z = std::max<std::int64_t>(0, z0); z <= std::min(D - 1, z1); ++z)
        for (std::int64_t y = std::max<std::int64_t>(0, y0); y <= std::min(H - 1, y1); ++y)
          for (std::int64_t x = std::max<std::int64_t>(0, x0); x <= std::min(W - 1, x1); ++x) {
            const std::int64_t at = z * plane + y * W + x;
            if (om[host * total + at] != 1.0f) continue;
            const double rho2 =
                les.norm2(static_cast<double>(z), static_cast<double>(y), static_cast<double>(x));
            if (rho2 > 1.0) continue;
            lm[i * total + at] = 1.0f;
            img[at] = static_cast<float>(img[at] + delta * std::exp(-2.0 * rho2));
          }
    }
  }

  for (std::int64_t at = 0; at < total; ++at)
    img[at] = std::clamp(static_cast<float>(img[at] + rng.next_gauss() * spec.noise_sigma), 0.0f, 1.0f);

  return s;
}

DatasetManifest generate_dataset(const PhantomSpec& spec, const TaskSchema& schema,
                                 std::int64_t n_samples, const std::string& out_dir) {
  spec.validate(schema);
  if (n_samples < 1) fail(ErrCode::config_invalid, "generate_dataset: n_samples must be >= 1");
  std::filesystem::create_directories(out_dir);
  const auto n_train = static_cast<std::int64_t>(spec.train_fraction * static_cast<double>(n_samples));
  const auto n_val = static_cast<std::int64_t>(spec.val_fraction * static_cast<double>(n_samples));

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  char name[64];
  for (std::int64_t idx = 0; idx < n_samples; ++idx) {
    PhantomSample s = generate_sample(spec, schema, static_cast<std::uint64_t>(idx));
    ManifestRecord r;
    std::snprintf(name, sizeof(name), "img_%05lld.evl1", static_cast<long long>(idx));
    r.volume_path = name;
    save_volume(s.image, (std::filesystem::path(out_dir) / name).string());
    std::snprintf(name, sizeof(name), "org_%05lld.evl1", static_cast<long long>(idx));
    r.organ_mask_path = name;
    save_volume(s.organ_masks, (std::filesystem::path(out_dir) / name).string());
    std::snprintf(name, sizeof(name), "les_%05lld.evl1", static_cast<long long>(idx));
    r.lesion_mask_path = name;
    save_volume(s.lesion_masks, (std::filesystem::path(out_dir) / name).string());
    r.labels = s.labels;
    r.split = idx < n_train ? "train" : (idx < n_train + n_val ? "val" : "test");
    manifest.records.push_back(std::move(r));
  }
  manifest.save((std::filesystem::path(out_dir) / "manifest.tsv").string());

  nlohmann::json j;
  j["size"] = {spec.size.d, spec.size.h, spec.size.w};
  j["organs"] = spec.organs;
  j["lesion_radius"] = {spec.lesion_radius_min, spec.lesion_radius_max};
  j["lesion_delta"] = {spec.lesion_delta_min, spec.lesion_delta_max};
  j["max_lesions_per_disease"] = spec.max_lesions_per_disease;
  j["max_lesion_prevalence"] = spec.max_lesion_prevalence;
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  j["n_samples"] = n_samples;
  j["diseases"] = schema.disease_names;
  j["prevalence"] = schema.prevalence;
  j["organ_channel"] = schema.organ_channel;
  std::ofstream prov((std::filesystem::path(out_dir) / "phantom_spec.json").string(), std::ios::trunc);
  prov << j.dump(2) << '\n';

  return manifest;
}

}  // namespace exact
