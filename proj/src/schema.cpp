#include "exact/schema.hpp"

namespace exact {

void TaskSchema::validate() const {
  const auto n = diseases();
  if (n < 1) fail(ErrCode::config_invalid, "schema: at least one disease required");
  if (static_cast<std::int64_t>(prevalence.size()) != n ||
      static_cast<std::int64_t>(organ_channel.size()) != n)
    fail(ErrCode::config_invalid, "schema: prevalence/organ_channel length must equal disease count");
  if (mask_channels < 2) fail(ErrCode::config_invalid, "schema: mask_channels must be >= 2");
  for (std::int64_t i = 0; i < n; ++i) {
    const double f = prevalence[static_cast<std::size_t>(i)];
    if (!(f > 0.0 && f < 1.0))
      fail(ErrCode::config_invalid, "schema: prevalence of '" + disease_names[static_cast<std::size_t>(i)] +
                                        "' must lie in (0,1), got " + std::to_string(f));
    const std::int64_t c = organ_channel[static_cast<std::size_t>(i)];
    if (c < 0 || c >= mask_channels)
      fail(ErrCode::config_invalid, "schema: organ channel " + std::to_string(c) + " for '" +
                                        disease_names[static_cast<std::size_t>(i)] + "' out of range [0," +
                                        std::to_string(mask_channels) + ")");
  }
  if (k_low < 1) fail(ErrCode::config_invalid, "schema: k_low must be >= 1");
  // The two AAmap scales come from adjacent decoder stages: 2x per axis.
  if (k_high != k_low * 8)
    fail(ErrCode::config_invalid, "schema: k_high must equal k_low * 8 (volumetric scale ratio), got " +
                                      std::to_string(k_high));
}

TaskSchema TaskSchema::default_phantom() {
  TaskSchema s;
  s.disease_names = {"blob_left", "blob_right", "blob_diffuse"};
  s.prevalence = {0.3, 0.3, 0.3};
  s.organ_channel = {0, 1, 2};  // third disease constrained to the global channel
  s.mask_channels = 3;
  s.k_low = 3;
  s.k_high = 24;
  return s;
}

void LossWeights::validate() const {
  for (double v : {lambda_init, gamma, lambda_floor, eps, w_neg, tversky_alpha, tversky_beta,
                   focal_alpha, focal_gamma, hybrid_w_tversky, hybrid_w_focal})
    if (!(v > 0.0)) fail(ErrCode::config_invalid, "loss weights must all be positive");
}

}  // namespace exact
