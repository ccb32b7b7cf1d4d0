#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exact/errors.hpp"

namespace exact {

// Disease list, per-disease prevalence and disease-to-organ assignment.
// Organ channels 0..M-1 are specific structures; channel M is the global
// foreground channel (union of all organs). k_high is tied to k_low by the
// volumetric ratio between the two AAmap scales (2^3 for adjacent stages).
struct TaskSchema {
  std::vector<std::string> disease_names;
  std::vector<double> prevalence;        // f_i in (0,1)
  std::vector<std::int64_t> organ_channel;  // c(i), index into M+1 mask channels
  std::int64_t mask_channels = 3;        // M+1
  std::int64_t k_low = 3;
  std::int64_t k_high = 24;

  std::int64_t diseases() const { return static_cast<std::int64_t>(disease_names.size()); }
  std::int64_t global_channel() const { return mask_channels - 1; }

  void validate() const;

  // Two ellipsoidal organs plus the global channel, three diseases; the third
  // disease is assigned to the global channel.
  static TaskSchema default_phantom();
};

struct LossWeights {
  double lambda_init = 2.0;
  double gamma = 10.0;
  double lambda_floor = 0.5;
  double eps = 1e-5;
  double w_neg = 1.0;
  double tversky_alpha = 0.3;
  double tversky_beta = 0.7;
  double focal_alpha = 0.75;
  double focal_gamma = 2.0;
  double hybrid_w_tversky = 1.0;
  double hybrid_w_focal = 0.5;

  void validate() const;
};

}  // namespace exact
