#pragma once

#include "exact/network.hpp"
#include "exact/schema.hpp"
#include "exact/tape.hpp"

namespace exact {

// Average soft Dice over channels: 1 - (1/C) sum_c 2*sum(S_c*G_c) / (sum(S_c)+sum(G_c)+eps).
template <typename T>
Var<T> soft_dice_loss(Var<T> probs, Var<T> masks, double eps);

// Anatomically constrained AAmap: the organ probability channel is brought to
// the map's resolution by nearest-neighbor interpolation and multiplied in.
template <typename T>
Var<T> constrain_aamap(Var<T> aamap_channel, Var<T> organ_channel);

// Positive-class weight (1 - f) / f derived from training prevalence.
double pos_weight(double prevalence);

// Weighted binary cross-entropy on a pooled bag score, eps inside the logs.
template <typename T>
Var<T> mil_bce_loss(Var<T> pooled, int y, double w_pos, double w_neg, double eps);

// Full anomaly objective: constrain -> top-k mean -> weighted BCE, for every
// disease at both AAmap scales, averaged over N * |scales| terms.
template <typename T>
Var<T> anomaly_loss(Var<T> aamap_low, Var<T> aamap_high, Var<T> seg_probs,
                    const std::vector<int>& labels, const TaskSchema& schema,
                    const LossWeights& weights);

// Exponential-decay segmentation weight with a floor of lambda_floor.
double lambda_schedule(double t, const LossWeights& weights);

template <typename T>
Var<T> total_loss(Var<T> seg_loss, Var<T> abn_loss, double t, const LossWeights& weights);

template <typename T>
Var<T> tversky_loss(Var<T> probs, Var<T> mask, double alpha, double beta, double eps);

template <typename T>
Var<T> focal_loss(Var<T> probs, Var<T> mask, double alpha_f, double gamma_f, double eps);

template <typename T>
Var<T> hybrid_seg_loss(Var<T> probs, Var<T> mask, const LossWeights& weights);

}  // namespace exact
