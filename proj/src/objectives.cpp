#include "exact/objectives.hpp"

#include <cmath>

namespace exact {

template <typename T>
Var<T> soft_dice_loss(Var<T> probs, Var<T> masks, double eps) {
  const Extents& sp = probs.value().shape();
  if (sp != masks.value().shape())
    fail(ErrCode::shape_mismatch, "soft_dice_loss: shapes " + shape_str(sp) + " vs " +
                                      shape_str(masks.value().shape()));
  const std::int64_t C = sp[0];
  Var<T> acc;
  for (std::int64_t c = 0; c < C; ++c) {
    Var<T> s = select_channels(probs, c, 1);
    Var<T> g = select_channels(masks, c, 1);
    Var<T> num = mul_scalar(sum(mul(s, g)), T(2));
    Var<T> den = add_scalar(add(sum(s), sum(g)), static_cast<T>(eps));
    Var<T> dice = div(num, den);
    acc = c == 0 ? dice : add(acc, dice);
  }
  return affine(acc, static_cast<T>(-1.0 / static_cast<double>(C)), T(1));
}

template <typename T>
Var<T> constrain_aamap(Var<T> aamap_channel, Var<T> organ_channel) {
  const Extents& a = aamap_channel.value().shape();
  const Extents& s = organ_channel.value().shape();
  if (a.size() != 4 || s.size() != 4 || a[0] != s[0])
    fail(ErrCode::shape_mismatch, "constrain_aamap: channel shapes " + shape_str(a) + " vs " + shape_str(s));
  Var<T> organ = organ_channel;
  if (a != s) organ = resize_nearest(organ_channel, Tri{a[1], a[2], a[3]});
  return mul(aamap_channel, organ);
}

double pos_weight(double prevalence) {
  if (!(prevalence > 0.0 && prevalence < 1.0))
    fail(ErrCode::config_invalid, "pos_weight: prevalence must lie in (0,1), got " + std::to_string(prevalence));
  return (1.0 - prevalence) / prevalence;
}

template <typename T>
Var<T> mil_bce_loss(Var<T> pooled, int y, double w_pos, double w_neg, double eps) {
  if (pooled.value().size() != 1)
    fail(ErrCode::shape_mismatch, "mil_bce_loss: pooled score must be scalar");
  if (y == 1) return mul_scalar(log(add_scalar(pooled, static_cast<T>(eps))), static_cast<T>(-w_pos));
  return mul_scalar(log(add_scalar(affine(pooled, T(-1), T(1)), static_cast<T>(eps))),
                    static_cast<T>(-w_neg));
}

template <typename T>
Var<T> anomaly_loss(Var<T> aamap_low, Var<T> aamap_high, Var<T> seg_probs,
                    const std::vector<int>& labels, const TaskSchema& schema,
                    const LossWeights& weights) {
  schema.validate();
  const std::int64_t N = schema.diseases();
  if (static_cast<std::int64_t>(labels.size()) != N)
    fail(ErrCode::shape_mismatch, "anomaly_loss: label vector length " +
                                      std::to_string(labels.size()) + " != disease count " +
                                      std::to_string(N));
  if (seg_probs.value().extent(0) != schema.mask_channels)
    fail(ErrCode::shape_mismatch, "anomaly_loss: segmentation channels " +
                                      std::to_string(seg_probs.value().extent(0)) +
                                      " != schema mask channels " +
                                      std::to_string(schema.mask_channels));
  struct Scale {
    Var<T> maps;
    std::int64_t k;
  };
  const Scale scales[2] = {{aamap_low, schema.k_low}, {aamap_high, schema.k_high}};
  Var<T> acc;
  bool first = true;
  for (std::int64_t i = 0; i < N; ++i) {
    const std::int64_t c = schema.organ_channel[static_cast<std::size_t>(i)];
    const double w_pos = pos_weight(schema.prevalence[static_cast<std::size_t>(i)]);
    Var<T> organ = select_channels(seg_probs, c, 1);
    for (const Scale& sc : scales) {
      if (sc.k > sc.maps.value().size() / sc.maps.value().extent(0))
        fail(ErrCode::config_invalid, "anomaly_loss: k=" + std::to_string(sc.k) +
                                          " exceeds the voxel count at scale " +
                                          shape_str(sc.maps.value().shape()));
      Var<T> constrained = constrain_aamap(select_channels(sc.maps, i, 1), organ);
      Var<T> pooled = topk_mean(constrained, sc.k);
      Var<T> term = mil_bce_loss(pooled, labels[static_cast<std::size_t>(i)], w_pos, weights.w_neg,
                                 weights.eps);
      acc = first ? term : add(acc, term);
      first = false;
    }
  }
  return mul_scalar(acc, static_cast<T>(1.0 / (static_cast<double>(N) * 2.0)));
}

double lambda_schedule(double t, const LossWeights& weights) {
  if (!(t >= 0.0 && t <= 1.0))
    fail(ErrCode::config_invalid, "lambda_schedule: t must lie in [0,1], got " + std::to_string(t));
  return std::max(weights.lambda_init * std::exp(-weights.gamma * t), weights.lambda_floor);
}

template <typename T>
Var<T> total_loss(Var<T> seg_loss, Var<T> abn_loss, double t, const LossWeights& weights) {
  return add(mul_scalar(seg_loss, static_cast<T>(lambda_schedule(t, weights))), abn_loss);
}

template <typename T>
Var<T> tversky_loss(Var<T> probs, Var<T> mask, double alpha, double beta, double eps) {
  if (probs.value().shape() != mask.value().shape())
    fail(ErrCode::shape_mismatch, "tversky_loss: shape mismatch");
  Var<T> tp = sum(mul(probs, mask));
  Var<T> fp = sum(mul(probs, affine(mask, T(-1), T(1))));
  Var<T> fn = sum(mul(affine(probs, T(-1), T(1)), mask));
  Var<T> num = add_scalar(tp, static_cast<T>(eps));
  Var<T> den = add_scalar(
      add(tp, add(mul_scalar(fp, static_cast<T>(alpha)), mul_scalar(fn, static_cast<T>(beta)))),
      static_cast<T>(eps));
  return affine(div(num, den), T(-1), T(1));
}

template <typename T>
Var<T> focal_loss(Var<T> probs, Var<T> mask, double alpha_f, double gamma_f, double eps) {
  if (probs.value().shape() != mask.value().shape())
    fail(ErrCode::shape_mismatch, "focal_loss: shape mismatch");
  // p_t = p where g = 1, (1 - p) where g = 0, via p_t = (2g-1)*p + (1-g).
  Tape<T>& tape = *probs.tape;
  Tensor<T> c1(mask.value().shape()), c2(mask.value().shape());
  auto g = mask.value().data();
  auto c1d = c1.mutable_data();
  auto c2d = c2.mutable_data();
  for (std::int64_t i = 0; i < c1.size(); ++i) {
    c1d[i] = T(2) * g[i] - T(1);
    c2d[i] = T(1) - g[i];
  }
  Var<T> pt = add(mul(probs, tape.constant(c1)), tape.constant(c2));
  Var<T> modulator = pow_const(affine(pt, T(-1), T(1)), gamma_f);
  Var<T> logpt = log(add_scalar(pt, static_cast<T>(eps)));
  return mul_scalar(mean(mul(modulator, logpt)), static_cast<T>(-alpha_f));
}

template <typename T>
Var<T> hybrid_seg_loss(Var<T> probs, Var<T> mask, const LossWeights& w) {
  Var<T> tv = tversky_loss(probs, mask, w.tversky_alpha, w.tversky_beta, w.eps);
  Var<T> fo = focal_loss(probs, mask, w.focal_alpha, w.focal_gamma, w.eps);
  return add(mul_scalar(tv, static_cast<T>(w.hybrid_w_tversky)),
             mul_scalar(fo, static_cast<T>(w.hybrid_w_focal)));
}

#define EXACT_INSTANTIATE_OBJECTIVES(T)                                                       \
  template Var<T> soft_dice_loss(Var<T>, Var<T>, double);                                     \
  template Var<T> constrain_aamap(Var<T>, Var<T>);                                            \
  template Var<T> mil_bce_loss(Var<T>, int, double, double, double);                          \
  template Var<T> anomaly_loss(Var<T>, Var<T>, Var<T>, const std::vector<int>&,               \
                               const TaskSchema&, const LossWeights&);                        \
  template Var<T> total_loss(Var<T>, Var<T>, double, const LossWeights&);                     \
  template Var<T> tversky_loss(Var<T>, Var<T>, double, double, double);                       \
  template Var<T> focal_loss(Var<T>, Var<T>, double, double, double);                         \
  template Var<T> hybrid_seg_loss(Var<T>, Var<T>, const LossWeights&);

EXACT_INSTANTIATE_OBJECTIVES(float)
EXACT_INSTANTIATE_OBJECTIVES(double)

#undef EXACT_INSTANTIATE_OBJECTIVES

}  // namespace exact
