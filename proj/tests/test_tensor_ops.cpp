#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "exact/gradcheck.hpp"
#include "exact/rng.hpp"
#include "exact/tape.hpp"

using namespace exact;

namespace {

using D = double;

Tensor<D> random_tensor(Extents shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor<D>::random_uniform(std::move(shape), rng, lo, hi);
}

// Scalarize a tensor-valued op with a fixed random weighting so grad_check
// exercises every output coordinate.
Var<D> weighted_sum(Tape<D>& tape, Var<D> v, const Tensor<D>& w) {
  return sum(mul(v, tape.constant(w)));
}

// Reference conv3d: six nested loops, one output element at a time.
Tensor<D> conv3d_naive(const Tensor<D>& in, const Tensor<D>& ker, Tri s, Tri p) {
  const auto Ci = in.extent(0), Dd = in.extent(1), Hh = in.extent(2), Ww = in.extent(3);
  const auto Co = ker.extent(0), KD = ker.extent(2), KH = ker.extent(3), KW = ker.extent(4);
  const auto OD = (Dd + 2 * p.d - KD) / s.d + 1;
  const auto OH = (Hh + 2 * p.h - KH) / s.h + 1;
  const auto OW = (Ww + 2 * p.w - KW) / s.w + 1;
  Tensor<D> out({Co, OD, OH, OW});
  auto o = out.mutable_data();
  auto x = in.data();
  auto k = ker.data();
  for (std::int64_t co = 0; co < Co; ++co)
    for (std::int64_t od = 0; od < OD; ++od)
      for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          double acc = 0;
          for (std::int64_t ci = 0; ci < Ci; ++ci)
            for (std::int64_t kz = 0; kz < KD; ++kz)
              for (std::int64_t ky = 0; ky < KH; ++ky)
                for (std::int64_t kx = 0; kx < KW; ++kx) {
                  const auto id = od * s.d + kz - p.d;
                  const auto ih = oh * s.h + ky - p.h;
                  const auto iw = ow * s.w + kx - p.w;
                  if (id < 0 || id >= Dd || ih < 0 || ih >= Hh || iw < 0 || iw >= Ww) continue;
                  acc += x[((ci * Dd + id) * Hh + ih) * Ww + iw] *
                         k[(((co * Ci + ci) * KD + kz) * KH + ky) * KW + kx];
                }
          o[((co * OD + od) * OH + oh) * OW + ow] = acc;
        }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("tensors");

TEST_CASE("conv3d identity kernel") {
  Rng rng(7);
  Tensor<D> in = random_tensor({2, 3, 4, 5}, rng);
  Tensor<D> ker({2, 2, 1, 1, 1});
  auto kd = ker.mutable_data();
  kd[0] = 1.0;  // [0][0]
  kd[3] = 1.0;  // [1][1]
  Tape<D> t;
  auto out = conv3d(t.constant(in), t.constant(ker), Tri{1, 1, 1}, Tri{0, 0, 0});
  REQUIRE(out.value().shape() == in.shape());
  auto a = out.value().data();
  auto b = in.data();
  for (std::int64_t i = 0; i < in.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("conv3d all-ones kernel on constant field") {
  const double c = 0.37;
  Tensor<D> in = Tensor<D>::full({1, 5, 5, 5}, c);
  Tensor<D> ker = Tensor<D>::full({1, 1, 3, 3, 3}, 1.0);
  Tape<D> t;
  auto out = conv3d(t.constant(in), t.constant(ker), Tri{1, 1, 1}, Tri{0, 0, 0});
  REQUIRE(out.value().shape() == Extents{1, 3, 3, 3});
  for (double v : out.value().data()) CHECK(v == doctest::Approx(27.0 * c).epsilon(1e-14));
}

TEST_CASE("conv3d matches six-loop oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    Rng r = Rng::substream(11, static_cast<std::uint64_t>(trial));
    const std::int64_t ci = 1 + static_cast<std::int64_t>(r.next_below(3));
    const std::int64_t co = 1 + static_cast<std::int64_t>(r.next_below(3));
    const std::int64_t dd = 2 + static_cast<std::int64_t>(r.next_below(3));
    const std::int64_t hh = 2 + static_cast<std::int64_t>(r.next_below(3));
    const std::int64_t ww = 2 + static_cast<std::int64_t>(r.next_below(3));
    const std::int64_t k = 1 + static_cast<std::int64_t>(r.next_below(2));
    Tri stride{1 + static_cast<std::int64_t>(r.next_below(2)), 1, 1 + static_cast<std::int64_t>(r.next_below(2))};
    Tri pad{static_cast<std::int64_t>(r.next_below(2)), static_cast<std::int64_t>(r.next_below(2)), 0};
    Tensor<D> in = random_tensor({ci, dd, hh, ww}, r);
    Tensor<D> ker = random_tensor({co, ci, k, k, k}, r);
    Tape<D> t;
    auto out = conv3d(t.constant(in), t.constant(ker), stride, pad);
    Tensor<D> ref = conv3d_naive(in, ker, stride, pad);
    REQUIRE(out.value().shape() == ref.shape());
    auto a = out.value().data();
    auto b = ref.data();
    for (std::int64_t i = 0; i < ref.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
  }
}

TEST_CASE("conv3d shape errors") {
  Tape<D> t;
  Tensor<D> in({1, 2, 2, 2});
  Tensor<D> ker({1, 2, 1, 1, 1});  // channel mismatch
  CHECK_THROWS_AS(conv3d(t.constant(in), t.constant(ker), Tri{}, Tri{0, 0, 0}), Error);
  Tensor<D> big({1, 1, 4, 4, 4});  // kernel larger than input
  CHECK_THROWS_AS(conv3d(t.constant(in), t.constant(big), Tri{}, Tri{0, 0, 0}), Error);
}

TEST_CASE("topk_mean values and degenerate cases") {
  Tape<D> t;
  Tensor<D> v({4}, {0.9, 0.5, 0.3, 0.1});
  CHECK(topk_mean(t.constant(v), 1).value().item() == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(topk_mean(t.constant(v), 4).value().item() == doctest::Approx(0.45).epsilon(1e-15));
  CHECK(topk_mean(t.constant(v), 2).value().item() == doctest::Approx(0.7).epsilon(1e-15));
  CHECK_THROWS_AS(topk_mean(t.constant(v), 0), Error);
  CHECK_THROWS_AS(topk_mean(t.constant(v), 5), Error);
}

TEST_CASE("topk_mean backward routes 1/k to selected voxels only") {
  Tensor<D> v({6}, {0.2, 0.8, 0.8, 0.1, 0.9, 0.8});
  v.set_requires_grad(true);
  Tape<D> t;
  auto x = t.leaf(v);
  auto y = mul_scalar(topk_mean(x, 3), 2.0);  // upstream gradient 2
  t.backward(y);
  // Selected: 0.9 (idx 4) and the two lowest-index 0.8s (idx 1, 2).
  std::vector<double> expect{0, 2.0 / 3, 2.0 / 3, 0, 2.0 / 3, 0};
  int nonzero = 0;
  for (std::int64_t i = 0; i < 6; ++i) {
    CHECK(v.grad()[static_cast<std::size_t>(i)] == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-15));
    if (v.grad()[static_cast<std::size_t>(i)] != 0.0) ++nonzero;
  }
  CHECK(nonzero == 3);
}

TEST_CASE("sigmoid symmetry point and instance_norm moments") {
  Tape<D> t;
  CHECK(sigmoid(t.constant(Tensor<D>::scalar(0.0))).value().item() == doctest::Approx(0.5));

  Rng rng(3);
  Tensor<D> x = random_tensor({3, 2, 4, 4}, rng, -2.0, 5.0);
  auto y = instance_norm(t.constant(x), 1e-6);
  const std::int64_t v = 2 * 4 * 4;
  auto yd = y.value().data();
  for (std::int64_t c = 0; c < 3; ++c) {
    double m = 0, s2 = 0;
    for (std::int64_t j = 0; j < v; ++j) m += yd[c * v + j];
    m /= v;
    for (std::int64_t j = 0; j < v; ++j) s2 += (yd[c * v + j] - m) * (yd[c * v + j] - m);
    s2 /= v;
    CHECK(std::abs(m) < 1e-12);
    CHECK(s2 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("log rejects nonpositive input without guard") {
  Tape<D> t;
  Tensor<D> bad({2}, {0.5, 0.0});
  CHECK_THROWS_AS(log(t.constant(bad)), Error);
  Tensor<D> ok({2}, {0.5, 1.5});
  CHECK(log(t.constant(ok)).value().data()[1] == doctest::Approx(std::log(1.5)));
}

TEST_CASE("resize identity, constants and ramp oracle") {
  Rng rng(5);
  Tensor<D> x = random_tensor({2, 3, 4, 5}, rng);
  Tape<D> t;
  auto same = resize_trilinear(t.constant(x), Tri{3, 4, 5});
  auto a = same.value().data();
  auto b = x.data();
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));

  Tensor<D> c = Tensor<D>::full({1, 2, 2, 2}, 0.77);
  for (double v : resize_trilinear(t.constant(c), Tri{5, 3, 7}).value().data())
    CHECK(v == doctest::Approx(0.77).epsilon(1e-14));

  // Reference sampler oracle for the half-pixel convention, 1D along depth.
  Tensor<D> ramp({1, 4, 1, 1}, {0, 1, 2, 3});
  auto up = resize_trilinear(t.constant(ramp), Tri{8, 1, 1});
  std::vector<double> expect;
  for (int o = 0; o < 8; ++o) {
    double src = std::max(0.0, (o + 0.5) * (4.0 / 8.0) - 0.5);
    auto i0 = std::min<std::int64_t>(static_cast<std::int64_t>(src), 3);
    auto i1 = std::min<std::int64_t>(i0 + 1, 3);
    double f = src - static_cast<double>(i0);
    expect.push_back((1 - f) * static_cast<double>(i0) + f * static_cast<double>(i1));
  }
  auto u = up.value().data();
  for (int i = 0; i < 8; ++i) CHECK(u[i] == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-14));

  // Nearest keeps a {0,1} mask binary.
  Tensor<D> mask({1, 2, 2, 2}, {0, 1, 1, 0, 0, 0, 1, 1});
  auto near = resize_nearest(t.constant(mask), Tri{3, 5, 4});
  for (double v : near.value().data()) CHECK((v == 0.0 || v == 1.0));
  CHECK_THROWS_AS(resize_nearest(t.constant(mask), Tri{0, 2, 2}), Error);
}

TEST_CASE("forward results bit-identical across runs") {
  Rng rng(13);
  Tensor<D> in = random_tensor({2, 4, 4, 4}, rng);
  Tensor<D> ker = random_tensor({3, 2, 3, 3, 3}, rng);
  auto run = [&] {
    Tape<D> t;
    auto out = instance_norm(
        sigmoid(conv3d(t.constant(in), t.constant(ker), Tri{1, 1, 1}, Tri{1, 1, 1})), 1e-5);
    auto d = out.value().data();
    return std::vector<double>(d.begin(), d.end());
  };
  auto r1 = run(), r2 = run();
  CHECK(std::equal(r1.begin(), r1.end(), r2.begin(), [](double x, double y) { return x == y; }));
}

TEST_CASE("tape rejects second backward without new forward") {
  Tensor<D> x({3}, {1, 2, 3});
  x.set_requires_grad(true);
  Tape<D> t;
  auto s = sum(t.leaf(x));
  t.backward(s);
  CHECK_THROWS_AS(t.backward(s), Error);
  auto s2 = sum(t.leaf(x));  // new forward clears the latch
  t.backward(s2);
}

TEST_CASE("grad_check on linear function is exact") {
  Rng rng(17);
  Tensor<D> p = random_tensor({2, 3, 3, 2}, rng);
  double err = grad_check<D>([](Tape<D>& t, Var<D> x) { return sum(x); }, p, 1e-5);
  CHECK(err <= 1e-10);
}

TEST_CASE("every primitive passes grad_check over 20 random shapes") {
  constexpr double kTol = 1e-6;
  constexpr double kEps = 1e-5;

  auto shape4 = [](Rng& r) {
    return Extents{1 + static_cast<std::int64_t>(r.next_below(3)),
                   2 + static_cast<std::int64_t>(r.next_below(3)),
                   2 + static_cast<std::int64_t>(r.next_below(3)),
                   2 + static_cast<std::int64_t>(r.next_below(3))};
  };

  for (int trial = 0; trial < 20; ++trial) {
    Rng r = Rng::substream(1000, static_cast<std::uint64_t>(trial));
    Extents sh = shape4(r);
    Tensor<D> point = random_tensor(sh, r);
    Tensor<D> w = random_tensor(sh, r);
    Tensor<D> other = random_tensor(sh, r);

    auto check = [&](const char* name, std::function<Var<D>(Tape<D>&, Var<D>)> fn,
                     const Tensor<D>& at) {
      double err = grad_check<D>(fn, at, kEps);
      INFO(name << " trial " << trial << " err " << err);
      CHECK(err <= kTol);
    };

    check("add", [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, add(x, t.constant(other)), w); }, point);
    check("sub", [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, sub(x, t.constant(other)), w); }, point);
    check("mul", [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, mul(x, t.constant(other)), w); }, point);
    check("mul_both",
          [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, mul(x, mul_scalar(x, 0.5)), w); },
          point);
    {
      Tensor<D> denom = random_tensor(sh, r, 0.5, 2.0);
      check("div", [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, div(x, t.constant(denom)), w); }, point);
      check("div_denom",
            [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, div(t.constant(other), x), w); },
            denom);
    }
    check("sigmoid", [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, sigmoid(x), w); }, point);
    {
      // Keep points away from the kink.
      Tensor<D> p2 = point.clone();
      for (auto& v : p2.mutable_data()) v += (v >= 0 ? 0.1 : -0.1);
      check("relu_leaky",
            [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, relu_leaky(x, 0.01), w); }, p2);
    }
    check("instance_norm",
          [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, instance_norm(x, 1e-3), w); }, point);
    check("sum", [&](Tape<D>& t, Var<D> x) { return sum(x); }, point);
    check("mean", [&](Tape<D>& t, Var<D> x) { return mean(x); }, point);
    {
      Tensor<D> wc = random_tensor({sh[0]}, r);
      check("mean_spatial",
            [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, mean_spatial(x), wc); }, point);
      Tensor<D> bias = random_tensor({sh[0]}, r);
      check("add_channel_bias",
            [&](Tape<D>& t, Var<D> x) {
              return weighted_sum(t, add_channel_bias(x, t.constant(bias)), w);
            },
            point);
      check("add_channel_bias_wrt_bias",
            [&](Tape<D>& t, Var<D> b) {
              return weighted_sum(t, add_channel_bias(t.constant(point), b), w);
            },
            bias);
    }
    {
      Tensor<D> pos = random_tensor(sh, r, 0.1, 2.0);
      check("log", [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, log(x), w); }, pos);
      check("pow_const",
            [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, pow_const(x, 2.0), w); }, pos);
    }
    {
      const std::int64_t n = point.size();
      const std::int64_t k = 1 + static_cast<std::int64_t>(r.next_below(static_cast<std::uint64_t>(n)));
      check("topk_mean", [&](Tape<D>& t, Var<D> x) { return topk_mean(x, k); }, point);
    }
    {
      Tri target{sh[1] + 1 + static_cast<std::int64_t>(r.next_below(3)),
                 std::max<std::int64_t>(1, sh[2] - 1),
                 sh[3] + static_cast<std::int64_t>(r.next_below(3))};
      Tensor<D> wt({sh[0], target.d, target.h, target.w});
      wt = random_tensor(wt.shape(), r);
      check("resize_trilinear",
            [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, resize_trilinear(x, target), wt); },
            point);
      check("resize_nearest",
            [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, resize_nearest(x, target), wt); },
            point);
    }
    {
      Tensor<D> ker = random_tensor({2, sh[0], 2, 2, 2}, r);
      Tri stride{1, 1, 1};
      Tri pad{1, 0, 1};
      Tape<D> probe;
      auto oshape =
          conv3d(probe.constant(point), probe.constant(ker), stride, pad).value().shape();
      Tensor<D> wc = random_tensor(oshape, r);
      check("conv3d_input",
            [&](Tape<D>& t, Var<D> x) {
              return weighted_sum(t, conv3d(x, t.constant(ker), stride, pad), wc);
            },
            point);
      check("conv3d_kernel",
            [&](Tape<D>& t, Var<D> k) {
              return weighted_sum(t, conv3d(t.constant(point), k, stride, pad), wc);
            },
            ker);
    }
    {
      Tensor<D> ker = random_tensor({sh[0], 2, 2, 2, 2}, r);
      Tri stride{2, 2, 2};
      Tape<D> probe;
      auto oshape =
          transposed_conv3d(probe.constant(point), probe.constant(ker), stride).value().shape();
      Tensor<D> wc = random_tensor(oshape, r);
      check("tconv3d_input",
            [&](Tape<D>& t, Var<D> x) {
              return weighted_sum(t, transposed_conv3d(x, t.constant(ker), stride), wc);
            },
            point);
      check("tconv3d_kernel",
            [&](Tape<D>& t, Var<D> k) {
              return weighted_sum(t, transposed_conv3d(t.constant(point), k, stride), wc);
            },
            ker);
    }
    {
      Extents cat = sh;
      cat[0] = sh[0] * 2;
      Tensor<D> wc({cat});
      wc = random_tensor(wc.shape(), r);
      check("concat_channels",
            [&](Tape<D>& t, Var<D> x) {
              std::vector<Var<D>> parts{x, t.constant(other)};
              return weighted_sum(t, concat_channels<D>(parts), wc);
            },
            point);
      Tensor<D> ws({1, sh[1], sh[2], sh[3]});
      ws = random_tensor(ws.shape(), r);
      check("select_channels",
            [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, select_channels(x, sh[0] - 1, 1), ws); },
            point);
    }
    {
      Tensor<D> m = random_tensor({3, 4}, r);
      Tensor<D> v = random_tensor({4}, r);
      Tensor<D> wv = random_tensor({3}, r);
      check("matvec_w",
            [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, matvec(x, t.constant(v)), wv); },
            m);
      check("matvec_x",
            [&](Tape<D>& t, Var<D> x) { return weighted_sum(t, matvec(t.constant(m), x), wv); },
            v);
    }
  }
}

TEST_SUITE_END();
