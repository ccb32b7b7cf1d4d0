#include "exact/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace exact {

std::string shape_str(const Extents& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrCode::shape_mismatch, std::string(op) + ": shapes " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

template <typename T>
void require_rank4(const Tensor<T>& a, const char* op) {
  if (a.rank() != 4)
    fail(ErrCode::shape_mismatch, std::string(op) + ": expected [C,D,H,W], got " + shape_str(a.shape()));
}

// Records a node computing `out` from parents, with `back` receiving the
// output gradient and the parent gradient buffers it asked for.
template <typename T, typename Back>
Var<T> record(Tape<T>& tape, Tensor<T> out, std::initializer_list<Var<T>> parents, Back back) {
  typename Tape<T>::Node n;
  n.value = std::move(out);
  bool needs = false;
  for (Var<T> p : parents) needs = needs || tape.needs_grad(p);
  n.needs_grad = needs;
  if (needs) n.backward = back;
  return tape.push(std::move(n));
}

}  // namespace

// ---- elementwise ------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data(), y = b.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) o[i] = x[i] + y[i];
  return record(tape, std::move(out), {a, b}, [a, b](Tape<T>& t, const std::vector<T>& g) {
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data(), y = b.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) o[i] = x[i] - y[i];
  return record(tape, std::move(out), {a, b}, [a, b](Tape<T>& t, const std::vector<T>& g) {
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data(), y = b.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) o[i] = x[i] * y[i];
  return record(tape, std::move(out), {a, b}, [a, b](Tape<T>& t, const std::vector<T>& g) {
    auto x = t.value(a).data(), y = t.value(b).data();
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  require_same_shape(a.value(), b.value(), "div");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data(), y = b.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) o[i] = x[i] / y[i];
  return record(tape, std::move(out), {a, b}, [a, b](Tape<T>& t, const std::vector<T>& g) {
    auto x = t.value(a).data(), y = t.value(b).data();
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / y[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * x[i] / (y[i] * y[i]);
    }
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T c) {
  Tape<T>& tape = *a.tape;
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) o[i] = x[i] + c;
  return record(tape, std::move(out), {a}, [a](Tape<T>& t, const std::vector<T>& g) {
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Var<T> mul_scalar(Var<T> a, T c) {
  Tape<T>& tape = *a.tape;
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) o[i] = x[i] * c;
  return record(tape, std::move(out), {a}, [a, c](Tape<T>& t, const std::vector<T>& g) {
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
}

template <typename T>
Var<T> affine(Var<T> a, T scale, T shift) {
  Tape<T>& tape = *a.tape;
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) o[i] = scale * x[i] + shift;
  return record(tape, std::move(out), {a}, [a, scale](Tape<T>& t, const std::vector<T>& g) {
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * scale;
  });
}

template <typename T>
Var<T> log(Var<T> a) {
  Tape<T>& tape = *a.tape;
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > T(0))) fail(ErrCode::numeric, "log of nonpositive value");
    o[i] = std::log(x[i]);
  }
  return record(tape, std::move(out), {a}, [a](Tape<T>& t, const std::vector<T>& g) {
    auto x = t.value(a).data();
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

template <typename T>
Var<T> pow_const(Var<T> a, double p) {
  Tape<T>& tape = *a.tape;
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) o[i] = static_cast<T>(std::pow(double(x[i]), p));
  return record(tape, std::move(out), {a}, [a, p](Tape<T>& t, const std::vector<T>& g) {
    auto x = t.value(a).data();
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * static_cast<T>(p * std::pow(double(x[i]), p - 1.0));
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tape<T>& tape = *a.tape;
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) {
    T v = x[i];
    if (v >= T(0)) {
      o[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      T e = std::exp(v);
      o[i] = e / (T(1) + e);
    }
  }
  Tensor<T> saved = out;  // shares the buffer
  return record(tape, std::move(out), {a}, [a, saved](Tape<T>& t, const std::vector<T>& g) {
    auto y = saved.data();
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var<T> relu_leaky(Var<T> a, double slope) {
  Tape<T>& tape = *a.tape;
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data();
  const T s = static_cast<T>(slope);
  for (std::int64_t i = 0; i < out.size(); ++i) o[i] = x[i] > T(0) ? x[i] : s * x[i];
  return record(tape, std::move(out), {a}, [a, s](Tape<T>& t, const std::vector<T>& g) {
    auto x = t.value(a).data();
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (x[i] > T(0) ? T(1) : s);
  });
}

template <typename T>
Var<T> detach(Var<T> a) {
  typename Tape<T>::Node n;
  n.value = a.value();
  n.needs_grad = false;
  return a.tape->push(std::move(n));
}

// ---- reductions -------------------------------------------------------------

template <typename T>
Var<T> sum(Var<T> a) {
  Tape<T>& tape = *a.tape;
  T acc = T(0);
  for (T v : a.value().data()) acc += v;
  return record(tape, Tensor<T>::scalar(acc), {a}, [a](Tape<T>& t, const std::vector<T>& g) {
    auto& ga = t.grad_buffer(a.id);
    for (auto& v : ga) v += g[0];
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  Tape<T>& tape = *a.tape;
  T acc = T(0);
  for (T v : a.value().data()) acc += v;
  const T inv = T(1) / static_cast<T>(a.value().size());
  return record(tape, Tensor<T>::scalar(acc * inv), {a},
                [a, inv](Tape<T>& t, const std::vector<T>& g) {
                  auto& ga = t.grad_buffer(a.id);
                  for (auto& v : ga) v += g[0] * inv;
                });
}

template <typename T>
Var<T> mean_spatial(Var<T> a) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& x = a.value();
  if (x.rank() < 2) fail(ErrCode::shape_mismatch, "mean_spatial: rank must be >= 2");
  const std::int64_t c = x.extent(0);
  const std::int64_t v = x.size() / c;
  Tensor<T> out({c});
  auto o = out.mutable_data();
  auto d = x.data();
  for (std::int64_t i = 0; i < c; ++i) {
    T acc = T(0);
    for (std::int64_t j = 0; j < v; ++j) acc += d[i * v + j];
    o[i] = acc / static_cast<T>(v);
  }
  return record(tape, std::move(out), {a}, [a, c, v](Tape<T>& t, const std::vector<T>& g) {
    auto& ga = t.grad_buffer(a.id);
    const T inv = T(1) / static_cast<T>(v);
    for (std::int64_t i = 0; i < c; ++i)
      for (std::int64_t j = 0; j < v; ++j) ga[static_cast<std::size_t>(i * v + j)] += g[static_cast<std::size_t>(i)] * inv;
  });
}

template <typename T>
Var<T> topk_mean(Var<T> a, std::int64_t k) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& x = a.value();
  const std::int64_t n = x.size();
  if (n == 0) fail(ErrCode::shape_mismatch, "topk_mean: empty voxel set");
  if (k < 1 || k > n)
    fail(ErrCode::shape_mismatch,
         "topk_mean: k=" + std::to_string(k) + " out of range [1," + std::to_string(n) + "]");
  auto d = x.data();
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  // Ties broken by lowest linear index: strict total order, so the selected
  // set is unique and runs are reproducible.
  auto better = [&](std::int64_t i, std::int64_t j) {
    return d[i] > d[j] || (d[i] == d[j] && i < j);
  };
  std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(), better);
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  T acc = T(0);
  for (auto i : idx) acc += d[i];
  const T inv = T(1) / static_cast<T>(k);
  return record(tape, Tensor<T>::scalar(acc * inv), {a},
                [a, idx = std::move(idx), inv](Tape<T>& t, const std::vector<T>& g) {
                  auto& ga = t.grad_buffer(a.id);
                  for (auto i : idx) ga[static_cast<std::size_t>(i)] += g[0] * inv;
                });
}

// ---- normalization ----------------------------------------------------------

template <typename T>
Var<T> instance_norm(Var<T> a, double eps) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& x = a.value();
  if (x.rank() < 2) fail(ErrCode::shape_mismatch, "instance_norm: rank must be >= 2");
  const std::int64_t c = x.extent(0);
  const std::int64_t v = x.size() / c;
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  auto d = x.data();
  std::vector<T> inv_std(static_cast<std::size_t>(c));
  for (std::int64_t i = 0; i < c; ++i) {
    T m = T(0);
    for (std::int64_t j = 0; j < v; ++j) m += d[i * v + j];
    m /= static_cast<T>(v);
    T var = T(0);
    for (std::int64_t j = 0; j < v; ++j) {
      T dlt = d[i * v + j] - m;
      var += dlt * dlt;
    }
    var /= static_cast<T>(v);
    T s = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[static_cast<std::size_t>(i)] = s;
    for (std::int64_t j = 0; j < v; ++j) o[i * v + j] = (d[i * v + j] - m) * s;
  }
  Tensor<T> saved = out;  // shares the buffer
  return record(tape, std::move(out), {a},
                [a, saved, c, v, inv_std = std::move(inv_std)](Tape<T>& t,
                                                               const std::vector<T>& g) {
                  auto y = saved.data();
                  auto& ga = t.grad_buffer(a.id);
                  for (std::int64_t i = 0; i < c; ++i) {
                    T gm = T(0), gym = T(0);
                    for (std::int64_t j = 0; j < v; ++j) {
                      gm += g[static_cast<std::size_t>(i * v + j)];
                      gym += g[static_cast<std::size_t>(i * v + j)] * y[i * v + j];
                    }
                    gm /= static_cast<T>(v);
                    gym /= static_cast<T>(v);
                    const T s = inv_std[static_cast<std::size_t>(i)];
                    for (std::int64_t j = 0; j < v; ++j) {
                      std::size_t ix = static_cast<std::size_t>(i * v + j);
                      ga[ix] += s * (g[ix] - gm - y[ix] * gym);
                    }
                  }
                });
}

// ---- structure --------------------------------------------------------------

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) fail(ErrCode::shape_mismatch, "concat_channels: no inputs");
  Tape<T>& tape = *parts[0].tape;
  Extents shape = parts[0].value().shape();
  std::int64_t total_c = 0;
  for (const Var<T>& p : parts) {
    const Extents& s = p.value().shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1))
      fail(ErrCode::shape_mismatch, "concat_channels: trailing dims differ");
    total_c += s[0];
  }
  shape[0] = total_c;
  Tensor<T> out(shape);
  auto o = out.mutable_data();
  std::int64_t off = 0;
  for (const Var<T>& p : parts) {
    auto d = p.value().data();
    std::copy(d.begin(), d.end(), o.begin() + off);
    off += p.value().size();
  }
  typename Tape<T>::Node n;
  n.value = std::move(out);
  bool needs = false;
  for (const Var<T>& p : parts) needs = needs || tape.needs_grad(p);
  n.needs_grad = needs;
  if (needs) {
    std::vector<Var<T>> ps(parts.begin(), parts.end());
    n.backward = [ps = std::move(ps)](Tape<T>& t, const std::vector<T>& g) {
      std::int64_t off = 0;
      for (const Var<T>& p : ps) {
        const std::int64_t sz = t.value(p).size();
        if (t.needs_grad(p)) {
          auto& gp = t.grad_buffer(p.id);
          for (std::int64_t i = 0; i < sz; ++i) gp[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(off + i)];
        }
        off += sz;
      }
    };
  }
  return tape.push(std::move(n));
}

template <typename T>
Var<T> select_channels(Var<T> a, std::int64_t first, std::int64_t count) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& x = a.value();
  if (x.rank() < 1 || first < 0 || count < 1 || first + count > x.extent(0))
    fail(ErrCode::shape_mismatch, "select_channels: range [" + std::to_string(first) + "," +
                                      std::to_string(first + count) + ") outside " +
                                      shape_str(x.shape()));
  Extents shape = x.shape();
  shape[0] = count;
  const std::int64_t stride = x.size() / x.extent(0);
  Tensor<T> out(shape);
  auto o = out.mutable_data();
  auto d = x.data();
  std::copy(d.begin() + first * stride, d.begin() + (first + count) * stride, o.begin());
  return record(tape, std::move(out), {a},
                [a, first, stride](Tape<T>& t, const std::vector<T>& g) {
                  auto& ga = t.grad_buffer(a.id);
                  const std::int64_t off = first * stride;
                  for (std::size_t i = 0; i < g.size(); ++i) ga[static_cast<std::size_t>(off) + i] += g[i];
                });
}

template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias) {
  Tape<T>& tape = *x.tape;
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = bias.value();
  if (bv.rank() != 1 || bv.extent(0) != xv.extent(0))
    fail(ErrCode::shape_mismatch, "add_channel_bias: bias " + shape_str(bv.shape()) +
                                      " does not match channels of " + shape_str(xv.shape()));
  const std::int64_t c = xv.extent(0);
  const std::int64_t v = xv.size() / c;
  Tensor<T> out(xv.shape());
  auto o = out.mutable_data();
  auto d = xv.data();
  auto b = bv.data();
  for (std::int64_t i = 0; i < c; ++i)
    for (std::int64_t j = 0; j < v; ++j) o[i * v + j] = d[i * v + j] + b[i];
  return record(tape, std::move(out), {x, bias},
                [x, bias, c, v](Tape<T>& t, const std::vector<T>& g) {
                  if (t.needs_grad(x)) {
                    auto& gx = t.grad_buffer(x.id);
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                  }
                  if (t.needs_grad(bias)) {
                    auto& gb = t.grad_buffer(bias.id);
                    for (std::int64_t i = 0; i < c; ++i) {
                      T acc = T(0);
                      for (std::int64_t j = 0; j < v; ++j) acc += g[static_cast<std::size_t>(i * v + j)];
                      gb[static_cast<std::size_t>(i)] += acc;
                    }
                  }
                });
}

template <typename T>
Var<T> matvec(Var<T> w, Var<T> x) {
  Tape<T>& tape = *w.tape;
  const Tensor<T>& wv = w.value();
  const Tensor<T>& xv = x.value();
  if (wv.rank() != 2 || xv.rank() != 1 || wv.extent(1) != xv.extent(0))
    fail(ErrCode::shape_mismatch,
         "matvec: " + shape_str(wv.shape()) + " x " + shape_str(xv.shape()));
  const std::int64_t m = wv.extent(0), n = wv.extent(1);
  Tensor<T> out({m});
  auto o = out.mutable_data();
  auto wd = wv.data();
  auto xd = xv.data();
  for (std::int64_t i = 0; i < m; ++i) {
    T acc = T(0);
    for (std::int64_t j = 0; j < n; ++j) acc += wd[i * n + j] * xd[j];
    o[i] = acc;
  }
  return record(tape, std::move(out), {w, x}, [w, x, m, n](Tape<T>& t, const std::vector<T>& g) {
    auto wd = t.value(w).data();
    auto xd = t.value(x).data();
    if (t.needs_grad(w)) {
      auto& gw = t.grad_buffer(w.id);
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) gw[static_cast<std::size_t>(i * n + j)] += g[static_cast<std::size_t>(i)] * xd[j];
    }
    if (t.needs_grad(x)) {
      auto& gx = t.grad_buffer(x.id);
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) gx[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i)] * wd[i * n + j];
    }
  });
}

// ---- convolution ------------------------------------------------------------

namespace {

template <typename T>
void conv3d_accumulate(const T* __restrict in, std::int64_t ci_count, std::int64_t D,
                       std::int64_t H, std::int64_t W, const T* __restrict ker,
                       std::int64_t co_count, std::int64_t KD, std::int64_t KH, std::int64_t KW,
                       T* __restrict out, std::int64_t OD, std::int64_t OH, std::int64_t OW,
                       Tri s, Tri p) {
  for (std::int64_t co = 0; co < co_count; ++co) {
    for (std::int64_t ci = 0; ci < ci_count; ++ci) {
      const T* in_c = in + ci * D * H * W;
      T* out_c = out + co * OD * OH * OW;
      for (std::int64_t kz = 0; kz < KD; ++kz) {
        const std::int64_t od_lo = std::max<std::int64_t>(0, ceil_div(p.d - kz, s.d));
        const std::int64_t od_hi = std::min(OD, floor_div(D - 1 - kz + p.d, s.d) + 1);
        for (std::int64_t ky = 0; ky < KH; ++ky) {
          const std::int64_t oh_lo = std::max<std::int64_t>(0, ceil_div(p.h - ky, s.h));
          const std::int64_t oh_hi = std::min(OH, floor_div(H - 1 - ky + p.h, s.h) + 1);
          for (std::int64_t kx = 0; kx < KW; ++kx) {
            const std::int64_t ow_lo = std::max<std::int64_t>(0, ceil_div(p.w - kx, s.w));
            const std::int64_t ow_hi = std::min(OW, floor_div(W - 1 - kx + p.w, s.w) + 1);
            if (ow_lo >= ow_hi) continue;
            const T wgt = ker[(((co * ci_count + ci) * KD + kz) * KH + ky) * KW + kx];
            const std::int64_t woff = kx - p.w;
            for (std::int64_t od = od_lo; od < od_hi; ++od) {
              const std::int64_t id = od * s.d + kz - p.d;
              for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                const std::int64_t ih = oh * s.h + ky - p.h;
                const T* __restrict irow = in_c + (id * H + ih) * W + woff;
                T* __restrict orow = out_c + (od * OH + oh) * OW;
                if (s.w == 1) {
                  for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += wgt * irow[ow];
                } else {
                  for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += wgt * irow[ow * s.w];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_grad_input(T* __restrict din, std::int64_t ci_count, std::int64_t D, std::int64_t H,
                       std::int64_t W, const T* __restrict ker, std::int64_t co_count,
                       std::int64_t KD, std::int64_t KH, std::int64_t KW,
                       const T* __restrict gout, std::int64_t OD, std::int64_t OH, std::int64_t OW,
                       Tri s, Tri p) {
  for (std::int64_t co = 0; co < co_count; ++co) {
    for (std::int64_t ci = 0; ci < ci_count; ++ci) {
      T* din_c = din + ci * D * H * W;
      const T* g_c = gout + co * OD * OH * OW;
      for (std::int64_t kz = 0; kz < KD; ++kz) {
        const std::int64_t od_lo = std::max<std::int64_t>(0, ceil_div(p.d - kz, s.d));
        const std::int64_t od_hi = std::min(OD, floor_div(D - 1 - kz + p.d, s.d) + 1);
        for (std::int64_t ky = 0; ky < KH; ++ky) {
          const std::int64_t oh_lo = std::max<std::int64_t>(0, ceil_div(p.h - ky, s.h));
          const std::int64_t oh_hi = std::min(OH, floor_div(H - 1 - ky + p.h, s.h) + 1);
          for (std::int64_t kx = 0; kx < KW; ++kx) {
            const std::int64_t ow_lo = std::max<std::int64_t>(0, ceil_div(p.w - kx, s.w));
            const std::int64_t ow_hi = std::min(OW, floor_div(W - 1 - kx + p.w, s.w) + 1);
            if (ow_lo >= ow_hi) continue;
            const T wgt = ker[(((co * ci_count + ci) * KD + kz) * KH + ky) * KW + kx];
            const std::int64_t woff = kx - p.w;
            for (std::int64_t od = od_lo; od < od_hi; ++od) {
              const std::int64_t id = od * s.d + kz - p.d;
              for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                const std::int64_t ih = oh * s.h + ky - p.h;
                T* __restrict drow = din_c + (id * H + ih) * W + woff;
                const T* __restrict grow = g_c + (od * OH + oh) * OW;
                if (s.w == 1) {
                  for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) drow[ow] += wgt * grow[ow];
                } else {
                  for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) drow[ow * s.w] += wgt * grow[ow];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_grad_kernel(const T* __restrict in, std::int64_t ci_count, std::int64_t D,
                        std::int64_t H, std::int64_t W, T* __restrict dker, std::int64_t co_count,
                        std::int64_t KD, std::int64_t KH, std::int64_t KW,
                        const T* __restrict gout, std::int64_t OD, std::int64_t OH,
                        std::int64_t OW, Tri s, Tri p) {
  for (std::int64_t co = 0; co < co_count; ++co) {
    for (std::int64_t ci = 0; ci < ci_count; ++ci) {
      const T* in_c = in + ci * D * H * W;
      const T* g_c = gout + co * OD * OH * OW;
      for (std::int64_t kz = 0; kz < KD; ++kz) {
        const std::int64_t od_lo = std::max<std::int64_t>(0, ceil_div(p.d - kz, s.d));
        const std::int64_t od_hi = std::min(OD, floor_div(D - 1 - kz + p.d, s.d) + 1);
        for (std::int64_t ky = 0; ky < KH; ++ky) {
          const std::int64_t oh_lo = std::max<std::int64_t>(0, ceil_div(p.h - ky, s.h));
          const std::int64_t oh_hi = std::min(OH, floor_div(H - 1 - ky + p.h, s.h) + 1);
          for (std::int64_t kx = 0; kx < KW; ++kx) {
            const std::int64_t ow_lo = std::max<std::int64_t>(0, ceil_div(p.w - kx, s.w));
            const std::int64_t ow_hi = std::min(OW, floor_div(W - 1 - kx + p.w, s.w) + 1);
            if (ow_lo >= ow_hi) continue;
            T acc = T(0);
            const std::int64_t woff = kx - p.w;
            for (std::int64_t od = od_lo; od < od_hi; ++od) {
              const std::int64_t id = od * s.d + kz - p.d;
              for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                const std::int64_t ih = oh * s.h + ky - p.h;
                const T* __restrict irow = in_c + (id * H + ih) * W + woff;
                const T* __restrict grow = g_c + (od * OH + oh) * OW;
                if (s.w == 1) {
                  for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) acc += grow[ow] * irow[ow];
                } else {
                  for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) acc += grow[ow] * irow[ow * s.w];
                }
              }
            }
            dker[(((co * ci_count + ci) * KD + kz) * KH + ky) * KW + kx] += acc;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv3d(Var<T> input, Var<T> kernel, Tri stride, Tri pad) {
  Tape<T>& tape = *input.tape;
  const Tensor<T>& x = input.value();
  const Tensor<T>& k = kernel.value();
  require_rank4(x, "conv3d input");
  if (k.rank() != 5)
    fail(ErrCode::shape_mismatch, "conv3d kernel: expected [Co,Ci,kd,kh,kw], got " + shape_str(k.shape()));
  if (k.extent(1) != x.extent(0))
    fail(ErrCode::shape_mismatch, "conv3d: input channels " + std::to_string(x.extent(0)) +
                                      " vs kernel channels " + std::to_string(k.extent(1)));
  if (stride.d < 1 || stride.h < 1 || stride.w < 1)
    fail(ErrCode::shape_mismatch, "conv3d: stride components must be >= 1");
  const std::int64_t D = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::int64_t KD = k.extent(2), KH = k.extent(3), KW = k.extent(4);
  if (KD > D + 2 * pad.d || KH > H + 2 * pad.h || KW > W + 2 * pad.w)
    fail(ErrCode::shape_mismatch, "conv3d: kernel " + shape_str(k.shape()) +
                                      " larger than padded input " + shape_str(x.shape()));
  const std::int64_t OD = (D + 2 * pad.d - KD) / stride.d + 1;
  const std::int64_t OH = (H + 2 * pad.h - KH) / stride.h + 1;
  const std::int64_t OW = (W + 2 * pad.w - KW) / stride.w + 1;
  Tensor<T> out({k.extent(0), OD, OH, OW});
  conv3d_accumulate(x.data().data(), x.extent(0), D, H, W, k.data().data(), k.extent(0), KD, KH,
                    KW, out.mutable_data().data(), OD, OH, OW, stride, pad);
  return record(tape, std::move(out), {input, kernel},
                [input, kernel, stride, pad, OD, OH, OW](Tape<T>& t, const std::vector<T>& g) {
                  const Tensor<T>& x = t.value(input);
                  const Tensor<T>& k = t.value(kernel);
                  if (t.needs_grad(input)) {
                    auto& gx = t.grad_buffer(input.id);
                    conv3d_grad_input(gx.data(), x.extent(0), x.extent(1), x.extent(2),
                                      x.extent(3), k.data().data(), k.extent(0), k.extent(2),
                                      k.extent(3), k.extent(4), g.data(), OD, OH, OW, stride, pad);
                  }
                  if (t.needs_grad(kernel)) {
                    auto& gk = t.grad_buffer(kernel.id);
                    conv3d_grad_kernel(x.data().data(), x.extent(0), x.extent(1), x.extent(2),
                                       x.extent(3), gk.data(), k.extent(0), k.extent(2),
                                       k.extent(3), k.extent(4), g.data(), OD, OH, OW, stride,
                                       pad);
                  }
                });
}

namespace {

// Transposed conv treated as scatter of kernel patches; kernel [Ci,Co,kd,kh,kw].
template <typename T>
void tconv3d_accumulate(const T* __restrict in, std::int64_t ci_count, std::int64_t D,
                        std::int64_t H, std::int64_t W, const T* __restrict ker,
                        std::int64_t co_count, std::int64_t KD, std::int64_t KH, std::int64_t KW,
                        T* __restrict out, std::int64_t OD, std::int64_t OH, std::int64_t OW,
                        Tri s) {
  for (std::int64_t ci = 0; ci < ci_count; ++ci) {
    for (std::int64_t co = 0; co < co_count; ++co) {
      const T* in_c = in + ci * D * H * W;
      T* out_c = out + co * OD * OH * OW;
      for (std::int64_t kz = 0; kz < KD; ++kz)
        for (std::int64_t ky = 0; ky < KH; ++ky)
          for (std::int64_t kx = 0; kx < KW; ++kx) {
            const T wgt = ker[(((ci * co_count + co) * KD + kz) * KH + ky) * KW + kx];
            for (std::int64_t id = 0; id < D; ++id) {
              const std::int64_t od = id * s.d + kz;
              for (std::int64_t ih = 0; ih < H; ++ih) {
                const std::int64_t oh = ih * s.h + ky;
                const T* __restrict irow = in_c + (id * H + ih) * W;
                T* __restrict orow = out_c + (od * OH + oh) * OW + kx;
                for (std::int64_t iw = 0; iw < W; ++iw) orow[iw * s.w] += wgt * irow[iw];
              }
            }
          }
    }
  }
}

template <typename T>
void tconv3d_grad_input(T* __restrict din, std::int64_t ci_count, std::int64_t D, std::int64_t H,
                        std::int64_t W, const T* __restrict ker, std::int64_t co_count,
                        std::int64_t KD, std::int64_t KH, std::int64_t KW,
                        const T* __restrict gout, std::int64_t OD, std::int64_t OH,
                        std::int64_t OW, Tri s) {
  for (std::int64_t ci = 0; ci < ci_count; ++ci) {
    for (std::int64_t co = 0; co < co_count; ++co) {
      T* din_c = din + ci * D * H * W;
      const T* g_c = gout + co * OD * OH * OW;
      for (std::int64_t kz = 0; kz < KD; ++kz)
        for (std::int64_t ky = 0; ky < KH; ++ky)
          for (std::int64_t kx = 0; kx < KW; ++kx) {
            const T wgt = ker[(((ci * co_count + co) * KD + kz) * KH + ky) * KW + kx];
            for (std::int64_t id = 0; id < D; ++id) {
              const std::int64_t od = id * s.d + kz;
              for (std::int64_t ih = 0; ih < H; ++ih) {
                const std::int64_t oh = ih * s.h + ky;
                T* __restrict drow = din_c + (id * H + ih) * W;
                const T* __restrict grow = g_c + (od * OH + oh) * OW + kx;
                for (std::int64_t iw = 0; iw < W; ++iw) drow[iw] += wgt * grow[iw * s.w];
              }
            }
          }
    }
  }
}

template <typename T>
void tconv3d_grad_kernel(const T* __restrict in, std::int64_t ci_count, std::int64_t D,
                         std::int64_t H, std::int64_t W, T* __restrict dker,
                         std::int64_t co_count, std::int64_t KD, std::int64_t KH, std::int64_t KW,
                         const T* __restrict gout, std::int64_t OD, std::int64_t OH,
                         std::int64_t OW, Tri s) {
  for (std::int64_t ci = 0; ci < ci_count; ++ci) {
    for (std::int64_t co = 0; co < co_count; ++co) {
      const T* in_c = in + ci * D * H * W;
      const T* g_c = gout + co * OD * OH * OW;
      for (std::int64_t kz = 0; kz < KD; ++kz)
        for (std::int64_t ky = 0; ky < KH; ++ky)
          for (std::int64_t kx = 0; kx < KW; ++kx) {
            T acc = T(0);
            for (std::int64_t id = 0; id < D; ++id) {
              const std::int64_t od = id * s.d + kz;
              for (std::int64_t ih = 0; ih < H; ++ih) {
                const std::int64_t oh = ih * s.h + ky;
                const T* __restrict irow = in_c + (id * H + ih) * W;
                const T* __restrict grow = g_c + (od * OH + oh) * OW + kx;
                for (std::int64_t iw = 0; iw < W; ++iw) acc += irow[iw] * grow[iw * s.w];
              }
            }
            dker[(((ci * co_count + co) * KD + kz) * KH + ky) * KW + kx] += acc;
          }
    }
  }
}

}  // namespace

template <typename T>
Var<T> transposed_conv3d(Var<T> input, Var<T> kernel, Tri stride) {
  Tape<T>& tape = *input.tape;
  const Tensor<T>& x = input.value();
  const Tensor<T>& k = kernel.value();
  require_rank4(x, "transposed_conv3d input");
  if (k.rank() != 5)
    fail(ErrCode::shape_mismatch,
         "transposed_conv3d kernel: expected [Ci,Co,kd,kh,kw], got " + shape_str(k.shape()));
  if (k.extent(0) != x.extent(0))
    fail(ErrCode::shape_mismatch,
         "transposed_conv3d: input channels " + std::to_string(x.extent(0)) +
             " vs kernel channels " + std::to_string(k.extent(0)));
  if (stride.d < 1 || stride.h < 1 || stride.w < 1)
    fail(ErrCode::shape_mismatch, "transposed_conv3d: stride components must be >= 1");
  const std::int64_t D = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::int64_t KD = k.extent(2), KH = k.extent(3), KW = k.extent(4);
  const std::int64_t OD = (D - 1) * stride.d + KD;
  const std::int64_t OH = (H - 1) * stride.h + KH;
  const std::int64_t OW = (W - 1) * stride.w + KW;
  Tensor<T> out({k.extent(1), OD, OH, OW});
  tconv3d_accumulate(x.data().data(), x.extent(0), D, H, W, k.data().data(), k.extent(1), KD, KH,
                     KW, out.mutable_data().data(), OD, OH, OW, stride);
  return record(tape, std::move(out), {input, kernel},
                [input, kernel, stride, OD, OH, OW](Tape<T>& t, const std::vector<T>& g) {
                  const Tensor<T>& x = t.value(input);
                  const Tensor<T>& k = t.value(kernel);
                  if (t.needs_grad(input)) {
                    auto& gx = t.grad_buffer(input.id);
                    tconv3d_grad_input(gx.data(), x.extent(0), x.extent(1), x.extent(2),
                                       x.extent(3), k.data().data(), k.extent(1), k.extent(2),
                                       k.extent(3), k.extent(4), g.data(), OD, OH, OW, stride);
                  }
                  if (t.needs_grad(kernel)) {
                    auto& gk = t.grad_buffer(kernel.id);
                    tconv3d_grad_kernel(x.data().data(), x.extent(0), x.extent(1), x.extent(2),
                                        x.extent(3), gk.data(), k.extent(1), k.extent(2),
                                        k.extent(3), k.extent(4), g.data(), OD, OH, OW, stride);
                  }
                });
}

// ---- resampling ---------------------------------------------------------------

namespace {

struct LinearTap {
  std::int64_t i0, i1;
  double f;  // weight of i1
};

inline LinearTap linear_tap(std::int64_t o, std::int64_t in, std::int64_t out) {
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  std::int64_t i0 = std::min(static_cast<std::int64_t>(src), in - 1);
  std::int64_t i1 = std::min(i0 + 1, in - 1);
  return {i0, i1, src - static_cast<double>(i0)};
}

inline std::int64_t nearest_tap(std::int64_t o, std::int64_t in, std::int64_t out) {
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  auto idx = static_cast<std::int64_t>(std::floor((static_cast<double>(o) + 0.5) * scale));
  return std::clamp<std::int64_t>(idx, 0, in - 1);
}

void check_target(Tri t) {
  if (t.d < 1 || t.h < 1 || t.w < 1)
    fail(ErrCode::shape_mismatch, "resize: target extents must be >= 1");
}

}  // namespace

template <typename T>
Var<T> resize_trilinear(Var<T> a, Tri target) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& x = a.value();
  require_rank4(x, "resize_trilinear");
  check_target(target);
  const std::int64_t C = x.extent(0), D = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::int64_t OD = target.d, OH = target.h, OW = target.w;
  std::vector<LinearTap> td(static_cast<std::size_t>(OD)), th(static_cast<std::size_t>(OH)),
      tw(static_cast<std::size_t>(OW));
  for (std::int64_t i = 0; i < OD; ++i) td[static_cast<std::size_t>(i)] = linear_tap(i, D, OD);
  for (std::int64_t i = 0; i < OH; ++i) th[static_cast<std::size_t>(i)] = linear_tap(i, H, OH);
  for (std::int64_t i = 0; i < OW; ++i) tw[static_cast<std::size_t>(i)] = linear_tap(i, W, OW);
  Tensor<T> out({C, OD, OH, OW});
  auto o = out.mutable_data();
  auto d = x.data();
  for (std::int64_t c = 0; c < C; ++c) {
    const T* src = d.data() + c * D * H * W;
    T* dst = o.data() + c * OD * OH * OW;
    for (std::int64_t z = 0; z < OD; ++z) {
      const auto& az = td[static_cast<std::size_t>(z)];
      for (std::int64_t y = 0; y < OH; ++y) {
        const auto& ay = th[static_cast<std::size_t>(y)];
        for (std::int64_t w = 0; w < OW; ++w) {
          const auto& ax = tw[static_cast<std::size_t>(w)];
          double acc = 0.0;
          for (int cz = 0; cz < 2; ++cz) {
            const std::int64_t iz = cz ? az.i1 : az.i0;
            const double wz = cz ? az.f : 1.0 - az.f;
            for (int cy = 0; cy < 2; ++cy) {
              const std::int64_t iy = cy ? ay.i1 : ay.i0;
              const double wy = cy ? ay.f : 1.0 - ay.f;
              for (int cx = 0; cx < 2; ++cx) {
                const std::int64_t ix = cx ? ax.i1 : ax.i0;
                const double wx = cx ? ax.f : 1.0 - ax.f;
                acc += wz * wy * wx * static_cast<double>(src[(iz * H + iy) * W + ix]);
              }
            }
          }
          dst[(z * OH + y) * OW + w] = static_cast<T>(acc);
        }
      }
    }
  }
  return record(tape, std::move(out), {a},
                [a, C, D, H, W, OD, OH, OW, td = std::move(td), th = std::move(th),
                 tw = std::move(tw)](Tape<T>& t, const std::vector<T>& g) {
                  auto& ga = t.grad_buffer(a.id);
                  for (std::int64_t c = 0; c < C; ++c) {
                    T* gsrc = ga.data() + c * D * H * W;
                    const T* gdst = g.data() + c * OD * OH * OW;
                    for (std::int64_t z = 0; z < OD; ++z) {
                      const auto& az = td[static_cast<std::size_t>(z)];
                      for (std::int64_t y = 0; y < OH; ++y) {
                        const auto& ay = th[static_cast<std::size_t>(y)];
                        for (std::int64_t w = 0; w < OW; ++w) {
                          const auto& ax = tw[static_cast<std::size_t>(w)];
                          const T gv = gdst[(z * OH + y) * OW + w];
                          for (int cz = 0; cz < 2; ++cz) {
                            const std::int64_t iz = cz ? az.i1 : az.i0;
                            const double wz = cz ? az.f : 1.0 - az.f;
                            for (int cy = 0; cy < 2; ++cy) {
                              const std::int64_t iy = cy ? ay.i1 : ay.i0;
                              const double wy = cy ? ay.f : 1.0 - ay.f;
                              for (int cx = 0; cx < 2; ++cx) {
                                const std::int64_t ix = cx ? ax.i1 : ax.i0;
                                const double wx = cx ? ax.f : 1.0 - ax.f;
                                gsrc[(iz * H + iy) * W + ix] += static_cast<T>(wz * wy * wx) * gv;
                              }
                            }
                          }
                        }
                      }
                    }
                  }
                });
}

template <typename T>
Var<T> resize_nearest(Var<T> a, Tri target) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& x = a.value();
  require_rank4(x, "resize_nearest");
  check_target(target);
  const std::int64_t C = x.extent(0), D = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::int64_t OD = target.d, OH = target.h, OW = target.w;
  std::vector<std::int64_t> td(static_cast<std::size_t>(OD)), th(static_cast<std::size_t>(OH)),
      tw(static_cast<std::size_t>(OW));
  for (std::int64_t i = 0; i < OD; ++i) td[static_cast<std::size_t>(i)] = nearest_tap(i, D, OD);
  for (std::int64_t i = 0; i < OH; ++i) th[static_cast<std::size_t>(i)] = nearest_tap(i, H, OH);
  for (std::int64_t i = 0; i < OW; ++i) tw[static_cast<std::size_t>(i)] = nearest_tap(i, W, OW);
  Tensor<T> out({C, OD, OH, OW});
  auto o = out.mutable_data();
  auto d = x.data();
  for (std::int64_t c = 0; c < C; ++c) {
    const T* src = d.data() + c * D * H * W;
    T* dst = o.data() + c * OD * OH * OW;
    for (std::int64_t z = 0; z < OD; ++z)
      for (std::int64_t y = 0; y < OH; ++y)
        for (std::int64_t w = 0; w < OW; ++w)
          dst[(z * OH + y) * OW + w] =
              src[(td[static_cast<std::size_t>(z)] * H + th[static_cast<std::size_t>(y)]) * W +
                  tw[static_cast<std::size_t>(w)]];
  }
  return record(tape, std::move(out), {a},
                [a, C, D, H, W, OD, OH, OW, td = std::move(td), th = std::move(th),
                 tw = std::move(tw)](Tape<T>& t, const std::vector<T>& g) {
                  auto& ga = t.grad_buffer(a.id);
                  for (std::int64_t c = 0; c < C; ++c) {
                    T* gsrc = ga.data() + c * D * H * W;
                    const T* gdst = g.data() + c * OD * OH * OW;
                    for (std::int64_t z = 0; z < OD; ++z)
                      for (std::int64_t y = 0; y < OH; ++y)
                        for (std::int64_t w = 0; w < OW; ++w)
                          gsrc[(td[static_cast<std::size_t>(z)] * H +
                                th[static_cast<std::size_t>(y)]) *
                                   W +
                               tw[static_cast<std::size_t>(w)]] += gdst[(z * OH + y) * OW + w];
                  }
                });
}

// ---- instantiations -----------------------------------------------------------

#define EXACT_INSTANTIATE_OPS(T)                                                   \
  template Var<T> add(Var<T>, Var<T>);                                             \
  template Var<T> sub(Var<T>, Var<T>);                                             \
  template Var<T> mul(Var<T>, Var<T>);                                             \
  template Var<T> div(Var<T>, Var<T>);                                             \
  template Var<T> add_scalar(Var<T>, T);                                           \
  template Var<T> mul_scalar(Var<T>, T);                                           \
  template Var<T> affine(Var<T>, T, T);                                            \
  template Var<T> log(Var<T>);                                                     \
  template Var<T> pow_const(Var<T>, double);                                       \
  template Var<T> sigmoid(Var<T>);                                                 \
  template Var<T> relu_leaky(Var<T>, double);                                      \
  template Var<T> detach(Var<T>);                                                  \
  template Var<T> sum(Var<T>);                                                     \
  template Var<T> mean(Var<T>);                                                    \
  template Var<T> mean_spatial(Var<T>);                                            \
  template Var<T> topk_mean(Var<T>, std::int64_t);                                 \
  template Var<T> instance_norm(Var<T>, double);                                   \
  template Var<T> concat_channels(std::span<const Var<T>>);                        \
  template Var<T> select_channels(Var<T>, std::int64_t, std::int64_t);             \
  template Var<T> add_channel_bias(Var<T>, Var<T>);                                \
  template Var<T> matvec(Var<T>, Var<T>);                                          \
  template Var<T> conv3d(Var<T>, Var<T>, Tri, Tri);                                \
  template Var<T> transposed_conv3d(Var<T>, Var<T>, Tri);                          \
  template Var<T> resize_trilinear(Var<T>, Tri);                                   \
  template Var<T> resize_nearest(Var<T>, Tri);

EXACT_INSTANTIATE_OPS(float)
EXACT_INSTANTIATE_OPS(double)

#undef EXACT_INSTANTIATE_OPS

}  // namespace exact
