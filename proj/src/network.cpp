#include "exact/network.hpp"

#include <cstring>
#include <fstream>

#include "exact/detail/bytes.hpp"
#include "exact/rng.hpp"
#include "json.hpp"

namespace exact {

void ModelConfig::validate() const {
  if (stages() < 2)
    fail(ErrCode::config_invalid, "model: at least 2 stages required (two AAmap scales)");
  for (auto w : widths)
    if (w < 1) fail(ErrCode::config_invalid, "model: stage widths must be > 0");
  if (organ_channels < 2 || disease_channels < 1)
    fail(ErrCode::config_invalid, "model: organ_channels >= 2 and disease_channels >= 1 required");
  const std::int64_t div = std::int64_t(1) << (stages() - 1);
  for (std::int64_t e : {input_size.d, input_size.h, input_size.w})
    if (e % div != 0 || e / div < 2)
      fail(ErrCode::config_invalid,
           "model: input extents must be divisible by 2^(stages-1) with at least 2 voxels at the "
           "bottleneck; got extent " + std::to_string(e) + " for " + std::to_string(stages()) +
               " stages");
}

namespace {

template <typename T>
ConvParam<T> make_conv(Rng& rng, Extents wshape, std::int64_t fan_in, std::int64_t bias_ch) {
  ConvParam<T> p;
  p.w = Tensor<T>::random_gauss(std::move(wshape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
  if (bias_ch > 0) p.b = Tensor<T>({bias_ch});  // zeros
  return p;
}

template <typename T>
Var<T> conv_in_act(Tape<T>& tape, Var<T> x, ConvParam<T>& p, Tri stride, Tri pad,
                   const ModelConfig& cfg) {
  Var<T> c = conv3d(x, tape.leaf(p.w), stride, pad);
  if (p.b.defined()) c = add_channel_bias(c, tape.leaf(p.b));
  return relu_leaky(instance_norm(c, cfg.norm_eps), cfg.leaky_slope);
}

template <typename T>
Var<T> residual_block(Tape<T>& tape, Var<T> x, ConvParam<T>& p, const ModelConfig& cfg) {
  return add(x, conv_in_act(tape, x, p, Tri{1, 1, 1}, Tri{1, 1, 1}, cfg));
}

template <typename T>
Var<T> head_1x1(Tape<T>& tape, Var<T> x, ConvParam<T>& p) {
  return sigmoid(add_channel_bias(conv3d(x, tape.leaf(p.w), Tri{1, 1, 1}, Tri{0, 0, 0}), tape.leaf(p.b)));
}

}  // namespace

template <typename T>
Var<T> gsc_block(Tape<T>& tape, Var<T> x, Var<T> wa, Var<T> wb, Var<T> wg, Var<T> bg,
                 double slope, double norm_eps) {
  (void)tape;
  Var<T> a = relu_leaky(instance_norm(conv3d(x, wa, Tri{1, 1, 1}, Tri{1, 1, 1}), norm_eps), slope);
  Var<T> b = relu_leaky(instance_norm(conv3d(x, wb, Tri{1, 1, 1}, Tri{1, 1, 1}), norm_eps), slope);
  Var<T> gate = sigmoid(add_channel_bias(conv3d(x, wg, Tri{1, 1, 1}, Tri{0, 0, 0}), bg));
  return add(x, mul(add(a, b), gate));
}

template <typename T>
Model<T> build_model(const ModelConfig& config) {
  config.validate();
  Model<T> m;
  m.config = config;
  Rng rng(config.seed);
  const auto& w = config.widths;
  const std::int64_t S = config.stages();

  m.stem = make_conv<T>(rng, {w[0], 1, 3, 3, 3}, 1 * 27, 0);
  m.enc.resize(static_cast<std::size_t>(S));
  m.enc[0].res1 = make_conv<T>(rng, {w[0], w[0], 3, 3, 3}, w[0] * 27, 0);
  for (std::int64_t i = 1; i < S; ++i) {
    auto& st = m.enc[static_cast<std::size_t>(i)];
    st.down = make_conv<T>(rng, {w[i], w[i - 1], 3, 3, 3}, w[i - 1] * 27, 0);
    if (config.use_gsc) {
      st.gsc_a = make_conv<T>(rng, {w[i], w[i], 3, 3, 3}, w[i] * 27, 0);
      st.gsc_b = make_conv<T>(rng, {w[i], w[i], 3, 3, 3}, w[i] * 27, 0);
      st.gsc_gate = make_conv<T>(rng, {w[i], w[i], 1, 1, 1}, w[i], w[i]);
    }
    st.res1 = make_conv<T>(rng, {w[i], w[i], 3, 3, 3}, w[i] * 27, 0);
    st.res2 = make_conv<T>(rng, {w[i], w[i], 3, 3, 3}, w[i] * 27, 0);
  }

  m.seg_dec.resize(static_cast<std::size_t>(S - 1));
  m.anom_dec.resize(static_cast<std::size_t>(S - 1));
  for (std::int64_t i = 0; i < S - 1; ++i) {
    // Stage i decoders upsample stage-(i+1) features to stage-i resolution.
    auto& sd = m.seg_dec[static_cast<std::size_t>(i)];
    sd.up = make_conv<T>(rng, {w[i + 1], w[i], 2, 2, 2}, w[i + 1] * 8, w[i]);
    sd.conv = make_conv<T>(rng, {w[i], 2 * w[i], 3, 3, 3}, 2 * w[i] * 27, 0);
    auto& ad = m.anom_dec[static_cast<std::size_t>(i)];
    ad.up = make_conv<T>(rng, {w[i + 1], w[i], 2, 2, 2}, w[i + 1] * 8, w[i]);
    ad.conv = make_conv<T>(rng, {w[i], 3 * w[i], 3, 3, 3}, 3 * w[i] * 27, 0);
  }
  m.seg_head = make_conv<T>(rng, {config.organ_channels, w[0], 1, 1, 1}, w[0], config.organ_channels);
  m.anom_bottleneck = make_conv<T>(rng, {w[S - 1], w[S - 1], 3, 3, 3}, w[S - 1] * 27, 0);
  m.head_low = make_conv<T>(rng, {config.disease_channels, w[1], 1, 1, 1}, w[1], config.disease_channels);
  m.head_high = make_conv<T>(rng, {config.disease_channels, w[0], 1, 1, 1}, w[0], config.disease_channels);

  for (auto& [name, tensor] : m.named_params()) {
    (void)name;
    tensor->set_requires_grad(true);
  }
  return m;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Model<T>::named_params() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  auto push = [&out](const std::string& name, ConvParam<T>& p) {
    out.emplace_back(name + ".w", &p.w);
    if (p.b.defined()) out.emplace_back(name + ".b", &p.b);
  };
  push("stem", stem);
  push("enc0.res1", enc[0].res1);
  for (std::size_t i = 1; i < enc.size(); ++i) {
    const std::string base = "enc" + std::to_string(i);
    push(base + ".down", enc[i].down);
    if (config.use_gsc) {
      push(base + ".gsc.a", enc[i].gsc_a);
      push(base + ".gsc.b", enc[i].gsc_b);
      push(base + ".gsc.gate", enc[i].gsc_gate);
    }
    push(base + ".res1", enc[i].res1);
    push(base + ".res2", enc[i].res2);
  }
  for (std::size_t i = 0; i < seg_dec.size(); ++i) {
    const std::string base = "segdec" + std::to_string(i);
    push(base + ".up", seg_dec[i].up);
    push(base + ".conv", seg_dec[i].conv);
  }
  push("seg_head", seg_head);
  push("anom.bottleneck", anom_bottleneck);
  for (std::size_t i = 0; i < anom_dec.size(); ++i) {
    const std::string base = "anomdec" + std::to_string(i);
    push(base + ".up", anom_dec[i].up);
    push(base + ".conv", anom_dec[i].conv);
  }
  push("anom.head_low", head_low);
  push("anom.head_high", head_high);
  return out;
}

template <typename T>
void Model<T>::set_all_trainable(bool on) {
  for (auto& [name, tensor] : named_params()) {
    (void)name;
    tensor->set_requires_grad(on);
  }
}

template <typename T>
bool Model<T>::is_anomaly_param(const std::string& name) {
  return name.rfind("anom", 0) == 0;
}

template <typename T>
bool Model<T>::is_seg_decoder_param(const std::string& name) {
  return name.rfind("segdec", 0) == 0 || name.rfind("seg_head", 0) == 0;
}

template <typename T>
bool Model<T>::is_encoder_param(const std::string& name) {
  return name.rfind("enc", 0) == 0 || name.rfind("stem", 0) == 0;
}

template <typename T>
std::int64_t parameter_count(Model<T>& model) {
  std::int64_t n = 0;
  for (auto& [name, tensor] : model.named_params()) {
    (void)name;
    n += tensor->size();
  }
  return n;
}

template <typename T>
ForwardVars<T> forward(Model<T>& model, Tape<T>& tape, const Tensor<T>& image) {
  const ModelConfig& cfg = model.config;
  if (image.rank() != 4 || image.extent(0) != 1 || image.extent(1) != cfg.input_size.d ||
      image.extent(2) != cfg.input_size.h || image.extent(3) != cfg.input_size.w)
    fail(ErrCode::shape_mismatch,
         "forward: image " + shape_str(image.shape()) + " does not match configured input size");
  const std::int64_t S = cfg.stages();

  // Encoder.
  std::vector<Var<T>> e(static_cast<std::size_t>(S));
  Var<T> x = conv_in_act(tape, tape.constant(image), model.stem, Tri{1, 1, 1}, Tri{1, 1, 1}, cfg);
  e[0] = residual_block(tape, x, model.enc[0].res1, cfg);
  for (std::int64_t i = 1; i < S; ++i) {
    auto& st = model.enc[static_cast<std::size_t>(i)];
    Var<T> y = conv_in_act(tape, e[static_cast<std::size_t>(i - 1)], st.down, Tri{2, 2, 2}, Tri{1, 1, 1}, cfg);
    if (cfg.use_gsc)
      y = gsc_block(tape, y, tape.leaf(st.gsc_a.w), tape.leaf(st.gsc_b.w),
                    tape.leaf(st.gsc_gate.w), tape.leaf(st.gsc_gate.b), cfg.leaky_slope,
                    cfg.norm_eps);
    y = residual_block(tape, y, st.res1, cfg);
    y = residual_block(tape, y, st.res2, cfg);
    e[static_cast<std::size_t>(i)] = y;
  }

  // Organ segmentation decoder.
  std::vector<Var<T>> dseg(static_cast<std::size_t>(S));
  dseg[static_cast<std::size_t>(S - 1)] = e[static_cast<std::size_t>(S - 1)];
  for (std::int64_t i = S - 1; i >= 1; --i) {
    auto& dec = model.seg_dec[static_cast<std::size_t>(i - 1)];
    Var<T> up = transposed_conv3d(dseg[static_cast<std::size_t>(i)], tape.leaf(dec.up.w), Tri{2, 2, 2});
    up = add_channel_bias(up, tape.leaf(dec.up.b));
    std::vector<Var<T>> parts{up, e[static_cast<std::size_t>(i - 1)]};
    Var<T> cat = concat_channels<T>(parts);
    dseg[static_cast<std::size_t>(i - 1)] = conv_in_act(tape, cat, dec.conv, Tri{1, 1, 1}, Tri{1, 1, 1}, cfg);
  }
  Var<T> seg_probs = head_1x1(tape, dseg[0], model.seg_head);

  // Anomaly decoder: consumes encoder skips and same-resolution segmentation
  // features at every upsampling stage (one-way fusion).
  std::vector<Var<T>> danom(static_cast<std::size_t>(S));
  danom[static_cast<std::size_t>(S - 1)] =
      residual_block(tape, e[static_cast<std::size_t>(S - 1)], model.anom_bottleneck, cfg);
  for (std::int64_t i = S - 1; i >= 1; --i) {
    auto& dec = model.anom_dec[static_cast<std::size_t>(i - 1)];
    Var<T> up = transposed_conv3d(danom[static_cast<std::size_t>(i)], tape.leaf(dec.up.w), Tri{2, 2, 2});
    up = add_channel_bias(up, tape.leaf(dec.up.b));
    Var<T> fused = dseg[static_cast<std::size_t>(i - 1)];
    if (cfg.detach_fusion) fused = detach(fused);
    std::vector<Var<T>> parts{up, e[static_cast<std::size_t>(i - 1)], fused};
    Var<T> cat = concat_channels<T>(parts);
    danom[static_cast<std::size_t>(i - 1)] = conv_in_act(tape, cat, dec.conv, Tri{1, 1, 1}, Tri{1, 1, 1}, cfg);
  }
  ForwardVars<T> out;
  out.seg_probs = seg_probs;
  out.aamap_low = head_1x1(tape, danom[1], model.head_low);
  out.aamap_high = head_1x1(tape, danom[0], model.head_high);
  return out;
}

template <typename T>
Var<T> fuse_multiscale(Var<T> a_low, Var<T> a_high) {
  const Extents& lo = a_low.value().shape();
  const Extents& hi = a_high.value().shape();
  if (lo.size() != 4 || hi.size() != 4 || lo[0] != hi[0] || lo[1] * 2 != hi[1] ||
      lo[2] * 2 != hi[2] || lo[3] * 2 != hi[3])
    fail(ErrCode::shape_mismatch, "fuse_multiscale: low map " + shape_str(lo) +
                                      " must be half of high map " + shape_str(hi) +
                                      " along each spatial axis");
  return add(resize_trilinear(a_low, Tri{hi[1], hi[2], hi[3]}), a_high);
}

Tensor<float> fuse_multiscale_values(const Tensor<float>& a_low, const Tensor<float>& a_high) {
  Tape<float> tape;
  return fuse_multiscale(tape.constant(a_low), tape.constant(a_high)).value();
}

ModelOutputs run_inference(Model<float>& model, const Tensor<float>& image) {
  Tape<float> tape;
  ForwardVars<float> v = forward(model, tape, image);
  return ModelOutputs{v.seg_probs.value(), v.aamap_low.value(), v.aamap_high.value()};
}

// ---- checkpoint I/O -----------------------------------------------------------

namespace {
constexpr char kCkptMagic[4] = {'E', 'X', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const CheckpointPayload& payload, const std::string& path) {
  using detail::put_f32;
  using detail::put_u32;
  std::string out;
  out.append(kCkptMagic, 4);
  put_u32(out, kCkptVersion);
  put_u32(out, static_cast<std::uint32_t>(payload.meta_json.size()));
  out.append(payload.meta_json);
  put_u32(out, static_cast<std::uint32_t>(payload.params.size()));
  for (const auto& [name, tensor] : payload.params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::int64_t a = 0; a < tensor.rank(); ++a)
      put_u32(out, static_cast<std::uint32_t>(tensor.extent(a)));
    for (float v : tensor.data()) put_f32(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrCode::io, "cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrCode::io, "short write: " + path);
}

CheckpointPayload load_checkpoint(const std::string& path) {
  using detail::get_f32;
  using detail::get_u32;
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrCode::ckpt_not_found, "checkpoint file not found: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size())
      fail(ErrCode::parse, "EXCK parse error in " + path + ": truncated");
  };
  need(12);
  if (std::memcmp(bytes.data(), kCkptMagic, 4) != 0)
    fail(ErrCode::bad_magic, "EXCK parse error in " + path + ": bad magic");
  pos = 4;
  const std::uint32_t version = get_u32(bytes.data() + pos);
  pos += 4;
  if (version != kCkptVersion)
    fail(ErrCode::parse, "EXCK parse error in " + path + ": unsupported version " + std::to_string(version));
  const std::uint32_t meta_len = get_u32(bytes.data() + pos);
  pos += 4;
  need(meta_len);
  CheckpointPayload payload;
  payload.meta_json.assign(reinterpret_cast<const char*>(bytes.data() + pos), meta_len);
  pos += meta_len;
  need(4);
  const std::uint32_t n_params = get_u32(bytes.data() + pos);
  pos += 4;
  for (std::uint32_t i = 0; i < n_params; ++i) {
    need(4);
    const std::uint32_t name_len = get_u32(bytes.data() + pos);
    pos += 4;
    need(name_len + 4);
    std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    const std::uint32_t rank = get_u32(bytes.data() + pos);
    pos += 4;
    if (rank > 5) fail(ErrCode::parse, "EXCK parse error in " + path + ": rank > 5");
    need(4 * rank);
    Extents shape;
    std::int64_t total = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      shape.push_back(get_u32(bytes.data() + pos));
      pos += 4;
      total *= shape.back();
    }
    need(static_cast<std::size_t>(total) * 4);
    std::vector<float> data(static_cast<std::size_t>(total));
    for (std::int64_t j = 0; j < total; ++j) {
      data[static_cast<std::size_t>(j)] = get_f32(bytes.data() + pos);
      pos += 4;
    }
    payload.params.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  if (pos != bytes.size())
    fail(ErrCode::parse, "EXCK parse error in " + path + ": trailing bytes");
  return payload;
}

std::string model_meta_json(const ModelConfig& c, const std::string& kind) {
  nlohmann::json j;
  j["kind"] = kind;
  j["config"] = {{"input_size", {c.input_size.d, c.input_size.h, c.input_size.w}},
                 {"widths", c.widths},
                 {"organ_channels", c.organ_channels},
                 {"disease_channels", c.disease_channels},
                 {"use_gsc", c.use_gsc},
                 {"detach_fusion", c.detach_fusion},
                 {"leaky_slope", c.leaky_slope},
                 {"norm_eps", c.norm_eps},
                 {"seed", c.seed}};
  return j.dump();
}

ModelConfig model_config_from_meta(const std::string& meta_json, std::string* kind) {
  nlohmann::json j = nlohmann::json::parse(meta_json, nullptr, false);
  if (j.is_discarded()) fail(ErrCode::parse, "checkpoint meta is not valid JSON");
  if (kind) *kind = j.value("kind", "");
  const auto& c = j.at("config");
  ModelConfig cfg;
  const auto sz = c.at("input_size");
  cfg.input_size = Tri{sz.at(0).get<std::int64_t>(), sz.at(1).get<std::int64_t>(),
                       sz.at(2).get<std::int64_t>()};
  cfg.widths = c.at("widths").get<std::vector<std::int64_t>>();
  cfg.organ_channels = c.at("organ_channels").get<std::int64_t>();
  cfg.disease_channels = c.at("disease_channels").get<std::int64_t>();
  cfg.use_gsc = c.at("use_gsc").get<bool>();
  cfg.detach_fusion = c.at("detach_fusion").get<bool>();
  cfg.leaky_slope = c.at("leaky_slope").get<double>();
  cfg.norm_eps = c.at("norm_eps").get<double>();
  cfg.seed = c.at("seed").get<std::uint64_t>();
  return cfg;
}

void save_model(Model<float>& model, const std::string& kind, const std::string& path,
                const std::vector<std::pair<std::string, Tensor<float>>>& extra) {
  CheckpointPayload payload;
  payload.meta_json = model_meta_json(model.config, kind);
  for (auto& [name, tensor] : model.named_params()) payload.params.emplace_back(name, *tensor);
  for (const auto& [name, tensor] : extra) payload.params.emplace_back(name, tensor);
  save_checkpoint(payload, path);
}

Model<float> load_model(const std::string& path, std::string* kind,
                        std::vector<std::pair<std::string, Tensor<float>>>* extra) {
  CheckpointPayload payload = load_checkpoint(path);
  ModelConfig cfg = model_config_from_meta(payload.meta_json, kind);
  Model<float> model = build_model<float>(cfg);
  auto named = model.named_params();
  std::size_t consumed = 0;
  for (auto& [name, tensor] : named) {
    bool found = false;
    for (const auto& [pname, pdata] : payload.params) {
      if (pname == name) {
        if (pdata.shape() != tensor->shape())
          fail(ErrCode::parse, "checkpoint " + path + ": shape mismatch for parameter " + name);
        std::copy(pdata.data().begin(), pdata.data().end(), tensor->mutable_data().begin());
        found = true;
        ++consumed;
        break;
      }
    }
    if (!found) fail(ErrCode::parse, "checkpoint " + path + ": missing parameter " + name);
  }
  if (extra) {
    extra->clear();
    for (const auto& [pname, pdata] : payload.params) {
      bool is_model_param = false;
      for (auto& [name, tensor] : named) {
        (void)tensor;
        if (name == pname) {
          is_model_param = true;
          break;
        }
      }
      if (!is_model_param) extra->emplace_back(pname, pdata);
    }
  } else if (consumed != payload.params.size()) {
    fail(ErrCode::parse, "checkpoint " + path + ": unexpected extra parameters");
  }
  return model;
}

// ---- instantiations -------------------------------------------------------------

#define EXACT_INSTANTIATE_NETWORK(T)                                                       \
  template struct Model<T>;                                                                \
  template Model<T> build_model<T>(const ModelConfig&);                                    \
  template std::int64_t parameter_count<T>(Model<T>&);                                     \
  template ForwardVars<T> forward<T>(Model<T>&, Tape<T>&, const Tensor<T>&);               \
  template Var<T> gsc_block<T>(Tape<T>&, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, double,   \
                               double);                                                    \
  template Var<T> fuse_multiscale<T>(Var<T>, Var<T>);

EXACT_INSTANTIATE_NETWORK(float)
EXACT_INSTANTIATE_NETWORK(double)

#undef EXACT_INSTANTIATE_NETWORK

}  // namespace exact
