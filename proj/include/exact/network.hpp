#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "exact/tape.hpp"
#include "exact/volume.hpp"

namespace exact {

// Y-shaped dual-decoder model: shared convolutional encoder, organ
// segmentation decoder, and anomaly decoder that fuses segmentation-decoder
// features one-way and emits AAmaps at the last two stages.
struct ModelConfig {
  Tri input_size{16, 32, 32};
  std::vector<std::int64_t> widths{4, 8};  // one entry per encoder stage
  std::int64_t organ_channels = 3;         // M+1, includes the global channel
  std::int64_t disease_channels = 3;       // N
  bool use_gsc = true;
  bool detach_fusion = false;  // cut gradient into the seg branch at the fusion points
  double leaky_slope = 0.01;
  double norm_eps = 1e-5;
  std::uint64_t seed = 0x5EED;

  std::int64_t stages() const { return static_cast<std::int64_t>(widths.size()); }
  void validate() const;
};

template <typename T>
struct ConvParam {
  Tensor<T> w;
  Tensor<T> b;
};

template <typename T>
struct Model {
  ModelConfig config;

  ConvParam<T> stem;
  struct EncStage {
    ConvParam<T> down;                // absent at stage 0
    ConvParam<T> gsc_a, gsc_b, gsc_gate;  // present when use_gsc and stage >= 1
    ConvParam<T> res1, res2;          // stage 0 has res1 only
  };
  std::vector<EncStage> enc;

  struct DecStage {
    ConvParam<T> up;
    ConvParam<T> conv;
  };
  std::vector<DecStage> seg_dec;  // index i produces features at stage i resolution
  ConvParam<T> seg_head;

  ConvParam<T> anom_bottleneck;
  std::vector<DecStage> anom_dec;
  ConvParam<T> head_low, head_high;

  std::vector<std::pair<std::string, Tensor<T>*>> named_params();
  void set_all_trainable(bool on);
  // Parameter-name prefix groups for freezing and contract tests.
  static bool is_anomaly_param(const std::string& name);
  static bool is_seg_decoder_param(const std::string& name);
  static bool is_encoder_param(const std::string& name);
};

template <typename T>
struct ForwardVars {
  Var<T> seg_probs;   // [M+1, D, H, W]
  Var<T> aamap_low;   // [N, D/2, H/2, W/2]
  Var<T> aamap_high;  // [N, D, H, W]
};

// Plain-value outputs for inference-side consumers.
struct ModelOutputs {
  Tensor<float> seg_probs;
  Tensor<float> aamap_low;
  Tensor<float> aamap_high;
};

template <typename T>
Model<T> build_model(const ModelConfig& config);

template <typename T>
std::int64_t parameter_count(Model<T>& model);

template <typename T>
ForwardVars<T> forward(Model<T>& model, Tape<T>& tape, const Tensor<T>& image);

// GSC block: two parallel 3x3x3 conv+norm+activation branches, modulated by a
// sigmoid gate from a 1x1x1 convolution, plus a residual connection.
template <typename T>
Var<T> gsc_block(Tape<T>& tape, Var<T> x, Var<T> wa, Var<T> wb, Var<T> wg, Var<T> bg,
                 double slope, double norm_eps);

// Trilinear-upsample the low map to the high map's extents and add.
template <typename T>
Var<T> fuse_multiscale(Var<T> a_low, Var<T> a_high);

Tensor<float> fuse_multiscale_values(const Tensor<float>& a_low, const Tensor<float>& a_high);

ModelOutputs run_inference(Model<float>& model, const Tensor<float>& image);

// ---- checkpoint container ---------------------------------------------------
// "EXCK" magic, u32 version, length-prefixed JSON meta (kind + config), then
// named little-endian float32 blobs.
struct CheckpointPayload {
  std::string meta_json;
  std::vector<std::pair<std::string, Tensor<float>>> params;
};

void save_checkpoint(const CheckpointPayload& payload, const std::string& path);
CheckpointPayload load_checkpoint(const std::string& path);

std::string model_meta_json(const ModelConfig& config, const std::string& kind);
ModelConfig model_config_from_meta(const std::string& meta_json, std::string* kind = nullptr);

void save_model(Model<float>& model, const std::string& kind, const std::string& path,
                const std::vector<std::pair<std::string, Tensor<float>>>& extra = {});
Model<float> load_model(const std::string& path, std::string* kind = nullptr,
                        std::vector<std::pair<std::string, Tensor<float>>>* extra = nullptr);

}  // namespace exact
