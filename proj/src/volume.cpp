#include "exact/volume.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace exact {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'L', '1'};
constexpr std::int64_t kMaxVoxels = std::int64_t(1) << 30;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace

void Volume::check_invariants() const {
  if (!data.defined() || data.rank() != 4)
    fail(ErrCode::shape_mismatch, "volume data must be [C,D,H,W]");
  if (!(spacing.x > 0.0f && spacing.y > 0.0f && spacing.z > 0.0f))
    fail(ErrCode::config_invalid, "volume spacing components must be > 0");
  if (kind == VolKind::mask) {
    for (float v : data.data())
      if (v != 0.0f && v != 1.0f)
        fail(ErrCode::numeric, "mask volume contains a value outside {0,1}");
  }
}

Volume make_volume(Extents shape, Spacing spacing, VolKind kind) {
  Volume v;
  v.data = Tensor<float>(std::move(shape));
  v.spacing = spacing;
  v.kind = kind;
  return v;
}

void save_volume(const Volume& v, const std::string& path) {
  if (v.data.rank() != 4) fail(ErrCode::shape_mismatch, "save_volume: data must be [C,D,H,W]");
  std::string header;
  header.reserve(36);
  header.append(kMagic, 4);
  for (int axis = 0; axis < 4; ++axis) put_u32(header, static_cast<std::uint32_t>(v.data.extent(axis)));
  put_f32(header, v.spacing.x);
  put_f32(header, v.spacing.y);
  put_f32(header, v.spacing.z);
  header.push_back(static_cast<char>(v.kind));
  header.append(3, '\0');

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrCode::io, "cannot open for writing: " + path);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::string payload;
  payload.reserve(static_cast<std::size_t>(v.data.size()) * 4);
  for (float x : v.data.data()) put_f32(payload, x);
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) fail(ErrCode::io, "short write: " + path);
}

Volume load_volume(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrCode::io, "cannot open volume file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 36) fail(ErrCode::parse, "EVL1 parse error in " + path + ": truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail(ErrCode::bad_magic, "EVL1 parse error in " + path + ": bad magic");

  Extents shape(4);
  std::int64_t total = 1;
  for (int axis = 0; axis < 4; ++axis) {
    const std::uint32_t e = get_u32(bytes.data() + 4 + 4 * axis);
    if (e == 0) fail(ErrCode::parse, "EVL1 parse error in " + path + ": zero extent (field extents)");
    shape[static_cast<std::size_t>(axis)] = e;
    total *= e;
    if (total > kMaxVoxels)
      fail(ErrCode::parse, "EVL1 parse error in " + path + ": extent overflow (field extents)");
  }
  Spacing sp{get_f32(bytes.data() + 20), get_f32(bytes.data() + 24), get_f32(bytes.data() + 28)};
  if (!(sp.x > 0.0f && sp.y > 0.0f && sp.z > 0.0f))
    fail(ErrCode::parse, "EVL1 parse error in " + path + ": nonpositive spacing (field spacing)");
  const std::uint8_t kind_code = bytes[32];
  if (kind_code > 2)
    fail(ErrCode::parse, "EVL1 parse error in " + path + ": unknown kind code (field kind)");

  const std::size_t expected = 36 + static_cast<std::size_t>(total) * 4;
  if (bytes.size() != expected)
    fail(ErrCode::parse, "EVL1 parse error in " + path + ": payload size " +
                             std::to_string(bytes.size() - 36) + " != " +
                             std::to_string(expected - 36) + " (field payload)");

  std::vector<float> data(static_cast<std::size_t>(total));
  for (std::int64_t i = 0; i < total; ++i) data[static_cast<std::size_t>(i)] = get_f32(bytes.data() + 36 + 4 * i);
  Volume v;
  v.data = Tensor<float>(std::move(shape), std::move(data));
  v.spacing = sp;
  v.kind = static_cast<VolKind>(kind_code);
  return v;
}

void write_overlay_ppm(const Volume& image, const Volume& mask, std::int64_t slice,
                       const std::string& path) {
  const std::int64_t H = image.height(), W = image.width();
  if (mask.height() != H || mask.width() != W || slice < 0 || slice >= image.depth())
    fail(ErrCode::shape_mismatch, "overlay: slice/extent mismatch");
  auto img = image.data.data();
  auto msk = mask.data.data();
  std::string out = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  const std::int64_t plane = H * W;
  for (std::int64_t y = 0; y < H; ++y) {
    for (std::int64_t x = 0; x < W; ++x) {
      const float v = std::clamp(img[slice * plane + y * W + x], 0.0f, 1.0f);
      const bool on = msk[slice * plane + y * W + x] > 0.0f;
      const auto g = static_cast<unsigned char>(v * 255.0f);
      if (on) {
        out.push_back(static_cast<char>(std::min(255, int(g) + 120)));
        out.push_back(static_cast<char>(g / 2));
        out.push_back(static_cast<char>(g / 2));
      } else {
        out.push_back(static_cast<char>(g));
        out.push_back(static_cast<char>(g));
        out.push_back(static_cast<char>(g));
      }
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrCode::io, "cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace exact
