#include "exact/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace exact {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrCode::io, "cannot open manifest: " + path);
  DatasetManifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 5)
      fail(ErrCode::parse, "manifest " + path + " line " + std::to_string(lineno) +
                               ": expected 5 tab-separated fields, got " +
                               std::to_string(fields.size()));
    ManifestRecord r;
    r.volume_path = fields[0];
    r.organ_mask_path = fields[1];
    r.lesion_mask_path = fields[2] == "-" ? "" : fields[2];
    std::stringstream ls(fields[3]);
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      if (tok != "0" && tok != "1")
        fail(ErrCode::parse, "manifest " + path + " line " + std::to_string(lineno) +
                                 ": label must be 0 or 1, got '" + tok + "'");
      r.labels.push_back(tok == "1" ? 1 : 0);
    }
    if (r.labels.empty())
      fail(ErrCode::parse, "manifest " + path + " line " + std::to_string(lineno) + ": empty label vector");
    r.split = fields[4];
    m.records.push_back(std::move(r));
  }
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrCode::io, "cannot write manifest: " + path);
  f << "# volume\torgan_mask\tlesion_mask\tlabels\tsplit\n";
  for (const auto& r : records) {
    f << r.volume_path << '\t' << r.organ_mask_path << '\t'
      << (r.lesion_mask_path.empty() ? "-" : r.lesion_mask_path) << '\t';
    for (std::size_t i = 0; i < r.labels.size(); ++i) f << (i ? "," : "") << r.labels[i];
    f << '\t' << r.split << '\n';
  }
}

DatasetManifest DatasetManifest::filter_split(const std::string& split) const {
  DatasetManifest out;
  out.base_dir = base_dir;
  for (const auto& r : records)
    if (r.split == split) out.records.push_back(r);
  return out;
}

std::string DatasetManifest::resolve(const std::string& rel) const {
  std::filesystem::path p(rel);
  if (p.is_absolute() || base_dir.empty()) return rel;
  return (std::filesystem::path(base_dir) / p).string();
}

void DatasetManifest::validate(std::size_t n_diseases, bool need_lesions) const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.labels.size() != n_diseases)
      fail(ErrCode::config_invalid, "manifest record " + std::to_string(i) + ": label vector length " +
                                        std::to_string(r.labels.size()) + " != disease count " +
                                        std::to_string(n_diseases));
    for (const std::string* p : {&r.volume_path, &r.organ_mask_path}) {
      if (!std::filesystem::exists(resolve(*p)))
        fail(ErrCode::io, "manifest record " + std::to_string(i) + ": missing file " + resolve(*p));
    }
    if (need_lesions) {
      if (r.lesion_mask_path.empty())
        fail(ErrCode::config_invalid,
             "manifest record " + std::to_string(i) + ": lesion mask required but absent");
      if (!std::filesystem::exists(resolve(r.lesion_mask_path)))
        fail(ErrCode::io, "manifest record " + std::to_string(i) + ": missing file " +
                              resolve(r.lesion_mask_path));
    }
  }
}

}  // namespace exact
