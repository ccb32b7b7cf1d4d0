#pragma once

#include <string>
#include <vector>

#include "exact/errors.hpp"

namespace exact {

// One dataset record: paths are stored relative to the manifest file.
struct ManifestRecord {
  std::string volume_path;
  std::string organ_mask_path;
  std::string lesion_mask_path;  // empty when absent
  std::vector<int> labels;
  std::string split;
};

// Line-oriented tab-separated manifest:
//   volume<TAB>organ_mask<TAB>lesion_mask_or_-<TAB>label,label,...<TAB>split
// Lines starting with '#' are comments.
struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::string base_dir;  // directory of the manifest file, set on load

  static DatasetManifest load(const std::string& path);
  void save(const std::string& path) const;

  DatasetManifest filter_split(const std::string& split) const;
  std::string resolve(const std::string& rel) const;

  // Checks referenced files exist and label vectors have the given length.
  void validate(std::size_t n_diseases, bool need_lesions) const;
};

}  // namespace exact
