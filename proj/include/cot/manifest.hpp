#ifndef COT_MANIFEST_HPP
#define COT_MANIFEST_HPP

#include <string>

#include "cot/dataset.hpp"

namespace cot {

// Manifest layout (JSON):
//   attributes, objects : name arrays
//   seen_pairs, unseen_pairs : arrays of [attribute, object] name pairs
//   train, val, test : arrays of {id, attribute, object}
//   images / features / embeddings : optional sibling-file references
// Image pixels live in the referenced binary blob, keyed by record id.
// Relative paths are resolved against the manifest's directory.
dataset load_manifest(const std::string& path);

// Writes manifest.json (+ images.bin when any record carries pixels) into dir.
void save_manifest(const dataset& ds, const std::string& dir);

// Binary image blob: header {magic, version, height, width, channels, count},
// then per record {id: u64, pixels: f32…}, little-endian.
void write_images_file(const std::string& path, const std::vector<const sample_record*>& records);

} // namespace cot

#endif
