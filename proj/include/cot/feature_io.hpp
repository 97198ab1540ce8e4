#ifndef COT_FEATURE_IO_HPP
#define COT_FEATURE_IO_HPP

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cot/backbone.hpp"

namespace cot {

// Feature dump: little-endian binary.
// header: magic u32, version u32, H u32, W u32, D u32, D_cls u32, count u64
// record: sample_id u64, z_low, z_mid, z_high row-major f32, z_cls f32
struct feature_file_header {
    uint32_t h = 0, w = 0, d = 0, d_cls = 0;
    uint64_t record_count = 0;
};

void write_feature_file(const std::string& path,
                        const std::vector<std::pair<uint64_t, const multi_level_features*>>& records);

// Single-consumer sequential reader.
class feature_reader {
public:
    explicit feature_reader(const std::string& path);

    const feature_file_header& header() const { return header_; }

    // Returns false once record_count records have been yielded. Throws
    // io_error (with the record index) on truncation.
    bool next(uint64_t& sample_id, multi_level_features& out);

private:
    std::ifstream in_;
    std::string path_;
    feature_file_header header_;
    uint64_t read_ = 0;
};

using feature_map = std::unordered_map<uint64_t, multi_level_features>;

feature_map read_feature_map(const std::string& path);

} // namespace cot

#endif
