#ifndef COT_DATASET_HPP
#define COT_DATASET_HPP

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cot/common.hpp"

namespace cot {

struct vocabulary {
    std::vector<std::string> attributes;  // ids 0..|A|-1
    std::vector<std::string> objects;     // ids 0..|O|-1

    int n_attributes() const { return static_cast<int>(attributes.size()); }
    int n_objects() const { return static_cast<int>(objects.size()); }

    int attr_id(const std::string& name) const;  // throws lookup_error
    int obj_id(const std::string& name) const;

    void validate() const;  // names unique within each list
};

struct composition_label {
    int attr_id = -1;
    int obj_id = -1;

    auto operator<=>(const composition_label&) const = default;
};

struct split_spec {
    std::vector<composition_label> seen_pairs;
    std::vector<composition_label> unseen_pairs;
};

struct image_data {
    int height = 0, width = 0, channels = 0;
    std::vector<double> pixels;  // row-major [h][w][c], values in [0,1]

    bool empty() const { return pixels.empty(); }
    size_t expected_size() const { return static_cast<size_t>(height) * width * channels; }
};

enum class payload_kind { image, feature_ref };

// One labeled sample. Either an inline image or a reference (by sample id)
// into an external feature dump.
struct sample_record {
    uint64_t id = 0;
    composition_label label;
    payload_kind kind = payload_kind::image;
    image_data image;  // empty when kind == feature_ref
};

struct dataset {
    vocabulary vocab;
    split_spec splits;
    std::vector<sample_record> train, val, test;
    std::string images_path;      // as written in the manifest (may be empty)
    std::string features_path;    // external feature dump (may be empty)
    std::string embeddings_path;  // word-embedding text file (may be empty)

    bool is_seen(composition_label y) const;
    bool is_unseen(composition_label y) const;

    // Checks split disjointness, label validity and the train ⊆ seen rule.
    // Throws validation_error / lookup_error with the offending pair or name.
    void validate() const;
};

// counts[o][a]: training samples carrying object o with attribute a
struct frequency_table {
    int n_objects = 0, n_attributes = 0;
    std::vector<int64_t> counts;

    frequency_table() = default;
    frequency_table(int n_obj, int n_attr)
        : n_objects(n_obj), n_attributes(n_attr),
          counts(static_cast<size_t>(n_obj) * n_attr, 0) {}

    int64_t& at(int o, int a) { return counts[static_cast<size_t>(o) * n_attributes + a]; }
    int64_t at(int o, int a) const { return counts[static_cast<size_t>(o) * n_attributes + a]; }

    int64_t total() const;
};

frequency_table attribute_frequency_table(const dataset& ds);

std::string pair_name(const vocabulary& v, composition_label y);

} // namespace cot

#endif
