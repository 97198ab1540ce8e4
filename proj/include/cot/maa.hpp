#ifndef COT_MAA_HPP
#define COT_MAA_HPP

#include <optional>

#include "cot/backbone.hpp"
#include "cot/dataset.hpp"
#include "cot/feature_io.hpp"
#include "cot/word_embeddings.hpp"

namespace cot {

enum class mix_level { input, embedding };
enum class virtual_att_mode { mixed_candidate, weighted_targets };

std::string to_string(mix_level m);
std::string to_string(virtual_att_mode m);
mix_level mix_level_from_string(const std::string& s);
virtual_att_mode virtual_att_mode_from_string(const std::string& s);

struct maa_config {
    double exponent = 1.0;        // q in the inverse-frequency weights
    int start_epoch = 1;          // first epoch MAA applies
    double p0 = 0.3;              // initial application probability
    double ramp_increment = 0.1;  // added every ramp_period epochs
    int ramp_period = 5;
    double cap = 1.0;
    mix_level mixing = mix_level::input;
    virtual_att_mode att_mode = virtual_att_mode::mixed_candidate;
    std::string audit_csv;        // optional per-draw audit log

    void validate() const;
};

// κ(a, o) ∝ 1/ζ^q over the attributes with positive count for object o,
// normalized to sum 1; zero-count attributes get weight 0. Throws on an
// all-zero row.
std::vector<double> minority_sampling_weights(const frequency_table& freq, int object_id,
                                              double exponent);

// p(epoch): 0 before start_epoch, then p0 + increment·⌊(e−1)/period⌋ over
// the effective epoch e counted from start_epoch, capped.
double maa_apply_probability(int epoch, const maa_config& cfg);

// Index over training records: per object, per attribute, record positions.
struct train_pair_index {
    int n_objects = 0, n_attributes = 0;
    std::vector<std::vector<std::vector<size_t>>> by_object_attr;  // [o][a] -> record idx

    static train_pair_index build(const dataset& ds);
};

// Same-object, different-attribute partner: attribute drawn ∝ κ renormalized
// over classes ≠ the record's own, then a uniform record in that class.
// Returns nothing when the object has no other attribute class (caller skips
// augmentation).
std::optional<size_t> draw_auxiliary(const sample_record& record, const dataset& ds,
                                     const train_pair_index& index,
                                     const std::vector<double>& kappa, rng_stream& rng);

// Input-level blend of two records plus the mixed attribute word vector.
struct virtual_sample {
    payload_kind kind = payload_kind::image;
    image_data mixed_image;               // kind == image
    multi_level_features mixed_features;  // kind == feature_ref
    int object_id = -1;
    int attr_a = -1, attr_b = -1;
    std::vector<double> mixed_attr;       // λ·w(a_A) + (1−λ)·w(a_B)
    double lambda = 1.0;
    uint64_t source_a = 0, source_b = 0;
};

virtual_sample mix_virtual_sample(const sample_record& a, const sample_record& b,
                                  const word_embedding_table& table, double lambda,
                                  const feature_map* features = nullptr);

} // namespace cot

#endif
