#ifndef COT_TRAINING_HPP
#define COT_TRAINING_HPP

#include <memory>
#include <optional>

#include "cot/forward.hpp"
#include "cot/maa.hpp"

namespace cot {

struct hyperparams {
    double tau_c = 0.05, tau_o = 0.01, tau_a = 0.01;
    double alpha = 0.5, beta = 0.5;
    double lr = 1e-3;
    double lr_decay_factor = 0.1;
    int lr_decay_period = 10;
    int epochs = 20;
    int batch_size = 64;
    uint64_t seed = 0;
    bool use_att_loss = true, use_obj_loss = true;

    void validate() const;
    double lr_at_epoch(int epoch) const;  // lr · factor^⌊(epoch−1)/period⌋
};

// One batch element. Standard items carry the record's features and label;
// virtual items additionally carry the mixed attribute vector, λ and (for
// embedding-level mixing) the partner's features.
struct train_item {
    std::shared_ptr<const multi_level_features> feats;
    int attr_id = -1, obj_id = -1;
    uint64_t sample_id = 0;
    bool is_virtual = false;
    std::vector<double> mixed_attr;   // w_aM, virtual only
    double lambda = 1.0;
    int attr_b_id = -1;               // partner attribute, virtual only
    std::shared_ptr<const multi_level_features> feats_b;  // embedding mixing only
};

struct loss_breakdown {
    double total = 0.0, comp = 0.0, att = 0.0, obj = 0.0;  // batch means, raw terms
};

struct batch_context {
    const std::vector<composition_label>* seen_pairs = nullptr;
    const word_embedding_table* table = nullptr;
    hyperparams hyper;
    virtual_att_mode att_mode = virtual_att_mode::mixed_candidate;
    bool dropout_enabled = false;
    uint64_t dropout_seed = 0;
    int threads = 1;
    bool compute_grads = true;
};

// Everything needed to replay the recorded batch loss exactly.
struct forward_trace {
    struct item_trace {
        sample_forward fwd;
        std::optional<sample_forward> fwd_b;
        std::optional<softmax_loss> comp, att, att_b, obj;
        std::optional<g_trace> virtual_embed;  // s_M
        double l_comp = 0.0, l_att = 0.0, l_obj = 0.0;
        double lambda = 1.0;
        bool weighted_att = false;
    };
    std::vector<g_trace> candidates;  // seen-pair label embeddings
    std::vector<item_trace> items;
    double recorded_total = 0.0;
    double recorded_alpha = 0.0, recorded_beta = 0.0;  // effective weights (toggles folded in)

    double replay() const;  // recompute the total from the stored logits
};

struct batch_result {
    loss_breakdown losses;
    gradient_set grads;
    forward_trace trace;
};

batch_result total_loss_and_gradients(const std::vector<train_item>& items,
                                      const model_params& params, const batch_context& ctx);

struct adam_optimizer {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    gradient_set m, v;
    int64_t t = 0;

    explicit adam_optimizer(const model_params& params);
    void step(model_params& params, const gradient_set& grads, double lr);
};

// Binds a dataset to its feature source (toy backbone for image payloads or a
// preloaded feature dump) with a per-record cache.
class training_data {
public:
    training_data(const dataset& ds, const word_embedding_table& table,
                  const toy_backbone* backbone, const feature_map* features);

    const dataset& data() const { return ds_; }
    const word_embedding_table& table() const { return table_; }

    std::shared_ptr<const multi_level_features> features_for(const sample_record& rec) const;
    std::shared_ptr<const multi_level_features> features_for_virtual(const virtual_sample& v) const;

private:
    const dataset& ds_;
    const word_embedding_table& table_;
    const toy_backbone* backbone_;
    const feature_map* features_;
    mutable std::mutex mu_;
    mutable std::unordered_map<uint64_t, std::shared_ptr<const multi_level_features>> cache_;
};

struct epoch_log {
    int epoch = 0;
    double lr = 0.0, l_total = 0.0, l_comp = 0.0, l_att = 0.0, l_obj = 0.0;
    double maa_probability = 0.0;
};

struct train_options {
    hyperparams hyper;
    std::optional<maa_config> maa;
    int threads = 1;
};

std::vector<epoch_log> train_epochs(const training_data& data, model_params& params,
                                    const train_options& opts);

// Raw loss terms of a single (typically virtual) item, dropout disabled.
struct virtual_loss_values {
    double l_comp = 0.0, l_att = 0.0, l_obj = 0.0;
};
virtual_loss_values virtual_losses(const train_item& item, const model_params& params,
                                   const hyperparams& hyper,
                                   const std::vector<composition_label>& seen_pairs,
                                   const word_embedding_table& table,
                                   virtual_att_mode att_mode = virtual_att_mode::mixed_candidate);

struct gradcheck_entry {
    std::string tensor;
    double max_rel_error = 0.0;
    double max_abs_analytic = 0.0, max_abs_numeric = 0.0;
};

struct gradcheck_report {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    size_t worst_index = 0;
    double analytic_at_worst = 0.0, numeric_at_worst = 0.0;
    std::vector<gradcheck_entry> per_tensor;
};

// Central finite differences over every scalar parameter; dropout must be
// disabled through ctx. rel = |a−n| / max(|a|, |n|, 1e-6).
gradcheck_report finite_diff_check(const std::vector<train_item>& items, model_params& params,
                                   const batch_context& ctx, double eps);

} // namespace cot

#endif
