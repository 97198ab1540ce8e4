#ifndef COT_MODEL_HPP
#define COT_MODEL_HPP

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "cot/backbone.hpp"
#include "cot/tensor.hpp"

namespace cot {

enum class level_selection { low, mid, high, mix };
enum class guidance_mode { object, attribute };

std::string to_string(level_selection s);
std::string to_string(guidance_mode g);
level_selection level_selection_from_string(const std::string& s);
guidance_mode guidance_from_string(const std::string& s);

struct model_config {
    int grid_h = 4, grid_w = 4;
    int level_channels = 32;  // D
    int cls_channels = 32;    // width of the global token
    int embed_dim = 16;       // d_w, must match the word-embedding table
    int hidden_dim = 900;     // label embedder hidden width
    double dropout_rate = 0.3;
    level_selection levels = level_selection::mix;
    guidance_mode guidance = guidance_mode::object;
    uint64_t init_seed = 0;

    std::vector<int> selected_levels() const;  // subset of {0,1,2}, ascending
    void validate() const;

    std::string to_json_string() const;  // canonical (sorted keys)
    static model_config from_json_string(const std::string& text);
    uint64_t hash() const;  // FNV-1a over the canonical JSON
};

// Every trainable quantity. Attention tensors exist only for selected levels;
// unselected slots stay empty and are skipped by visit().
struct model_params {
    model_config cfg;

    std::array<tensor, 3> att_ch_w;  // D × 2D   (1×1 conv on the spatially pooled U)
    std::array<tensor, 3> att_ch_b;  // D
    std::array<tensor, 3> att_sp_w;  // 3 × 3    (conv on the channel-pooled U, zero pad 1)
    std::array<tensor, 3> att_sp_b;  // 1
    tensor eo_w, eo_b;  // d_w × D_cls
    tensor ea_w, ea_b;  // d_w × (|levels|·D)
    tensor ec_w, ec_b;  // d_w × 2·d_w
    tensor g_w1, g_b1;  // hidden × 2·d_w
    tensor g_w2, g_b2;  // hidden × hidden
    tensor g_w3, g_b3;  // d_w × hidden

    static model_params init(const model_config& cfg);

    // Fixed-order traversal of non-empty tensors; the order defines the
    // checkpoint layout and the gradient-set alignment.
    void visit(const std::function<void(const std::string&, tensor&)>& fn);
    void visit(const std::function<void(const std::string&, const tensor&)>& fn) const;

    size_t parameter_count() const;
};

// Gradients (and optimizer moments) mirror params in visit() order.
struct gradient_set {
    std::vector<tensor> slots;

    static gradient_set zeros_like(const model_params& p);
    void fill_zero();
    void add_scaled(const gradient_set& other, double s);
    void scale(double s);
};

void save_checkpoint(const std::string& path, const model_params& params);
model_params load_checkpoint(const std::string& path);

} // namespace cot

#endif
