#ifndef COT_FORWARD_HPP
#define COT_FORWARD_HPP

#include <optional>

#include "cot/model.hpp"
#include "cot/word_embeddings.hpp"

namespace cot {

// Inverted dropout; masks are drawn in a fixed order from a dedicated stream
// so training losses replay exactly and gradcheck can switch dropout off
// without disturbing any other randomness.
struct dropout_sampler {
    double rate = 0.0;
    rng_stream rng;

    dropout_sampler(double rate_, uint64_t seed) : rate(rate_), rng(seed) {}
    bool keep() { return rng.uniform() >= rate; }
};

// One level of object-guided attention, everything the backward pass needs.
struct attention_trace {
    std::vector<double> ubar;      // 2D: [guide ; spatial mean of Z]
    std::vector<double> ch_pre;    // D, pre-sigmoid
    std::vector<double> ch_att;    // D, A_c
    feature_grid chan_mean;        // H×W×1, channel mean of U
    feature_grid sp_pre;           // H×W×1, pre-sigmoid
    feature_grid sp_att;           // H×W×1, A_s
    feature_grid attended;         // H×W×D, Z̃ = Z + A ⊙ Z
    std::vector<double> pooled;    // D, spatial mean of Z̃

    // combined map A = A_s × A_c (broadcast product)
    double combined(int h, int w, int c) const {
        return sp_att.at(h, w, 0) * ch_att[static_cast<size_t>(c)];
    }
};

struct sample_forward {
    const multi_level_features* feats = nullptr;  // borrowed, frozen
    std::vector<double> cls_embed;   // head on the global token
    std::vector<double> guide_pad;   // guide adapted to width D
    std::array<std::optional<attention_trace>, 3> levels;
    std::vector<double> grid_concat; // |levels|·D
    std::vector<double> grid_embed;  // head on the pooled attended grids
    std::vector<double> p_o, p_a;    // role-resolved per guidance mode
    std::vector<double> px_pre;
    double px_norm = 0.0;
    std::vector<double> p_x;         // unit norm
};

// Label embedder g: FC(2d_w→hid) → ReLU → drop → FC(hid→hid) → ReLU → drop → FC(hid→d_w),
// then l2 normalization.
struct g_trace {
    std::vector<double> input;             // [w(o); w(a)]
    std::vector<double> h1_pre, h1_drop;
    std::vector<double> h2_pre, h2_drop;
    std::vector<double> out_pre;
    double out_norm = 0.0;
    std::vector<double> out;               // s_y, unit norm
    std::vector<uint8_t> mask1, mask2;     // kept flags, empty in inference mode
    double keep_scale = 1.0;
};

std::vector<double> object_embed(const multi_level_features& feats, const model_params& params);

// Pads with zeros / truncates the guide to the level channel width D.
std::vector<double> adapt_guide_width(std::span<const double> guide, int d);

attention_trace object_guided_attention(const feature_grid& z, std::span<const double> guide_pad,
                                        int level, const model_params& params);

sample_forward forward_sample(const multi_level_features& feats, const model_params& params);

// normalize(E_c([p_o, p_a])); throws degenerate_error on a zero vector
void compose_visual(std::span<const double> p_o, std::span<const double> p_a,
                    const model_params& params, std::vector<double>& pre, double& norm,
                    std::vector<double>& out);

g_trace g_forward(std::span<const double> w_obj, std::span<const double> w_attr,
                  const model_params& params, dropout_sampler* drop);

g_trace label_embed(composition_label y, const word_embedding_table& table,
                    const model_params& params, dropout_sampler* drop = nullptr);

// Named gradient accumulators resolved once against a gradient_set.
struct grad_refs {
    std::array<tensor*, 3> att_ch_w{}, att_ch_b{}, att_sp_w{}, att_sp_b{};
    tensor* eo_w = nullptr; tensor* eo_b = nullptr;
    tensor* ea_w = nullptr; tensor* ea_b = nullptr;
    tensor* ec_w = nullptr; tensor* ec_b = nullptr;
    tensor* g_w1 = nullptr; tensor* g_b1 = nullptr;
    tensor* g_w2 = nullptr; tensor* g_b2 = nullptr;
    tensor* g_w3 = nullptr; tensor* g_b3 = nullptr;

    static grad_refs bind(const model_params& shape, gradient_set& grads);
};

void g_backward(const g_trace& trace, const model_params& params,
                std::span<const double> d_out, grad_refs& grads);

// Backpropagates d(p_o), d(p_a), d(p_x) through composition, both heads and
// every attention level. Feature grids are frozen, so no input gradient is
// produced.
void sample_backward(const sample_forward& fwd, const model_params& params,
                     std::span<const double> dp_o, std::span<const double> dp_a,
                     std::span<const double> dp_x, grad_refs& grads);

// Eq.-13-style scoring: cos(p_x, s_y) + cos(p_o, w(o)) + cos(p_a, w(a)).
// label_embeds must align with candidates. Returns scores and the argmax
// (ties go to the lowest candidate index).
std::pair<std::vector<double>, size_t> feasibility_scores(
    std::span<const double> p_x, std::span<const double> p_o, std::span<const double> p_a,
    const std::vector<composition_label>& candidates, const word_embedding_table& table,
    const std::vector<std::vector<double>>& label_embeds);

} // namespace cot

#endif
