#include "cot/forward.hpp"

#include <cmath>

#include "cot/loss.hpp"

namespace cot {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_feats(const multi_level_features& f, const model_config& cfg) {
    for (int l = 0; l < 3; ++l) {
        const auto& g = f.level(l);
        if (g.h != cfg.grid_h || g.w != cfg.grid_w || g.c != cfg.level_channels) {
            throw shape_error("feature grid shape does not match the model config");
        }
    }
    if (static_cast<int>(f.z_cls.size()) != cfg.cls_channels) {
        throw shape_error("global token width does not match the model config");
    }
}

void normalize_or_throw(const std::vector<double>& pre, double& norm, std::vector<double>& out,
                        const char* what) {
    norm = norm2(pre);
    if (!(norm > 1e-30)) {
        throw degenerate_error(std::string(what) + ": zero-norm embedding");
    }
    out.resize(pre.size());
    for (size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] / norm;
}

// d_pre += (d_out − (d_out·out) out) / norm
void normalize_backward(std::span<const double> out, double norm, std::span<const double> d_out,
                        std::span<double> d_pre) {
    const double proj = dot(d_out, out);
    for (size_t i = 0; i < out.size(); ++i) {
        d_pre[i] += (d_out[i] - proj * out[i]) / norm;
    }
}

} // namespace

std::vector<double> object_embed(const multi_level_features& feats, const model_params& params) {
    check_feats(feats, params.cfg);
    std::vector<double> out(static_cast<size_t>(params.cfg.embed_dim));
    affine(params.eo_w, feats.z_cls, &params.eo_b, out);
    return out;
}

std::vector<double> adapt_guide_width(std::span<const double> guide, int d) {
    std::vector<double> out(static_cast<size_t>(d), 0.0);
    const size_t n = std::min(guide.size(), out.size());
    for (size_t i = 0; i < n; ++i) out[i] = guide[i];
    return out;
}

attention_trace object_guided_attention(const feature_grid& z, std::span<const double> guide_pad,
                                        int level, const model_params& params) {
    const int H = z.h, W = z.w, D = z.c;
    if (static_cast<int>(guide_pad.size()) != D) {
        throw shape_error("guide width must equal the level channel width");
    }
    const tensor& wc = params.att_ch_w[level];
    const tensor& bc = params.att_ch_b[level];
    const tensor& ws = params.att_sp_w[level];
    const tensor& bs = params.att_sp_b[level];
    if (wc.empty()) throw shape_error("attention parameters missing for an unselected level");

    attention_trace t;

    // U = [tile(guide); Z] is never materialized: its spatial mean is
    // [guide; mean(Z)] and its channel mean is (Σ guide + Σ_c Z)/2D.
    t.ubar.assign(2 * static_cast<size_t>(D), 0.0);
    for (int c = 0; c < D; ++c) t.ubar[c] = guide_pad[c];
    const double inv_hw = 1.0 / (static_cast<double>(H) * W);
    for (int c = 0; c < D; ++c) {
        double s = 0.0;
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) s += z.at(i, j, c);
        }
        t.ubar[static_cast<size_t>(D) + c] = s * inv_hw;
    }

    t.ch_pre.assign(static_cast<size_t>(D), 0.0);
    affine(wc, t.ubar, &bc, t.ch_pre);
    t.ch_att.resize(t.ch_pre.size());
    for (size_t i = 0; i < t.ch_pre.size(); ++i) t.ch_att[i] = sigmoid(t.ch_pre[i]);

    double guide_sum = 0.0;
    for (double v : guide_pad) guide_sum += v;
    const double inv_2d = 1.0 / (2.0 * D);
    t.chan_mean = feature_grid(H, W, 1);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            double s = guide_sum;
            for (int c = 0; c < D; ++c) s += z.at(i, j, c);
            t.chan_mean.at(i, j, 0) = s * inv_2d;
        }
    }

    // 3×3 convolution, zero padding 1, so A_s stays H×W
    t.sp_pre = feature_grid(H, W, 1);
    t.sp_att = feature_grid(H, W, 1);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            double s = bs.data[0];
            for (int di = -1; di <= 1; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    const int ii = i + di, jj = j + dj;
                    if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                    s += ws.at(static_cast<size_t>(di + 1), static_cast<size_t>(dj + 1)) *
                         t.chan_mean.at(ii, jj, 0);
                }
            }
            t.sp_pre.at(i, j, 0) = s;
            t.sp_att.at(i, j, 0) = sigmoid(s);
        }
    }

    t.attended = feature_grid(H, W, D);
    t.pooled.assign(static_cast<size_t>(D), 0.0);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            const double as = t.sp_att.at(i, j, 0);
            for (int c = 0; c < D; ++c) {
                const double zt = z.at(i, j, c) * (1.0 + as * t.ch_att[static_cast<size_t>(c)]);
                t.attended.at(i, j, c) = zt;
                t.pooled[static_cast<size_t>(c)] += zt;
            }
        }
    }
    for (auto& v : t.pooled) v *= inv_hw;
    return t;
}

void compose_visual(std::span<const double> p_o, std::span<const double> p_a,
                    const model_params& params, std::vector<double>& pre, double& norm,
                    std::vector<double>& out) {
    const size_t dw = static_cast<size_t>(params.cfg.embed_dim);
    if (p_o.size() != dw || p_a.size() != dw) {
        throw shape_error("compose_visual: embedding width mismatch");
    }
    std::vector<double> joint(2 * dw);
    for (size_t i = 0; i < dw; ++i) joint[i] = p_o[i];
    for (size_t i = 0; i < dw; ++i) joint[dw + i] = p_a[i];
    pre.assign(dw, 0.0);
    affine(params.ec_w, joint, &params.ec_b, pre);
    normalize_or_throw(pre, norm, out, "compose_visual");
}

sample_forward forward_sample(const multi_level_features& feats, const model_params& params) {
    const model_config& cfg = params.cfg;
    check_feats(feats, cfg);

    sample_forward fwd;
    fwd.feats = &feats;
    fwd.cls_embed = object_embed(feats, params);
    fwd.guide_pad = adapt_guide_width(fwd.cls_embed, cfg.level_channels);

    const auto levels = cfg.selected_levels();
    fwd.grid_concat.assign(levels.size() * static_cast<size_t>(cfg.level_channels), 0.0);
    size_t off = 0;
    for (int l : levels) {
        fwd.levels[l] = object_guided_attention(feats.level(l), fwd.guide_pad, l, params);
        const auto& pooled = fwd.levels[l]->pooled;
        std::copy(pooled.begin(), pooled.end(), fwd.grid_concat.begin() + static_cast<long>(off));
        off += pooled.size();
    }

    fwd.grid_embed.assign(static_cast<size_t>(cfg.embed_dim), 0.0);
    affine(params.ea_w, fwd.grid_concat, &params.ea_b, fwd.grid_embed);

    if (cfg.guidance == guidance_mode::object) {
        fwd.p_o = fwd.cls_embed;
        fwd.p_a = fwd.grid_embed;
    } else {
        fwd.p_a = fwd.cls_embed;
        fwd.p_o = fwd.grid_embed;
    }
    compose_visual(fwd.p_o, fwd.p_a, params, fwd.px_pre, fwd.px_norm, fwd.p_x);
    return fwd;
}

g_trace g_forward(std::span<const double> w_obj, std::span<const double> w_attr,
                  const model_params& params, dropout_sampler* drop) {
    const size_t dw = static_cast<size_t>(params.cfg.embed_dim);
    const size_t hid = static_cast<size_t>(params.cfg.hidden_dim);
    if (w_obj.size() != dw || w_attr.size() != dw) {
        throw shape_error("g_forward: word-vector width mismatch");
    }

    g_trace t;
    t.input.resize(2 * dw);
    for (size_t i = 0; i < dw; ++i) t.input[i] = w_obj[i];
    for (size_t i = 0; i < dw; ++i) t.input[dw + i] = w_attr[i];

    const bool use_drop = drop != nullptr && drop->rate > 0.0;
    t.keep_scale = use_drop ? 1.0 / (1.0 - drop->rate) : 1.0;

    auto apply_drop = [&](const std::vector<double>& relu, std::vector<uint8_t>& mask,
                          std::vector<double>& out) {
        out.resize(relu.size());
        if (!use_drop) {
            out = relu;
            return;
        }
        mask.resize(relu.size());
        for (size_t i = 0; i < relu.size(); ++i) {
            mask[i] = drop->keep() ? 1 : 0;
            out[i] = mask[i] ? relu[i] * t.keep_scale : 0.0;
        }
    };

    t.h1_pre.assign(hid, 0.0);
    affine(params.g_w1, t.input, &params.g_b1, t.h1_pre);
    std::vector<double> h1(hid);
    for (size_t i = 0; i < hid; ++i) h1[i] = t.h1_pre[i] > 0.0 ? t.h1_pre[i] : 0.0;
    apply_drop(h1, t.mask1, t.h1_drop);

    t.h2_pre.assign(hid, 0.0);
    affine(params.g_w2, t.h1_drop, &params.g_b2, t.h2_pre);
    std::vector<double> h2(hid);
    for (size_t i = 0; i < hid; ++i) h2[i] = t.h2_pre[i] > 0.0 ? t.h2_pre[i] : 0.0;
    apply_drop(h2, t.mask2, t.h2_drop);

    t.out_pre.assign(dw, 0.0);
    affine(params.g_w3, t.h2_drop, &params.g_b3, t.out_pre);
    normalize_or_throw(t.out_pre, t.out_norm, t.out, "label embedding");
    return t;
}

g_trace label_embed(composition_label y, const word_embedding_table& table,
                    const model_params& params, dropout_sampler* drop) {
    return g_forward(table.object(y.obj_id), table.attribute(y.attr_id), params, drop);
}

grad_refs grad_refs::bind(const model_params& shape, gradient_set& grads) {
    grad_refs r;
    size_t idx = 0;
    const_cast<model_params&>(shape).visit([&](const std::string& name, tensor&) {
        tensor* slot = &grads.slots.at(idx++);
        if (name.rfind("att_ch_w.", 0) == 0 || name.rfind("att_ch_b.", 0) == 0 ||
            name.rfind("att_sp_w.", 0) == 0 || name.rfind("att_sp_b.", 0) == 0) {
            const std::string lv = name.substr(name.find('.') + 1);
            const int l = lv == "low" ? 0 : (lv == "mid" ? 1 : 2);
            if (name.rfind("att_ch_w", 0) == 0) r.att_ch_w[l] = slot;
            else if (name.rfind("att_ch_b", 0) == 0) r.att_ch_b[l] = slot;
            else if (name.rfind("att_sp_w", 0) == 0) r.att_sp_w[l] = slot;
            else r.att_sp_b[l] = slot;
        } else if (name == "eo_w") r.eo_w = slot;
        else if (name == "eo_b") r.eo_b = slot;
        else if (name == "ea_w") r.ea_w = slot;
        else if (name == "ea_b") r.ea_b = slot;
        else if (name == "ec_w") r.ec_w = slot;
        else if (name == "ec_b") r.ec_b = slot;
        else if (name == "g_w1") r.g_w1 = slot;
        else if (name == "g_b1") r.g_b1 = slot;
        else if (name == "g_w2") r.g_w2 = slot;
        else if (name == "g_b2") r.g_b2 = slot;
        else if (name == "g_w3") r.g_w3 = slot;
        else if (name == "g_b3") r.g_b3 = slot;
    });
    return r;
}

void g_backward(const g_trace& t, const model_params& params, std::span<const double> d_out,
                grad_refs& grads) {
    const size_t dw = t.out.size();
    const size_t hid = t.h1_pre.size();

    std::vector<double> d_pre(dw, 0.0);
    normalize_backward(t.out, t.out_norm, d_out, d_pre);

    affine_backward_params(*grads.g_w3, grads.g_b3, d_pre, t.h2_drop);
    std::vector<double> d_h2drop(hid, 0.0);
    affine_backward_input(params.g_w3, d_pre, d_h2drop);

    std::vector<double> d_h2pre(hid, 0.0);
    for (size_t i = 0; i < hid; ++i) {
        double g = d_h2drop[i];
        if (!t.mask2.empty()) g = t.mask2[i] ? g * t.keep_scale : 0.0;
        d_h2pre[i] = t.h2_pre[i] > 0.0 ? g : 0.0;
    }

    affine_backward_params(*grads.g_w2, grads.g_b2, d_h2pre, t.h1_drop);
    std::vector<double> d_h1drop(hid, 0.0);
    affine_backward_input(params.g_w2, d_h2pre, d_h1drop);

    std::vector<double> d_h1pre(hid, 0.0);
    for (size_t i = 0; i < hid; ++i) {
        double g = d_h1drop[i];
        if (!t.mask1.empty()) g = t.mask1[i] ? g * t.keep_scale : 0.0;
        d_h1pre[i] = t.h1_pre[i] > 0.0 ? g : 0.0;
    }

    affine_backward_params(*grads.g_w1, grads.g_b1, d_h1pre, t.input);
    // g's inputs are frozen word vectors; nothing further to propagate
}

namespace {

// Backward through one attention level. Accumulates convolution gradients and
// the gradient reaching the (padded) guide; the feature grid is frozen.
void attention_backward(const feature_grid& z, const attention_trace& t, int level,
                        const model_params& params, std::span<const double> d_pooled,
                        std::span<double> d_guide_pad, grad_refs& grads) {
    const int H = z.h, W = z.w, D = z.c;
    const double inv_hw = 1.0 / (static_cast<double>(H) * W);
    const double inv_2d = 1.0 / (2.0 * D);

    // dZ̃ = d_pooled / HW; dA = dZ̃ ⊙ Z; split into spatial and channel parts
    std::vector<double> d_ch_att(static_cast<size_t>(D), 0.0);
    feature_grid d_sp_att(H, W, 1);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            const double as = t.sp_att.at(i, j, 0);
            double acc_sp = 0.0;
            for (int c = 0; c < D; ++c) {
                const double da = d_pooled[static_cast<size_t>(c)] * inv_hw * z.at(i, j, c);
                acc_sp += da * t.ch_att[static_cast<size_t>(c)];
                d_ch_att[static_cast<size_t>(c)] += da * as;
            }
            d_sp_att.at(i, j, 0) = acc_sp;
        }
    }

    // spatial path: sigmoid → 3×3 conv → channel mean of U
    feature_grid d_m(H, W, 1);
    const tensor& ws = params.att_sp_w[level];
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            const double as = t.sp_att.at(i, j, 0);
            const double ds = d_sp_att.at(i, j, 0) * as * (1.0 - as);
            grads.att_sp_b[level]->data[0] += ds;
            for (int di = -1; di <= 1; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    const int ii = i + di, jj = j + dj;
                    if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                    grads.att_sp_w[level]->at(static_cast<size_t>(di + 1), static_cast<size_t>(dj + 1)) +=
                        ds * t.chan_mean.at(ii, jj, 0);
                    d_m.at(ii, jj, 0) += ds * ws.at(static_cast<size_t>(di + 1), static_cast<size_t>(dj + 1));
                }
            }
        }
    }
    double d_m_total = 0.0;
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) d_m_total += d_m.at(i, j, 0);
    }
    // every guide channel contributes 1/2D to each cell's channel mean
    const double d_guide_from_m = d_m_total * inv_2d;

    // channel path: sigmoid → 1×1 conv → spatial mean of U
    std::vector<double> d_ch_pre(static_cast<size_t>(D));
    for (int c = 0; c < D; ++c) {
        const double ac = t.ch_att[static_cast<size_t>(c)];
        d_ch_pre[static_cast<size_t>(c)] = d_ch_att[static_cast<size_t>(c)] * ac * (1.0 - ac);
    }
    affine_backward_params(*grads.att_ch_w[level], grads.att_ch_b[level], d_ch_pre, t.ubar);
    std::vector<double> d_ubar(2 * static_cast<size_t>(D), 0.0);
    affine_backward_input(params.att_ch_w[level], d_ch_pre, d_ubar);

    for (int c = 0; c < D; ++c) {
        d_guide_pad[static_cast<size_t>(c)] += d_ubar[static_cast<size_t>(c)] + d_guide_from_m;
    }
}

} // namespace

void sample_backward(const sample_forward& fwd, const model_params& params,
                     std::span<const double> dp_o, std::span<const double> dp_a,
                     std::span<const double> dp_x, grad_refs& grads) {
    const model_config& cfg = params.cfg;
    const size_t dw = static_cast<size_t>(cfg.embed_dim);

    std::vector<double> dp_o_tot(dp_o.begin(), dp_o.end());
    std::vector<double> dp_a_tot(dp_a.begin(), dp_a.end());

    // composition head
    if (!dp_x.empty()) {
        std::vector<double> d_pre(dw, 0.0);
        normalize_backward(fwd.p_x, fwd.px_norm, dp_x, d_pre);
        std::vector<double> joint(2 * dw);
        for (size_t i = 0; i < dw; ++i) joint[i] = fwd.p_o[i];
        for (size_t i = 0; i < dw; ++i) joint[dw + i] = fwd.p_a[i];
        affine_backward_params(*grads.ec_w, grads.ec_b, d_pre, joint);
        std::vector<double> d_joint(2 * dw, 0.0);
        affine_backward_input(params.ec_w, d_pre, d_joint);
        for (size_t i = 0; i < dw; ++i) dp_o_tot[i] += d_joint[i];
        for (size_t i = 0; i < dw; ++i) dp_a_tot[i] += d_joint[dw + i];
    }

    std::vector<double>& d_cls = cfg.guidance == guidance_mode::object ? dp_o_tot : dp_a_tot;
    std::vector<double>& d_grid = cfg.guidance == guidance_mode::object ? dp_a_tot : dp_o_tot;

    // grid head: E_a then each attention level
    affine_backward_params(*grads.ea_w, grads.ea_b, d_grid, fwd.grid_concat);
    std::vector<double> d_concat(fwd.grid_concat.size(), 0.0);
    affine_backward_input(params.ea_w, d_grid, d_concat);

    std::vector<double> d_guide_pad(static_cast<size_t>(cfg.level_channels), 0.0);
    size_t off = 0;
    for (int l : cfg.selected_levels()) {
        std::span<const double> d_pooled(d_concat.data() + off,
                                         static_cast<size_t>(cfg.level_channels));
        attention_backward(fwd.feats->level(l), *fwd.levels[l], l, params, d_pooled,
                           d_guide_pad, grads);
        off += static_cast<size_t>(cfg.level_channels);
    }

    // width adapter is a fixed pad/truncate: transpose routes the overlap back
    const size_t overlap = std::min(d_guide_pad.size(), d_cls.size());
    for (size_t i = 0; i < overlap; ++i) d_cls[i] += d_guide_pad[i];

    affine_backward_params(*grads.eo_w, grads.eo_b, d_cls, fwd.feats->z_cls);
}

std::pair<std::vector<double>, size_t> feasibility_scores(
    std::span<const double> p_x, std::span<const double> p_o, std::span<const double> p_a,
    const std::vector<composition_label>& candidates, const word_embedding_table& table,
    const std::vector<std::vector<double>>& label_embeds) {
    if (candidates.empty()) throw argument_error("feasibility_scores: empty candidate list");
    if (label_embeds.size() != candidates.size()) {
        throw argument_error("feasibility_scores: label embeddings misaligned with candidates");
    }
    std::vector<double> scores(candidates.size());
    size_t best = 0;
    for (size_t k = 0; k < candidates.size(); ++k) {
        const auto y = candidates[k];
        scores[k] = cosine(p_x, label_embeds[k]) +
                    cosine(p_o, table.object(y.obj_id)) +
                    cosine(p_a, table.attribute(y.attr_id));
        if (scores[k] > scores[best]) best = k;
    }
    return {std::move(scores), best};
}

} // namespace cot
