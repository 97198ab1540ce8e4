#include "cot/backbone.hpp"

#include <cmath>

namespace cot {

void backbone_config::validate() const {
    if (grid_h < 1 || grid_w < 1 || level_channels < 1 || cls_channels < 1) {
        throw config_error("backbone dimensions must be positive");
    }
    if (level_count < 1 || level_count > 3) {
        throw config_error("level_count must be 1, 2 or 3");
    }
}

struct toy_backbone::projection_set {
    int patch_h = 0, patch_w = 0, channels = 0;
    tensor level_w[3];  // D × patch_len
    tensor level_b[3];  // D
    tensor cls_w;       // D_cls × image_len
    tensor cls_b;       // D_cls
};

namespace {

void fill_uniform(tensor& t, double scale, rng_stream& rng) {
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
}

double level_nonlinearity(int level, double x) {
    switch (level) {
        case 0: return x;             // low: identity
        case 1: return std::tanh(x);  // mid: odd, saturating
        default: return std::abs(x);  // high: even, rectifying
    }
}

double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

} // namespace

toy_backbone::toy_backbone(backbone_config cfg) : cfg_(cfg) {
    cfg_.validate();
}

const toy_backbone::projection_set& toy_backbone::projections_for(int height, int width,
                                                                  int channels) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_tuple(height, width, channels);
    auto it = cache_.find(key);
    if (it != cache_.end()) return *it->second;

    if (height % cfg_.grid_h != 0 || width % cfg_.grid_w != 0) {
        throw shape_error("image " + std::to_string(height) + "x" + std::to_string(width) +
                          " does not divide into a " + std::to_string(cfg_.grid_h) + "x" +
                          std::to_string(cfg_.grid_w) + " patch grid");
    }

    auto ps = std::make_shared<projection_set>();
    ps->patch_h = height / cfg_.grid_h;
    ps->patch_w = width / cfg_.grid_w;
    ps->channels = channels;
    const size_t patch_len = static_cast<size_t>(ps->patch_h) * ps->patch_w * channels;
    const size_t image_len = static_cast<size_t>(height) * width * channels;

    const uint64_t shape_key = derive_seed(cfg_.seed, "backbone",
                                           (static_cast<uint64_t>(height) << 32) | static_cast<uint64_t>(width),
                                           static_cast<uint64_t>(channels));
    for (int l = 0; l < 3; ++l) {
        rng_stream rng(derive_seed(shape_key, "level", static_cast<uint64_t>(l)));
        ps->level_w[l] = tensor::zeros({static_cast<size_t>(cfg_.level_channels), patch_len});
        fill_uniform(ps->level_w[l], std::sqrt(3.0 / static_cast<double>(patch_len)), rng);
        ps->level_b[l] = tensor::zeros({static_cast<size_t>(cfg_.level_channels)});
        fill_uniform(ps->level_b[l], 0.1, rng);
    }
    {
        rng_stream rng(derive_seed(shape_key, "cls"));
        ps->cls_w = tensor::zeros({static_cast<size_t>(cfg_.cls_channels), image_len});
        fill_uniform(ps->cls_w, std::sqrt(3.0 / static_cast<double>(image_len)), rng);
        ps->cls_b = tensor::zeros({static_cast<size_t>(cfg_.cls_channels)});
        fill_uniform(ps->cls_b, 0.1, rng);
    }

    auto [pos, inserted] = cache_.emplace(key, std::move(ps));
    (void)inserted;
    return *pos->second;
}

multi_level_features toy_backbone::extract(const image_data& img) const {
    if (img.pixels.size() != img.expected_size() || img.empty()) {
        throw shape_error("extract: malformed image payload");
    }
    const projection_set& ps = projections_for(img.height, img.width, img.channels);

    const int D = cfg_.level_channels;
    const int H = cfg_.grid_h, W = cfg_.grid_w;
    multi_level_features out;
    for (int l = 0; l < 3; ++l) out.level(l) = feature_grid(H, W, D);

    std::vector<double> patch(static_cast<size_t>(ps.patch_h) * ps.patch_w * img.channels);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            size_t idx = 0;
            for (int pi = 0; pi < ps.patch_h; ++pi) {
                const int row = i * ps.patch_h + pi;
                const size_t base = (static_cast<size_t>(row) * img.width + static_cast<size_t>(j) * ps.patch_w) * img.channels;
                for (int pj = 0; pj < ps.patch_w * img.channels; ++pj) {
                    patch[idx++] = img.pixels[base + pj];
                }
            }
            for (int l = 0; l < 3; ++l) {
                const tensor& w = ps.level_w[l];
                const tensor& b = ps.level_b[l];
                feature_grid& g = out.level(l);
                for (int c = 0; c < D; ++c) {
                    double s = 0.0;
                    const double* wr = w.data.data() + static_cast<size_t>(c) * patch.size();
                    for (size_t k = 0; k < patch.size(); ++k) s += wr[k] * patch[k];
                    g.at(i, j, c) = quantize(level_nonlinearity(l, s) + b.data[c]);
                }
            }
        }
    }

    out.z_cls.resize(cfg_.cls_channels);
    for (int c = 0; c < cfg_.cls_channels; ++c) {
        double s = ps.cls_b.data[c];
        const double* wr = ps.cls_w.data.data() + static_cast<size_t>(c) * img.pixels.size();
        for (size_t k = 0; k < img.pixels.size(); ++k) s += wr[k] * img.pixels[k];
        out.z_cls[c] = quantize(s);
    }
    return out;
}

} // namespace cot
