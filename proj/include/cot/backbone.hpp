#ifndef COT_BACKBONE_HPP
#define COT_BACKBONE_HPP

#include <map>
#include <memory>
#include <mutex>

#include "cot/dataset.hpp"
#include "cot/tensor.hpp"

namespace cot {

struct backbone_config {
    int grid_h = 4, grid_w = 4;
    int level_channels = 32;   // D, shared by the three levels
    int cls_channels = 32;     // width of the global token
    uint64_t seed = 0;
    int level_count = 3;

    void validate() const;
};

struct multi_level_features {
    feature_grid z_low, z_mid, z_high;
    std::vector<double> z_cls;

    const feature_grid& level(int n) const {
        return n == 0 ? z_low : (n == 1 ? z_mid : z_high);
    }
    feature_grid& level(int n) { return n == 0 ? z_low : (n == 1 ? z_mid : z_high); }
};

// Frozen, seeded stand-in for the intermediate taps of a pretrained backbone.
// Each spatial cell is a fixed random projection of its image patch with a
// level-specific nonlinearity (identity / tanh / abs) plus a bias; the global
// token is a projection of the whole image. Parameters are derived from
// (seed, image shape) and never trained. Values are snapped to the f32 grid
// so feature dumps round-trip exactly.
class toy_backbone {
public:
    explicit toy_backbone(backbone_config cfg);

    multi_level_features extract(const image_data& img) const;

    const backbone_config& config() const { return cfg_; }

private:
    struct projection_set;

    const projection_set& projections_for(int height, int width, int channels) const;

    backbone_config cfg_;
    mutable std::mutex mu_;
    mutable std::map<std::tuple<int, int, int>, std::shared_ptr<projection_set>> cache_;
};

} // namespace cot

#endif
