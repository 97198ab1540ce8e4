#include "cot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cot {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// pixels are snapped to the f32 grid so the on-disk image blob round-trips
// value-exactly
double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    h = h - std::floor(h);
    const double i = std::floor(h * 6.0);
    const double f = h * 6.0 - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

bool shape_mask(int obj, double di, double dj, double r) {
    const double d = std::sqrt(di * di + dj * dj);
    switch (obj % 6) {
        case 0: return std::abs(di) < r && std::abs(dj) < r;                    // square
        case 1: return d < r;                                                   // disc
        case 2: return di > -r && di < r && std::abs(dj) < 0.7 * (di + r);      // triangle
        case 3: return d < r && d > 0.55 * r;                                   // ring
        case 4: return (std::abs(di) < 0.33 * r && std::abs(dj) < r) ||
                       (std::abs(dj) < 0.33 * r && std::abs(di) < r);           // cross
        default: return std::abs(di) + std::abs(dj) < 1.3 * r;                  // diamond
    }
}

image_data render_sample(int obj, int attr, int size, rng_stream& rng) {
    image_data img;
    img.height = size;
    img.width = size;
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(size) * size * 3);

    const double cy = size / 2.0 + rng.uniform(-size / 10.0, size / 10.0);
    const double cx = size / 2.0 + rng.uniform(-size / 10.0, size / 10.0);
    const double base_r = size * 0.30 * (0.92 + 0.06 * (obj % 3));
    const double r = base_r * rng.uniform(0.9, 1.1);

    // attribute sets the fill color; a small object-dependent hue shift makes
    // the attribute's appearance context-sensitive
    const double hue = 0.61803398875 * attr + 0.15 + 0.025 * ((obj % 3) - 1);
    double color[3];
    hsv_to_rgb(hue, 0.75, 0.95, color);

    size_t idx = 0;
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            const bool inside = shape_mask(obj, i - cy, j - cx, r);
            double texture = 1.0;
            if (attr % 3 == 1) {
                texture = 0.75 + 0.25 * ((i / 2) % 2);          // stripes
            } else if (attr % 3 == 2) {
                texture = 0.7 + 0.3 * ((i % 4 < 2) && (j % 4 < 2));  // dots
            }
            for (int k = 0; k < 3; ++k) {
                const double base = inside ? color[k] * texture : 0.12;
                img.pixels[idx++] = quantize(clamp01(base + rng.uniform(-0.03, 0.03)));
            }
        }
    }
    return img;
}

} // namespace

std::vector<double> zipf_weights(const std::vector<int>& ranks, double exponent) {
    std::vector<double> w(ranks.size());
    for (size_t i = 0; i < ranks.size(); ++i) {
        w[i] = std::pow(static_cast<double>(ranks[i] + 1), -exponent);
    }
    return w;
}

std::vector<int> zipf_allocate(int total, const std::vector<double>& weights) {
    if (weights.empty()) throw argument_error("zipf_allocate: empty weight vector");
    if (total < 0) throw argument_error("zipf_allocate: negative total");
    double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(sum > 0.0)) throw argument_error("zipf_allocate: weights must have positive mass");

    const size_t n = weights.size();
    std::vector<int> counts(n, 0);
    std::vector<std::pair<double, size_t>> fout;  // (fraction, index)
    int assigned = 0;
    for (size_t i = 0; i < n; ++i) {
        const double quota = total * weights[i] / sum;
        counts[i] = static_cast<int>(std::floor(quota));
        assigned += counts[i];
        fout.push_back({quota - counts[i], i});
    }
    std::stable_sort(fout.begin(), fout.end(), [](const auto& a, const auto& b) {
        return a.first > b.first;  // largest fraction first; stable keeps lower index on ties
    });
    for (int k = 0; k < total - assigned; ++k) counts[fout[static_cast<size_t>(k)].second] += 1;
    return counts;
}

dataset generate_synthetic_dataset(const synthetic_config& cfg, uint64_t seed) {
    if (cfg.n_attributes < 2) throw config_error("need at least 2 attributes");
    if (cfg.n_objects < 1) throw config_error("need at least 1 object");
    if (!(cfg.unseen_fraction > 0.0 && cfg.unseen_fraction < 1.0)) {
        throw config_error("unseen_fraction must lie in (0,1)");
    }
    if (cfg.image_size < 4) throw config_error("image_size too small");
    if (cfg.n_train < 1 || cfg.n_eval < 1) throw config_error("n_train and n_eval must be positive");

    dataset ds;
    for (int a = 0; a < cfg.n_attributes; ++a) ds.vocab.attributes.push_back("attr" + std::to_string(a));
    for (int o = 0; o < cfg.n_objects; ++o) ds.vocab.objects.push_back("obj" + std::to_string(o));

    const int n_pairs = cfg.n_attributes * cfg.n_objects;
    const int n_unseen = static_cast<int>(std::ceil(cfg.unseen_fraction * n_pairs));
    const int max_unseen = n_pairs - cfg.n_objects;  // each object keeps its head attribute
    if (n_unseen > max_unseen) {
        throw config_error("requested " + std::to_string(n_unseen) +
                           " unseen pairs but only " + std::to_string(max_unseen) +
                           " are eligible (each object keeps at least one seen attribute)");
    }

    // hold out a seeded shuffle's first eligible pairs; attribute 0 is every
    // object's most frequent class and never leaves training
    std::vector<composition_label> all_pairs;
    for (int o = 0; o < cfg.n_objects; ++o) {
        for (int a = 0; a < cfg.n_attributes; ++a) all_pairs.push_back({a, o});
    }
    {
        rng_stream rng(derive_seed(seed, "unseen"));
        for (size_t i = all_pairs.size(); i > 1; --i) {
            std::swap(all_pairs[i - 1], all_pairs[rng.index(i)]);
        }
    }
    std::set<composition_label> unseen_set;
    for (const auto& p : all_pairs) {
        if (static_cast<int>(unseen_set.size()) == n_unseen) break;
        if (p.attr_id == 0) continue;
        unseen_set.insert(p);
    }
    for (int o = 0; o < cfg.n_objects; ++o) {
        for (int a = 0; a < cfg.n_attributes; ++a) {
            composition_label y{a, o};
            if (unseen_set.count(y)) {
                ds.splits.unseen_pairs.push_back(y);
            } else {
                ds.splits.seen_pairs.push_back(y);
            }
        }
    }

    // per-object training mass, Zipf-shaped over that object's seen attributes
    std::vector<composition_label> train_labels;
    for (int o = 0; o < cfg.n_objects; ++o) {
        const int share = cfg.n_train / cfg.n_objects + (o < cfg.n_train % cfg.n_objects ? 1 : 0);
        std::vector<int> ranks;
        for (int a = 0; a < cfg.n_attributes; ++a) {
            if (!unseen_set.count({a, o})) ranks.push_back(a);
        }
        const auto counts = zipf_allocate(share, zipf_weights(ranks, cfg.zipf_exponent));
        for (size_t i = 0; i < ranks.size(); ++i) {
            for (int k = 0; k < counts[i]; ++k) train_labels.push_back({ranks[i], o});
        }
    }
    {
        rng_stream rng(derive_seed(seed, "trainorder"));
        for (size_t i = train_labels.size(); i > 1; --i) {
            std::swap(train_labels[i - 1], train_labels[rng.index(i)]);
        }
    }

    uint64_t next_id = 0;
    auto emit = [&](std::vector<sample_record>& out, composition_label y) {
        sample_record r;
        r.id = next_id++;
        r.label = y;
        r.kind = payload_kind::image;
        rng_stream rng(derive_seed(seed, "render", r.id));
        r.image = render_sample(y.obj_id, y.attr_id, cfg.image_size, rng);
        out.push_back(std::move(r));
    };

    for (auto y : train_labels) emit(ds.train, y);

    rng_stream eval_rng(derive_seed(seed, "evallabels"));
    auto draw_pair = [&]() -> composition_label {
        const int idx = static_cast<int>(eval_rng.index(static_cast<size_t>(n_pairs)));
        return {idx % cfg.n_attributes, idx / cfg.n_attributes};
    };
    for (int i = 0; i < cfg.n_eval; ++i) emit(ds.val, draw_pair());
    for (int i = 0; i < cfg.n_eval; ++i) emit(ds.test, draw_pair());

    ds.validate();
    return ds;
}

} // namespace cot
