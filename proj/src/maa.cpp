#include "cot/maa.hpp"

#include <cmath>

namespace cot {

std::string to_string(mix_level m) { return m == mix_level::input ? "input" : "embedding"; }

std::string to_string(virtual_att_mode m) {
    return m == virtual_att_mode::mixed_candidate ? "mixed_candidate" : "weighted_targets";
}

mix_level mix_level_from_string(const std::string& s) {
    if (s == "input") return mix_level::input;
    if (s == "embedding") return mix_level::embedding;
    throw config_error("unknown mix level '" + s + "' (expected input|embedding)");
}

virtual_att_mode virtual_att_mode_from_string(const std::string& s) {
    if (s == "mixed_candidate") return virtual_att_mode::mixed_candidate;
    if (s == "weighted_targets") return virtual_att_mode::weighted_targets;
    throw config_error("unknown virtual attribute loss mode '" + s + "'");
}

void maa_config::validate() const {
    if (!(exponent > 0.0)) throw config_error("maa exponent must be positive");
    if (start_epoch < 1) throw config_error("maa start_epoch must be >= 1");
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw config_error("maa p0 must lie in [0,1]");
    if (!(cap >= 0.0 && cap <= 1.0)) throw config_error("maa cap must lie in [0,1]");
    if (ramp_increment < 0.0) throw config_error("maa ramp_increment must be >= 0");
    if (ramp_period < 1) throw config_error("maa ramp_period must be >= 1");
}

std::vector<double> minority_sampling_weights(const frequency_table& freq, int object_id,
                                              double exponent) {
    if (object_id < 0 || object_id >= freq.n_objects) {
        throw argument_error("minority_sampling_weights: object id out of range");
    }
    if (!(exponent > 0.0)) throw argument_error("minority_sampling_weights: exponent must be > 0");

    std::vector<double> kappa(static_cast<size_t>(freq.n_attributes), 0.0);
    double sum = 0.0;
    for (int a = 0; a < freq.n_attributes; ++a) {
        const int64_t count = freq.at(object_id, a);
        if (count > 0) {
            kappa[static_cast<size_t>(a)] = std::pow(static_cast<double>(count), -exponent);
            sum += kappa[static_cast<size_t>(a)];
        }
    }
    if (!(sum > 0.0)) {
        throw argument_error("minority_sampling_weights: object " + std::to_string(object_id) +
                             " has no attribute with positive count");
    }
    for (auto& k : kappa) k /= sum;
    return kappa;
}

double maa_apply_probability(int epoch, const maa_config& cfg) {
    if (epoch < 1) throw argument_error("maa_apply_probability: epoch must be >= 1");
    if (epoch < cfg.start_epoch) return 0.0;
    const int effective = epoch - cfg.start_epoch + 1;  // 1-based within the ramp
    const int blocks = (effective - 1) / cfg.ramp_period;
    return std::min(cfg.cap, cfg.p0 + cfg.ramp_increment * blocks);
}

train_pair_index train_pair_index::build(const dataset& ds) {
    train_pair_index idx;
    idx.n_objects = ds.vocab.n_objects();
    idx.n_attributes = ds.vocab.n_attributes();
    idx.by_object_attr.assign(static_cast<size_t>(idx.n_objects),
                              std::vector<std::vector<size_t>>(static_cast<size_t>(idx.n_attributes)));
    for (size_t i = 0; i < ds.train.size(); ++i) {
        const auto& r = ds.train[i];
        idx.by_object_attr[static_cast<size_t>(r.label.obj_id)]
                          [static_cast<size_t>(r.label.attr_id)].push_back(i);
    }
    return idx;
}

std::optional<size_t> draw_auxiliary(const sample_record& record, const dataset& ds,
                                     const train_pair_index& index,
                                     const std::vector<double>& kappa, rng_stream& rng) {
    const int o = record.label.obj_id;
    const auto& rows = index.by_object_attr.at(static_cast<size_t>(o));

    double total = 0.0;
    for (int a = 0; a < index.n_attributes; ++a) {
        if (a == record.label.attr_id) continue;
        if (rows[static_cast<size_t>(a)].empty()) continue;
        total += kappa[static_cast<size_t>(a)];
    }
    if (!(total > 0.0)) return std::nullopt;  // single-attribute object: no pair

    const double u = rng.uniform() * total;
    double acc = 0.0;
    int chosen = -1;
    for (int a = 0; a < index.n_attributes; ++a) {
        if (a == record.label.attr_id) continue;
        if (rows[static_cast<size_t>(a)].empty()) continue;
        acc += kappa[static_cast<size_t>(a)];
        if (u < acc) { chosen = a; break; }
    }
    if (chosen < 0) {  // u landed on the accumulated rounding tail
        for (int a = index.n_attributes - 1; a >= 0; --a) {
            if (a != record.label.attr_id && !rows[static_cast<size_t>(a)].empty()) {
                chosen = a;
                break;
            }
        }
    }
    const auto& pool = rows[static_cast<size_t>(chosen)];
    const size_t pick = pool[rng.index(pool.size())];
    (void)ds;
    return pick;
}

virtual_sample mix_virtual_sample(const sample_record& a, const sample_record& b,
                                  const word_embedding_table& table, double lambda,
                                  const feature_map* features) {
    if (a.label.obj_id != b.label.obj_id) {
        throw pairing_error("mix_virtual_sample: records carry different objects");
    }
    if (a.label.attr_id == b.label.attr_id) {
        throw pairing_error("mix_virtual_sample: records carry the same attribute");
    }
    if (a.kind != b.kind) {
        throw pairing_error("mix_virtual_sample: payload kinds differ");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw argument_error("mix_virtual_sample: lambda must lie in [0,1]");
    }

    virtual_sample v;
    v.kind = a.kind;
    v.object_id = a.label.obj_id;
    v.attr_a = a.label.attr_id;
    v.attr_b = b.label.attr_id;
    v.lambda = lambda;
    v.source_a = a.id;
    v.source_b = b.id;

    const auto& wa = table.attribute(a.label.attr_id);
    const auto& wb = table.attribute(b.label.attr_id);
    v.mixed_attr.resize(wa.size());
    for (size_t i = 0; i < wa.size(); ++i) {
        v.mixed_attr[i] = lambda * wa[i] + (1.0 - lambda) * wb[i];
    }

    if (a.kind == payload_kind::image) {
        if (a.image.height != b.image.height || a.image.width != b.image.width ||
            a.image.channels != b.image.channels) {
            throw pairing_error("mix_virtual_sample: image shapes differ");
        }
        v.mixed_image.height = a.image.height;
        v.mixed_image.width = a.image.width;
        v.mixed_image.channels = a.image.channels;
        v.mixed_image.pixels.resize(a.image.pixels.size());
        for (size_t i = 0; i < a.image.pixels.size(); ++i) {
            v.mixed_image.pixels[i] = lambda * a.image.pixels[i] + (1.0 - lambda) * b.image.pixels[i];
        }
    } else {
        if (!features) throw argument_error("mix_virtual_sample: feature map required");
        auto ita = features->find(a.id);
        auto itb = features->find(b.id);
        if (ita == features->end() || itb == features->end()) {
            throw lookup_error("mix_virtual_sample: missing feature record");
        }
        const auto& fa = ita->second;
        const auto& fb = itb->second;
        for (int l = 0; l < 3; ++l) {
            if (!fa.level(l).same_shape(fb.level(l))) {
                throw pairing_error("mix_virtual_sample: feature shapes differ");
            }
            feature_grid g(fa.level(l).h, fa.level(l).w, fa.level(l).c);
            for (size_t i = 0; i < g.v.size(); ++i) {
                g.v[i] = lambda * fa.level(l).v[i] + (1.0 - lambda) * fb.level(l).v[i];
            }
            v.mixed_features.level(l) = std::move(g);
        }
        if (fa.z_cls.size() != fb.z_cls.size()) {
            throw pairing_error("mix_virtual_sample: z_cls widths differ");
        }
        v.mixed_features.z_cls.resize(fa.z_cls.size());
        for (size_t i = 0; i < fa.z_cls.size(); ++i) {
            v.mixed_features.z_cls[i] = lambda * fa.z_cls[i] + (1.0 - lambda) * fb.z_cls[i];
        }
    }
    return v;
}

} // namespace cot
