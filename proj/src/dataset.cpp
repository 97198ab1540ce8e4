#include "cot/dataset.hpp"

#include <algorithm>
#include <unordered_set>

namespace cot {

namespace {

int find_name(const std::vector<std::string>& names, const std::string& name,
              const char* what) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw lookup_error(std::string("unknown ") + what + " name: '" + name + "'");
    }
    return static_cast<int>(it - names.begin());
}

void check_unique(const std::vector<std::string>& names, const char* what) {
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) {
            throw validation_error(std::string("duplicate ") + what + " name: '" + n + "'");
        }
    }
}

} // namespace

int vocabulary::attr_id(const std::string& name) const {
    return find_name(attributes, name, "attribute");
}

int vocabulary::obj_id(const std::string& name) const {
    return find_name(objects, name, "object");
}

void vocabulary::validate() const {
    check_unique(attributes, "attribute");
    check_unique(objects, "object");
}

std::string pair_name(const vocabulary& v, composition_label y) {
    return "(" + v.attributes.at(y.attr_id) + ", " + v.objects.at(y.obj_id) + ")";
}

bool dataset::is_seen(composition_label y) const {
    return std::find(splits.seen_pairs.begin(), splits.seen_pairs.end(), y) != splits.seen_pairs.end();
}

bool dataset::is_unseen(composition_label y) const {
    return std::find(splits.unseen_pairs.begin(), splits.unseen_pairs.end(), y) != splits.unseen_pairs.end();
}

void dataset::validate() const {
    vocab.validate();

    auto check_label = [&](composition_label y, const char* where) {
        if (y.attr_id < 0 || y.attr_id >= vocab.n_attributes() ||
            y.obj_id < 0 || y.obj_id >= vocab.n_objects()) {
            throw validation_error(std::string("label out of range in ") + where);
        }
    };

    std::set<composition_label> seen_set;
    for (auto y : splits.seen_pairs) {
        check_label(y, "seen_pairs");
        if (!seen_set.insert(y).second) {
            throw validation_error("duplicate seen pair " + pair_name(vocab, y));
        }
    }
    std::set<composition_label> unseen_set;
    for (auto y : splits.unseen_pairs) {
        check_label(y, "unseen_pairs");
        if (!unseen_set.insert(y).second) {
            throw validation_error("duplicate unseen pair " + pair_name(vocab, y));
        }
        if (seen_set.count(y)) {
            throw validation_error("pair " + pair_name(vocab, y) +
                                   " listed as both seen and unseen");
        }
    }

    for (const auto& r : train) {
        check_label(r.label, "train records");
        if (!seen_set.count(r.label)) {
            throw validation_error("training record " + std::to_string(r.id) +
                                   " carries non-seen pair " + pair_name(vocab, r.label));
        }
    }
    for (const auto& r : val) check_label(r.label, "val records");
    for (const auto& r : test) check_label(r.label, "test records");

    for (const auto* part : {&train, &val, &test}) {
        for (const auto& r : *part) {
            if (r.kind == payload_kind::image) {
                if (r.image.pixels.size() != r.image.expected_size()) {
                    throw validation_error("record " + std::to_string(r.id) +
                                           ": image payload size mismatch");
                }
                for (double p : r.image.pixels) {
                    if (!(p >= 0.0 && p <= 1.0)) {
                        throw validation_error("record " + std::to_string(r.id) +
                                               ": pixel outside [0,1]");
                    }
                }
            } else if (!r.image.pixels.empty()) {
                throw validation_error("record " + std::to_string(r.id) +
                                       ": feature_ref record must not carry pixels");
            }
        }
    }
}

int64_t frequency_table::total() const {
    int64_t s = 0;
    for (int64_t c : counts) s += c;
    return s;
}

frequency_table attribute_frequency_table(const dataset& ds) {
    frequency_table t(ds.vocab.n_objects(), ds.vocab.n_attributes());
    for (const auto& r : ds.train) {
        t.at(r.label.obj_id, r.label.attr_id) += 1;
    }
    return t;
}

} // namespace cot
