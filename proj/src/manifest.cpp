#include "cot/manifest.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "binary file formats assume a little-endian host");

namespace cot {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint32_t kImagesMagic = 0x49544f43;  // "COTI"
constexpr uint32_t kImagesVersion = 1;

template <typename T>
void write_raw(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw io_error(std::string("truncated file while reading ") + what);
    return v;
}

int line_of_offset(const std::string& text, size_t byte) {
    int line = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

composition_label parse_pair(const json& j, const vocabulary& vocab, const char* where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_string() || !j[1].is_string()) {
        throw format_error(std::string(where) + ": pair must be [attribute, object]");
    }
    return {vocab.attr_id(j[0].get<std::string>()), vocab.obj_id(j[1].get<std::string>())};
}

std::vector<sample_record> parse_records(const json& j, const vocabulary& vocab,
                                         bool has_images, bool has_features, const char* where) {
    std::vector<sample_record> out;
    if (j.is_null()) return out;
    if (!j.is_array()) throw format_error(std::string(where) + ": expected an array");
    out.reserve(j.size());
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("id") || !e.contains("attribute") || !e.contains("object")) {
            throw format_error(std::string(where) + ": record must be {id, attribute, object}");
        }
        sample_record r;
        r.id = e.at("id").get<uint64_t>();
        r.label = {vocab.attr_id(e.at("attribute").get<std::string>()),
                   vocab.obj_id(e.at("object").get<std::string>())};
        if (has_images) {
            r.kind = payload_kind::image;
        } else if (has_features) {
            r.kind = payload_kind::feature_ref;
        } else {
            throw format_error("manifest references neither an images nor a features file");
        }
        out.push_back(std::move(r));
    }
    return out;
}

// Loads the blob and attaches pixels to every image record, matched by id.
void attach_images(const std::string& path, dataset& ds) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open images file: " + path);
    if (read_raw<uint32_t>(in, "images magic") != kImagesMagic) {
        throw format_error("bad magic in images file: " + path);
    }
    if (read_raw<uint32_t>(in, "images version") != kImagesVersion) {
        throw format_error("unsupported images file version: " + path);
    }
    const auto h = read_raw<uint32_t>(in, "height");
    const auto w = read_raw<uint32_t>(in, "width");
    const auto c = read_raw<uint32_t>(in, "channels");
    const auto count = read_raw<uint64_t>(in, "record count");

    std::unordered_map<uint64_t, image_data> by_id;
    const size_t n = static_cast<size_t>(h) * w * c;
    std::vector<float> buf(n);
    for (uint64_t i = 0; i < count; ++i) {
        const auto id = read_raw<uint64_t>(in, "image record id");
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
        if (!in) throw io_error("truncated pixel data at record " + std::to_string(i));
        image_data img;
        img.height = static_cast<int>(h);
        img.width = static_cast<int>(w);
        img.channels = static_cast<int>(c);
        img.pixels.assign(buf.begin(), buf.end());
        by_id.emplace(id, std::move(img));
    }

    for (auto* part : {&ds.train, &ds.val, &ds.test}) {
        for (auto& r : *part) {
            auto it = by_id.find(r.id);
            if (it == by_id.end()) {
                throw validation_error("no image stored for record " + std::to_string(r.id));
            }
            r.image = it->second;
        }
    }
}

json pair_json(const vocabulary& v, composition_label y) {
    return json::array({v.attributes.at(y.attr_id), v.objects.at(y.obj_id)});
}

json records_json(const vocabulary& v, const std::vector<sample_record>& recs) {
    json arr = json::array();
    for (const auto& r : recs) {
        arr.push_back({{"id", r.id},
                       {"attribute", v.attributes.at(r.label.attr_id)},
                       {"object", v.objects.at(r.label.obj_id)}});
    }
    return arr;
}

} // namespace

dataset load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open manifest: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw format_error("manifest parse failure at line " +
                           std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
    }

    dataset ds;
    try {
        ds.vocab.attributes = j.at("attributes").get<std::vector<std::string>>();
        ds.vocab.objects = j.at("objects").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw format_error(std::string("manifest vocabularies: ") + e.what());
    }
    ds.vocab.validate();

    for (const auto& p : j.value("seen_pairs", json::array())) {
        ds.splits.seen_pairs.push_back(parse_pair(p, ds.vocab, "seen_pairs"));
    }
    for (const auto& p : j.value("unseen_pairs", json::array())) {
        ds.splits.unseen_pairs.push_back(parse_pair(p, ds.vocab, "unseen_pairs"));
    }

    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const char* key) -> std::string {
        if (!j.contains(key) || j.at(key).is_null()) return {};
        std::string p = j.at(key).get<std::string>();
        if (p.empty()) return {};
        fs::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    ds.images_path = resolve("images");
    ds.features_path = resolve("features");
    ds.embeddings_path = resolve("embeddings");

    const bool has_images = !ds.images_path.empty();
    const bool has_features = !ds.features_path.empty();
    ds.train = parse_records(j.value("train", json()), ds.vocab, has_images, has_features, "train");
    ds.val = parse_records(j.value("val", json()), ds.vocab, has_images, has_features, "val");
    ds.test = parse_records(j.value("test", json()), ds.vocab, has_images, has_features, "test");

    if (has_images) attach_images(ds.images_path, ds);

    ds.validate();
    return ds;
}

void write_images_file(const std::string& path, const std::vector<const sample_record*>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write images file: " + path);

    int h = 0, w = 0, c = 0;
    for (const auto* r : records) {
        if (r->kind != payload_kind::image) continue;
        if (h == 0) {
            h = r->image.height;
            w = r->image.width;
            c = r->image.channels;
        } else if (r->image.height != h || r->image.width != w || r->image.channels != c) {
            throw shape_error("images file requires a uniform image shape");
        }
    }

    write_raw(out, kImagesMagic);
    write_raw(out, kImagesVersion);
    write_raw(out, static_cast<uint32_t>(h));
    write_raw(out, static_cast<uint32_t>(w));
    write_raw(out, static_cast<uint32_t>(c));
    write_raw(out, static_cast<uint64_t>(records.size()));

    std::vector<float> buf;
    for (const auto* r : records) {
        write_raw(out, r->id);
        buf.assign(r->image.pixels.begin(), r->image.pixels.end());
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw io_error("write failure on images file: " + path);
}

void save_manifest(const dataset& ds, const std::string& dir) {
    fs::create_directories(dir);

    std::vector<const sample_record*> with_pixels;
    for (const auto* part : {&ds.train, &ds.val, &ds.test}) {
        for (const auto& r : *part) {
            if (r.kind == payload_kind::image) with_pixels.push_back(&r);
        }
    }

    json j;
    j["attributes"] = ds.vocab.attributes;
    j["objects"] = ds.vocab.objects;
    json seen = json::array(), unseen = json::array();
    for (auto y : ds.splits.seen_pairs) seen.push_back(pair_json(ds.vocab, y));
    for (auto y : ds.splits.unseen_pairs) unseen.push_back(pair_json(ds.vocab, y));
    j["seen_pairs"] = seen;
    j["unseen_pairs"] = unseen;
    if (!with_pixels.empty()) {
        write_images_file((fs::path(dir) / "images.bin").string(), with_pixels);
        j["images"] = "images.bin";
    }
    if (!ds.features_path.empty()) j["features"] = ds.features_path;
    if (!ds.embeddings_path.empty()) {
        // keep sibling files relative so the directory is relocatable
        fs::path p(ds.embeddings_path);
        j["embeddings"] = p.parent_path() == fs::path(dir) ? p.filename().string() : p.string();
    }
    j["train"] = records_json(ds.vocab, ds.train);
    j["val"] = records_json(ds.vocab, ds.val);
    j["test"] = records_json(ds.vocab, ds.test);

    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write manifest in " + dir);
    out << j.dump(2) << "\n";
}

} // namespace cot
