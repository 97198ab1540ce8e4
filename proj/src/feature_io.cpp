#include "cot/feature_io.hpp"

namespace cot {

namespace {

constexpr uint32_t kFeatureMagic = 0x46544f43;  // "COTF"
constexpr uint32_t kFeatureVersion = 1;

template <typename T>
void write_raw(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw io_error("truncated feature file while reading " + what);
    return v;
}

void write_grid_f32(std::ostream& out, const feature_grid& g) {
    for (double v : g.v) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
}

void read_f32_block(std::istream& in, std::vector<double>& out, size_t n, const std::string& what) {
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw io_error("truncated feature file in " + what);
    out.assign(buf.begin(), buf.end());
}

} // namespace

void write_feature_file(const std::string& path,
                        const std::vector<std::pair<uint64_t, const multi_level_features*>>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write feature file: " + path);

    uint32_t h = 0, w = 0, d = 0, d_cls = 0;
    if (!records.empty()) {
        const auto& f = *records.front().second;
        h = static_cast<uint32_t>(f.z_low.h);
        w = static_cast<uint32_t>(f.z_low.w);
        d = static_cast<uint32_t>(f.z_low.c);
        d_cls = static_cast<uint32_t>(f.z_cls.size());
    }
    write_raw(out, kFeatureMagic);
    write_raw(out, kFeatureVersion);
    write_raw(out, h);
    write_raw(out, w);
    write_raw(out, d);
    write_raw(out, d_cls);
    write_raw(out, static_cast<uint64_t>(records.size()));

    for (const auto& [id, f] : records) {
        for (int l = 0; l < 3; ++l) {
            const auto& g = f->level(l);
            if (g.h != static_cast<int>(h) || g.w != static_cast<int>(w) || g.c != static_cast<int>(d)) {
                throw shape_error("feature record " + std::to_string(id) + " has inconsistent shape");
            }
        }
        if (f->z_cls.size() != d_cls) {
            throw shape_error("feature record " + std::to_string(id) + " has inconsistent z_cls width");
        }
        write_raw(out, id);
        write_grid_f32(out, f->z_low);
        write_grid_f32(out, f->z_mid);
        write_grid_f32(out, f->z_high);
        for (double v : f->z_cls) {
            const float fv = static_cast<float>(v);
            out.write(reinterpret_cast<const char*>(&fv), sizeof(float));
        }
    }
    if (!out) throw io_error("write failure on feature file: " + path);
}

feature_reader::feature_reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw io_error("cannot open feature file: " + path);
    if (read_raw<uint32_t>(in_, "magic") != kFeatureMagic) {
        throw format_error("bad magic in feature file: " + path);
    }
    if (read_raw<uint32_t>(in_, "version") != kFeatureVersion) {
        throw format_error("unsupported feature file version: " + path);
    }
    header_.h = read_raw<uint32_t>(in_, "H");
    header_.w = read_raw<uint32_t>(in_, "W");
    header_.d = read_raw<uint32_t>(in_, "D");
    header_.d_cls = read_raw<uint32_t>(in_, "D_cls");
    header_.record_count = read_raw<uint64_t>(in_, "record count");
    if (header_.record_count > 0 && (header_.h == 0 || header_.w == 0 || header_.d == 0)) {
        throw format_error("feature file header has zero dimensions: " + path);
    }

    // A body that is not a whole number of records means the values per
    // record disagree with the header widths. A whole-record shortfall is
    // treated as truncation and surfaces as io_error at the missing record.
    const auto body_start = in_.tellg();
    in_.seekg(0, std::ios::end);
    const uint64_t body_bytes = static_cast<uint64_t>(in_.tellg() - body_start);
    in_.seekg(body_start);
    const uint64_t record_bytes =
        8 + (3ull * header_.h * header_.w * header_.d + header_.d_cls) * sizeof(float);
    if (header_.record_count > 0 && body_bytes % record_bytes != 0) {
        throw format_error("feature file body does not match header widths: " + path);
    }
    if (body_bytes / record_bytes > header_.record_count) {
        throw format_error("feature file carries more records than the header declares: " + path);
    }
}

bool feature_reader::next(uint64_t& sample_id, multi_level_features& out) {
    if (read_ >= header_.record_count) return false;
    const std::string where = "record " + std::to_string(read_) + " of " + path_;
    sample_id = read_raw<uint64_t>(in_, where + " id");

    const size_t grid_n = static_cast<size_t>(header_.h) * header_.w * header_.d;
    for (int l = 0; l < 3; ++l) {
        feature_grid g(static_cast<int>(header_.h), static_cast<int>(header_.w),
                       static_cast<int>(header_.d));
        read_f32_block(in_, g.v, grid_n, where);
        out.level(l) = std::move(g);
    }
    read_f32_block(in_, out.z_cls, header_.d_cls, where);
    ++read_;
    return true;
}

feature_map read_feature_map(const std::string& path) {
    feature_reader reader(path);
    feature_map out;
    uint64_t id = 0;
    multi_level_features f;
    while (reader.next(id, f)) out[id] = f;
    return out;
}

} // namespace cot
