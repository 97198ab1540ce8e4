#include "cot/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace cot {

using nlohmann::json;

std::string to_string(level_selection s) {
    switch (s) {
        case level_selection::low: return "low";
        case level_selection::mid: return "mid";
        case level_selection::high: return "high";
        default: return "mix";
    }
}

std::string to_string(guidance_mode g) {
    return g == guidance_mode::object ? "object" : "attribute";
}

level_selection level_selection_from_string(const std::string& s) {
    if (s == "low") return level_selection::low;
    if (s == "mid") return level_selection::mid;
    if (s == "high") return level_selection::high;
    if (s == "mix") return level_selection::mix;
    throw config_error("unknown level selection '" + s + "' (expected low|mid|high|mix)");
}

guidance_mode guidance_from_string(const std::string& s) {
    if (s == "object") return guidance_mode::object;
    if (s == "attribute") return guidance_mode::attribute;
    throw config_error("unknown guidance '" + s + "' (expected object|attribute)");
}

std::vector<int> model_config::selected_levels() const {
    switch (levels) {
        case level_selection::low: return {0};
        case level_selection::mid: return {1};
        case level_selection::high: return {2};
        default: return {0, 1, 2};
    }
}

void model_config::validate() const {
    if (grid_h < 1 || grid_w < 1 || level_channels < 1 || cls_channels < 1) {
        throw config_error("model grid/channel dimensions must be positive");
    }
    if (embed_dim < 1) throw config_error("embed_dim must be positive");
    if (hidden_dim < 1) throw config_error("hidden_dim must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw config_error("dropout_rate must lie in [0,1)");
    }
}

std::string model_config::to_json_string() const {
    json j;
    j["grid_h"] = grid_h;
    j["grid_w"] = grid_w;
    j["level_channels"] = level_channels;
    j["cls_channels"] = cls_channels;
    j["embed_dim"] = embed_dim;
    j["hidden_dim"] = hidden_dim;
    j["dropout_rate"] = dropout_rate;
    j["levels"] = to_string(levels);
    j["guidance"] = to_string(guidance);
    j["init_seed"] = init_seed;
    return j.dump();
}

model_config model_config::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw format_error(std::string("model config: ") + e.what());
    }
    model_config c;
    c.grid_h = j.at("grid_h").get<int>();
    c.grid_w = j.at("grid_w").get<int>();
    c.level_channels = j.at("level_channels").get<int>();
    c.cls_channels = j.at("cls_channels").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.levels = level_selection_from_string(j.at("levels").get<std::string>());
    c.guidance = guidance_from_string(j.at("guidance").get<std::string>());
    c.init_seed = j.at("init_seed").get<uint64_t>();
    c.validate();
    return c;
}

uint64_t model_config::hash() const {
    const std::string s = to_json_string();
    uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

void fill_fan_in_uniform(tensor& t, size_t fan_in, rng_stream& rng) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = rng.uniform(-a, a);
}

} // namespace

model_params model_params::init(const model_config& cfg) {
    cfg.validate();
    model_params p;
    p.cfg = cfg;

    const size_t D = static_cast<size_t>(cfg.level_channels);
    const size_t Dc = static_cast<size_t>(cfg.cls_channels);
    const size_t dw = static_cast<size_t>(cfg.embed_dim);
    const size_t hid = static_cast<size_t>(cfg.hidden_dim);
    const auto levels = cfg.selected_levels();

    for (int l : levels) {
        p.att_ch_w[l] = tensor::zeros({D, 2 * D});
        p.att_ch_b[l] = tensor::zeros({D});
        p.att_sp_w[l] = tensor::zeros({3, 3});
        p.att_sp_b[l] = tensor::zeros({1});
    }
    p.eo_w = tensor::zeros({dw, Dc});
    p.eo_b = tensor::zeros({dw});
    p.ea_w = tensor::zeros({dw, levels.size() * D});
    p.ea_b = tensor::zeros({dw});
    p.ec_w = tensor::zeros({dw, 2 * dw});
    p.ec_b = tensor::zeros({dw});
    p.g_w1 = tensor::zeros({hid, 2 * dw});
    p.g_b1 = tensor::zeros({hid});
    p.g_w2 = tensor::zeros({hid, hid});
    p.g_b2 = tensor::zeros({hid});
    p.g_w3 = tensor::zeros({dw, hid});
    p.g_b3 = tensor::zeros({dw});

    size_t tensor_index = 0;
    p.visit([&](const std::string&, tensor& t) {
        if (t.shape.size() == 1) {
            ++tensor_index;  // biases start at zero
            return;
        }
        rng_stream rng(derive_seed(cfg.init_seed, "param", tensor_index));
        fill_fan_in_uniform(t, t.cols(), rng);
        ++tensor_index;
    });
    return p;
}

void model_params::visit(const std::function<void(const std::string&, tensor&)>& fn) {
    static const char* level_names[3] = {"low", "mid", "high"};
    for (int l = 0; l < 3; ++l) {
        if (att_ch_w[l].empty()) continue;
        const std::string lv = level_names[l];
        fn("att_ch_w." + lv, att_ch_w[l]);
        fn("att_ch_b." + lv, att_ch_b[l]);
        fn("att_sp_w." + lv, att_sp_w[l]);
        fn("att_sp_b." + lv, att_sp_b[l]);
    }
    fn("eo_w", eo_w);
    fn("eo_b", eo_b);
    fn("ea_w", ea_w);
    fn("ea_b", ea_b);
    fn("ec_w", ec_w);
    fn("ec_b", ec_b);
    fn("g_w1", g_w1);
    fn("g_b1", g_b1);
    fn("g_w2", g_w2);
    fn("g_b2", g_b2);
    fn("g_w3", g_w3);
    fn("g_b3", g_b3);
}

void model_params::visit(const std::function<void(const std::string&, const tensor&)>& fn) const {
    const_cast<model_params*>(this)->visit(
        [&](const std::string& name, tensor& t) { fn(name, t); });
}

size_t model_params::parameter_count() const {
    size_t n = 0;
    visit([&](const std::string&, const tensor& t) { n += t.size(); });
    return n;
}

gradient_set gradient_set::zeros_like(const model_params& p) {
    gradient_set g;
    p.visit([&](const std::string&, const tensor& t) {
        g.slots.push_back(tensor::zeros(t.shape));
    });
    return g;
}

void gradient_set::fill_zero() {
    for (auto& t : slots) std::fill(t.data.begin(), t.data.end(), 0.0);
}

void gradient_set::add_scaled(const gradient_set& other, double s) {
    if (other.slots.size() != slots.size()) throw shape_error("gradient_set: slot count mismatch");
    for (size_t i = 0; i < slots.size(); ++i) {
        auto& a = slots[i].data;
        const auto& b = other.slots[i].data;
        if (a.size() != b.size()) throw shape_error("gradient_set: tensor size mismatch");
        for (size_t k = 0; k < a.size(); ++k) a[k] += s * b[k];
    }
}

void gradient_set::scale(double s) {
    for (auto& t : slots) {
        for (auto& v : t.data) v *= s;
    }
}

namespace {

constexpr uint32_t kCheckpointMagic = 0x50544f43;  // "COTP"
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void write_raw(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw io_error(std::string("truncated checkpoint while reading ") + what);
    return v;
}

std::string read_string(std::istream& in, const char* what) {
    const auto len = read_raw<uint32_t>(in, what);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw io_error(std::string("truncated checkpoint while reading ") + what);
    return s;
}

} // namespace

void save_checkpoint(const std::string& path, const model_params& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write checkpoint: " + path);

    const std::string cfg = params.cfg.to_json_string();
    write_raw(out, kCheckpointMagic);
    write_raw(out, kCheckpointVersion);
    write_raw(out, static_cast<uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    write_raw(out, params.cfg.hash());

    uint32_t count = 0;
    params.visit([&](const std::string&, const tensor&) { ++count; });
    write_raw(out, count);

    params.visit([&](const std::string& name, const tensor& t) {
        write_raw(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw(out, static_cast<uint32_t>(t.shape.size()));
        for (size_t d : t.shape) write_raw(out, static_cast<uint64_t>(d));
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    });
    if (!out) throw io_error("write failure on checkpoint: " + path);
}

model_params load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    if (read_raw<uint32_t>(in, "magic") != kCheckpointMagic) {
        throw format_error("bad magic in checkpoint: " + path);
    }
    if (read_raw<uint32_t>(in, "version") != kCheckpointVersion) {
        throw format_error("unsupported checkpoint version: " + path);
    }
    const std::string cfg_text = read_string(in, "config");
    const auto cfg_hash = read_raw<uint64_t>(in, "config hash");

    model_params params = model_params::init(model_config::from_json_string(cfg_text));
    if (params.cfg.hash() != cfg_hash) {
        throw format_error("checkpoint config hash mismatch: " + path);
    }

    const auto count = read_raw<uint32_t>(in, "tensor count");
    uint32_t loaded = 0;
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = read_string(in, "tensor name");
        const auto ndim = read_raw<uint32_t>(in, "tensor rank");
        std::vector<size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<size_t>(read_raw<uint64_t>(in, "tensor dim"));

        bool found = false;
        params.visit([&](const std::string& n, tensor& t) {
            if (n != name) return;
            found = true;
            if (t.shape != shape) {
                throw format_error("checkpoint tensor '" + name + "' has unexpected shape");
            }
            in.read(reinterpret_cast<char*>(t.data.data()),
                    static_cast<std::streamsize>(t.data.size() * sizeof(double)));
            if (!in) throw io_error("truncated checkpoint at tensor '" + name + "'");
        });
        if (!found) throw format_error("checkpoint carries unknown tensor '" + name + "'");
        ++loaded;
    }
    uint32_t expected = 0;
    params.visit([&](const std::string&, const tensor&) { ++expected; });
    if (loaded != expected) {
        throw format_error("checkpoint tensor count mismatch: " + path);
    }
    return params;
}

} // namespace cot
