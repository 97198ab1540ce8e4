#include "cot/word_embeddings.hpp"

#include "cot/tensor.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

namespace cot {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

} // namespace

word_embedding_table load_word_embeddings(const std::string& path, const vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open word embeddings: " + path);

    std::unordered_map<std::string, std::vector<double>> by_token;
    std::string line;
    int dim = 0;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto toks = split_ws(line);
        if (toks.size() < 2) {
            throw format_error("embeddings line " + std::to_string(line_no) +
                               ": expected 'token v1 … vd'");
        }
        const int width = static_cast<int>(toks.size()) - 1;
        if (dim == 0) {
            dim = width;
        } else if (width != dim) {
            throw format_error("embeddings line " + std::to_string(line_no) + ": width " +
                               std::to_string(width) + " differs from " + std::to_string(dim));
        }
        std::vector<double> vec(width);
        for (int i = 0; i < width; ++i) {
            try {
                vec[i] = parse_double(toks[i + 1]);
            } catch (const format_error&) {
                throw format_error("embeddings line " + std::to_string(line_no) +
                                   ": bad number '" + toks[i + 1] + "'");
            }
        }
        by_token[toks[0]] = std::move(vec);
    }
    if (dim == 0) throw format_error("embeddings file is empty: " + path);

    word_embedding_table table;
    table.dim = dim;
    auto resolve = [&](const std::string& name) -> std::vector<double> {
        auto it = by_token.find(name);
        if (it == by_token.end()) {
            throw lookup_error("no word vector for token '" + name + "'");
        }
        return it->second;
    };
    for (const auto& a : vocab.attributes) table.attr_vecs.push_back(resolve(a));
    for (const auto& o : vocab.objects) table.obj_vecs.push_back(resolve(o));
    return table;
}

void save_word_embeddings(const word_embedding_table& table, const vocabulary& vocab,
                          const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write word embeddings: " + path);

    // one line per unique name; attribute entry wins on shared names (vectors
    // are identical by construction anyway)
    std::vector<std::pair<std::string, const std::vector<double>*>> rows;
    for (int i = 0; i < vocab.n_attributes(); ++i) rows.push_back({vocab.attributes[i], &table.attr_vecs[i]});
    for (int i = 0; i < vocab.n_objects(); ++i) {
        bool dup = false;
        for (const auto& a : vocab.attributes) {
            if (a == vocab.objects[i]) { dup = true; break; }
        }
        if (!dup) rows.push_back({vocab.objects[i], &table.obj_vecs[i]});
    }
    for (const auto& [name, vec] : rows) {
        out << name;
        for (double v : *vec) out << ' ' << format_double(v);
        out << '\n';
    }
}

word_embedding_table random_unit_embeddings(const vocabulary& vocab, int dim, uint64_t seed) {
    if (dim < 1) throw config_error("word-vector width must be positive");
    auto make = [&](const std::string& name) {
        // keyed by name so shared attribute/object tokens coincide
        uint64_t h = 1469598103934665603ULL;
        for (char c : name) h = splitmix64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
        rng_stream rng(derive_seed(seed, "wordvec", h));
        std::vector<double> v(dim);
        double n = 0.0;
        do {
            for (auto& x : v) x = rng.normal();
            n = norm2(v);
        } while (n < 1e-8);
        for (auto& x : v) x /= n;
        return v;
    };
    word_embedding_table table;
    table.dim = dim;
    for (const auto& a : vocab.attributes) table.attr_vecs.push_back(make(a));
    for (const auto& o : vocab.objects) table.obj_vecs.push_back(make(o));
    return table;
}

} // namespace cot
