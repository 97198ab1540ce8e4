#include "cot/common.hpp"

#include <charconv>
#include <cmath>

namespace cot {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a, uint64_t b) {
    uint64_t h = splitmix64(seed);
    for (char c : tag) {
        h = splitmix64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
    }
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return h;
}

size_t rng_stream::index(size_t n) {
    if (n == 0) throw argument_error("rng_stream::index: n must be positive");
    // rejection sampling, no modulo bias
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = gen_();
    } while (x >= limit);
    return static_cast<size_t>(x % n);
}

double rng_stream::normal() {
    // Box-Muller; second value discarded to keep the stream stateless.
    double u1, u2;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double out = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw format_error("not a number: '" + std::string(text) + "'");
    }
    return out;
}

} // namespace cot
