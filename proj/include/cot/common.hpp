#ifndef COT_COMMON_HPP
#define COT_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cot {

// Error taxonomy. The CLI maps these onto exit codes, so new failure modes
// should reuse one of the existing categories instead of throwing raw
// std::runtime_error.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class format_error : public error { public: using error::error; };       // malformed input file
class validation_error : public error { public: using error::error; };   // content violates a dataset/split invariant
class lookup_error : public error { public: using error::error; };       // missing name/id
class config_error : public error { public: using error::error; };       // bad configuration value
class shape_error : public error { public: using error::error; };        // tensor/grid dimension mismatch
class degenerate_error : public error { public: using error::error; };   // zero-norm embedding
class pairing_error : public error { public: using error::error; };      // invalid augmentation pair
class numeric_error : public error { public: using error::error; };      // NaN/Inf in a loss term
class io_error : public error { public: using error::error; };           // truncated/unreadable file
class protocol_error : public error { public: using error::error; };     // evaluation protocol precondition broken
class argument_error : public error { public: using error::error; };     // invalid call argument

uint64_t splitmix64(uint64_t x);

// Stable sub-seed derivation so independent random streams (shuffle, MAA,
// dropout, init) never alias each other.
uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a = 0, uint64_t b = 0);

// mt19937_64 wrapper with hand-rolled value mappings; std::*_distribution is
// implementation-defined and would tie artifacts to one standard library.
class rng_stream {
public:
    explicit rng_stream(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform double in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    size_t index(size_t n);

    double normal();

private:
    std::mt19937_64 gen_;
};

// Locale-independent shortest round-trip formatting; all file output goes
// through here so reruns are byte-identical.
std::string format_double(double v);
double parse_double(std::string_view text);  // throws format_error

} // namespace cot

#endif
