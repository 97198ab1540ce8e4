#ifndef COT_SYNTHETIC_HPP
#define COT_SYNTHETIC_HPP

#include <cstdint>
#include <vector>

#include "cot/dataset.hpp"

namespace cot {

struct synthetic_config {
    int n_attributes = 8;
    int n_objects = 4;
    int image_size = 32;       // square, 3 channels
    double zipf_exponent = 1.0;
    int n_train = 2000;
    int n_eval = 400;          // records per evaluation split (val and test each)
    double unseen_fraction = 0.25;
};

// Zipf-style mass over 0-based ranks: weight(rank) = (rank+1)^-exponent.
std::vector<double> zipf_weights(const std::vector<int>& ranks, double exponent);

// Splits `total` into integer counts proportional to `weights` using the
// largest-remainder method (ties go to the lower index). Σ counts == total.
std::vector<int> zipf_allocate(int total, const std::vector<double>& weights);

// Objects are shape masks, attributes color/texture transforms. Per-object
// attribute counts follow the Zipf law over the fixed attribute ordering
// (attribute id = rank); ceil(unseen_fraction · |A|·|O|) pairs are held out
// of training, never taking an object's most frequent attribute. val and
// test each receive n_eval records with labels drawn uniformly over all
// pairs. Bit-for-bit deterministic in (config, seed).
dataset generate_synthetic_dataset(const synthetic_config& cfg, uint64_t seed);

} // namespace cot

#endif
