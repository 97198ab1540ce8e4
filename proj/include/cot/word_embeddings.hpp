#ifndef COT_WORD_EMBEDDINGS_HPP
#define COT_WORD_EMBEDDINGS_HPP

#include <string>
#include <vector>

#include "cot/dataset.hpp"

namespace cot {

// Frozen word vectors, one per attribute and per object name. Immutable after
// construction; shared freely between workers.
struct word_embedding_table {
    int dim = 0;
    std::vector<std::vector<double>> attr_vecs;  // indexed by attribute id
    std::vector<std::vector<double>> obj_vecs;   // indexed by object id

    const std::vector<double>& attribute(int id) const { return attr_vecs.at(id); }
    const std::vector<double>& object(int id) const { return obj_vecs.at(id); }
};

// GloVe-style text: "token v1 v2 … vd" per line, UTF-8, space separated.
// Width is inferred from the first line; every vocabulary name must resolve.
word_embedding_table load_word_embeddings(const std::string& path, const vocabulary& vocab);

void save_word_embeddings(const word_embedding_table& table, const vocabulary& vocab,
                          const std::string& path);

// Seeded random unit vectors for synthetic runs. A name shared between the
// attribute and object lists receives the same vector, matching file-backed
// tables.
word_embedding_table random_unit_embeddings(const vocabulary& vocab, int dim, uint64_t seed);

} // namespace cot

#endif
