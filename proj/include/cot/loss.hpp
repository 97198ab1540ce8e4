#ifndef COT_LOSS_HPP
#define COT_LOSS_HPP

#include <functional>
#include <span>
#include <vector>

#include "cot/tensor.hpp"

namespace cot {

struct cosine_parts {
    double dot = 0.0, qn = 0.0, cn = 0.0, value = 0.0;
};

// throws degenerate_error on a zero-norm side
cosine_parts cosine_full(std::span<const double> q, std::span<const double> c);
double cosine(std::span<const double> q, std::span<const double> c);

// dq += dv · ∂cos/∂q   with ∂cos/∂q = (ĉ − cos·q̂)/‖q‖
void cosine_backward_query(const cosine_parts& p, std::span<const double> q,
                           std::span<const double> c, double dv, std::span<double> dq);
void cosine_backward_candidate(const cosine_parts& p, std::span<const double> q,
                               std::span<const double> c, double dv, std::span<double> dc);

// −log softmax over cosine logits: loss = −cos(q, c_t)/τ + logΣ exp(cos(q, c_k)/τ).
// One kernel shared by the composition, object and attribute losses.
struct softmax_loss {
    std::vector<cosine_parts> cos;  // per candidate
    std::vector<double> probs;      // softmax of the logits
    size_t target = 0;
    double tau = 0.0;
    double loss = 0.0;
};

using candidate_view = std::vector<std::span<const double>>;

softmax_loss softmax_cosine_loss(std::span<const double> query, size_t target,
                                 const candidate_view& candidates, double tau);

// Accumulates d(loss)·∂loss/∂query into dquery. When candidate_grad is set it
// receives (k, accumulated gradient span) for every candidate — only the
// composition loss trains its candidates.
void softmax_cosine_loss_backward(
    const softmax_loss& trace, std::span<const double> query, const candidate_view& candidates,
    double dloss, std::span<double> dquery,
    const std::function<std::span<double>(size_t)>& candidate_grad = nullptr);

} // namespace cot

#endif
