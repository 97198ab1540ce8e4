#include "cot/loss.hpp"

#include <algorithm>
#include <cmath>

namespace cot {

cosine_parts cosine_full(std::span<const double> q, std::span<const double> c) {
    cosine_parts p;
    p.dot = dot(q, c);
    p.qn = norm2(q);
    p.cn = norm2(c);
    if (!(p.qn > 1e-30) || !(p.cn > 1e-30)) {
        throw degenerate_error("cosine of a zero-norm vector");
    }
    p.value = p.dot / (p.qn * p.cn);
    return p;
}

double cosine(std::span<const double> q, std::span<const double> c) {
    return cosine_full(q, c).value;
}

void cosine_backward_query(const cosine_parts& p, std::span<const double> q,
                           std::span<const double> c, double dv, std::span<double> dq) {
    const double a = dv / (p.qn * p.cn);
    const double b = dv * p.value / (p.qn * p.qn);
    for (size_t i = 0; i < q.size(); ++i) dq[i] += a * c[i] - b * q[i];
}

void cosine_backward_candidate(const cosine_parts& p, std::span<const double> q,
                               std::span<const double> c, double dv, std::span<double> dc) {
    const double a = dv / (p.qn * p.cn);
    const double b = dv * p.value / (p.cn * p.cn);
    for (size_t i = 0; i < c.size(); ++i) dc[i] += a * q[i] - b * c[i];
}

softmax_loss softmax_cosine_loss(std::span<const double> query, size_t target,
                                 const candidate_view& candidates, double tau) {
    if (candidates.empty()) throw argument_error("softmax_cosine_loss: no candidates");
    if (target >= candidates.size()) throw argument_error("softmax_cosine_loss: bad target index");
    if (!(tau > 0.0)) throw argument_error("softmax_cosine_loss: temperature must be positive");

    softmax_loss t;
    t.target = target;
    t.tau = tau;
    t.cos.reserve(candidates.size());

    std::vector<double> logits(candidates.size());
    for (size_t k = 0; k < candidates.size(); ++k) {
        t.cos.push_back(cosine_full(query, candidates[k]));
        logits[k] = t.cos.back().value / tau;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    t.probs.resize(logits.size());
    for (size_t k = 0; k < logits.size(); ++k) {
        t.probs[k] = std::exp(logits[k] - m);
        sum += t.probs[k];
    }
    for (auto& p : t.probs) p /= sum;
    t.loss = std::log(sum) + m - logits[target];
    return t;
}

void softmax_cosine_loss_backward(
    const softmax_loss& trace, std::span<const double> query, const candidate_view& candidates,
    double dloss, std::span<double> dquery,
    const std::function<std::span<double>(size_t)>& candidate_grad) {
    for (size_t k = 0; k < candidates.size(); ++k) {
        const double dcos = dloss * (trace.probs[k] - (k == trace.target ? 1.0 : 0.0)) / trace.tau;
        cosine_backward_query(trace.cos[k], query, candidates[k], dcos, dquery);
        if (candidate_grad) {
            cosine_backward_candidate(trace.cos[k], query, candidates[k], dcos, candidate_grad(k));
        }
    }
}

} // namespace cot
