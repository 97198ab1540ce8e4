#include "cot/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

#include "cot/loss.hpp"

namespace cot {

void hyperparams::validate() const {
    if (!(tau_c > 0.0 && tau_o > 0.0 && tau_a > 0.0)) {
        throw config_error("temperatures must be positive");
    }
    if (alpha < 0.0 || beta < 0.0) throw config_error("balance weights must be >= 0");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (epochs < 0) throw config_error("epochs must be >= 0");
    if (lr_decay_period < 1) throw config_error("lr_decay_period must be >= 1");
    if (!(lr >= 0.0)) throw config_error("learning rate must be >= 0");
}

double hyperparams::lr_at_epoch(int epoch) const {
    const int blocks = (epoch - 1) / lr_decay_period;
    return lr * std::pow(lr_decay_factor, blocks);
}

namespace {

double lse_loss(const softmax_loss& t) {
    std::vector<double> logits(t.cos.size());
    for (size_t k = 0; k < t.cos.size(); ++k) logits[k] = t.cos[k].value / t.tau;
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - m);
    return std::log(sum) + m - logits[t.target];
}

void check_finite(double v, const char* term) {
    if (!std::isfinite(v)) {
        throw numeric_error(std::string("non-finite value in ") + term);
    }
}

std::vector<std::span<const double>> table_spans(const std::vector<std::vector<double>>& vecs) {
    std::vector<std::span<const double>> out;
    out.reserve(vecs.size());
    for (const auto& v : vecs) out.emplace_back(v);
    return out;
}

// λ∈{0,1} blends reproduce a source attribute vector bit-exactly; fold such
// virtual items back onto the real label so the candidate set is a true set
// union.
int dedup_virtual_attr(const train_item& item, const word_embedding_table& table) {
    if (!item.is_virtual) return item.attr_id;
    auto equal_vec = [&](const std::vector<double>& a, const std::vector<double>& b) {
        return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
    };
    if (equal_vec(item.mixed_attr, table.attribute(item.attr_id))) return item.attr_id;
    if (item.attr_b_id >= 0 && equal_vec(item.mixed_attr, table.attribute(item.attr_b_id))) {
        return item.attr_b_id;
    }
    return -1;  // genuinely mixed
}

struct mixed_queries {
    std::vector<double> p_o, p_a, p_x;
};

mixed_queries resolve_queries(const forward_trace::item_trace& it, double lambda) {
    mixed_queries q;
    if (!it.fwd_b) {
        q.p_o = it.fwd.p_o;
        q.p_a = it.fwd.p_a;
        q.p_x = it.fwd.p_x;
        return q;
    }
    const auto& a = it.fwd;
    const auto& b = *it.fwd_b;
    const size_t n = a.p_o.size();
    q.p_o.resize(n); q.p_a.resize(n); q.p_x.resize(n);
    for (size_t i = 0; i < n; ++i) {
        q.p_o[i] = lambda * a.p_o[i] + (1.0 - lambda) * b.p_o[i];
        q.p_a[i] = lambda * a.p_a[i] + (1.0 - lambda) * b.p_a[i];
        q.p_x[i] = lambda * a.p_x[i] + (1.0 - lambda) * b.p_x[i];
    }
    return q;
}

} // namespace

double forward_trace::replay() const {
    double total = 0.0;
    for (const auto& it : items) {
        const double comp = it.comp ? lse_loss(*it.comp) : 0.0;
        double att = 0.0;
        if (it.att) {
            att = lse_loss(*it.att);
            if (it.weighted_att && it.att_b) {
                att = it.lambda * att + (1.0 - it.lambda) * lse_loss(*it.att_b);
            }
        }
        const double obj = it.obj ? lse_loss(*it.obj) : 0.0;
        total += comp + recorded_alpha * att + recorded_beta * obj;
    }
    return items.empty() ? 0.0 : total / static_cast<double>(items.size());
}

batch_result total_loss_and_gradients(const std::vector<train_item>& items,
                                      const model_params& params, const batch_context& ctx) {
    if (items.empty()) throw argument_error("total_loss_and_gradients: empty batch");
    if (!ctx.seen_pairs || !ctx.table) {
        throw argument_error("total_loss_and_gradients: batch context incomplete");
    }
    const hyperparams& hp = ctx.hyper;
    hp.validate();
    const word_embedding_table& table = *ctx.table;
    const auto& seen = *ctx.seen_pairs;
    if (seen.empty()) throw argument_error("total_loss_and_gradients: no seen pairs");
    if (table.dim != params.cfg.embed_dim) {
        throw shape_error("word-vector width does not match the model embed_dim");
    }

    std::map<composition_label, size_t> seen_index;
    for (size_t k = 0; k < seen.size(); ++k) seen_index.emplace(seen[k], k);

    const double dropout_rate = ctx.dropout_enabled ? params.cfg.dropout_rate : 0.0;

    batch_result res;
    res.trace.recorded_alpha = hp.use_att_loss ? hp.alpha : 0.0;
    res.trace.recorded_beta = hp.use_obj_loss ? hp.beta : 0.0;

    // candidate label embeddings, one dropout draw shared by the whole batch
    {
        dropout_sampler cand_drop(dropout_rate, derive_seed(ctx.dropout_seed, "cand"));
        res.trace.candidates.reserve(seen.size());
        for (auto y : seen) {
            res.trace.candidates.push_back(
                label_embed(y, table, params, dropout_rate > 0.0 ? &cand_drop : nullptr));
        }
    }
    candidate_view seen_cands;
    seen_cands.reserve(seen.size());
    for (const auto& t : res.trace.candidates) seen_cands.emplace_back(t.out);

    const auto obj_cands = table_spans(table.obj_vecs);
    const auto attr_cands = table_spans(table.attr_vecs);

    // ---- parallel phase: forwards and loss traces ----
    res.trace.items.resize(items.size());
    auto run_item = [&](size_t i) {
        const train_item& item = items[i];
        auto& it = res.trace.items[i];
        it.lambda = item.lambda;

        it.fwd = forward_sample(*item.feats, params);
        if (item.feats_b) it.fwd_b = forward_sample(*item.feats_b, params);
        const mixed_queries q = resolve_queries(it, item.lambda);

        const int dedup_attr = dedup_virtual_attr(item, table);
        const bool virtual_active = item.is_virtual && dedup_attr < 0;

        // composition loss over the seen set, extended by the virtual entry
        candidate_view comp_cands = seen_cands;
        size_t comp_target;
        if (virtual_active) {
            dropout_sampler virt_drop(dropout_rate, derive_seed(ctx.dropout_seed, "virt", i));
            it.virtual_embed = g_forward(table.object(item.obj_id), item.mixed_attr, params,
                                         dropout_rate > 0.0 ? &virt_drop : nullptr);
            comp_cands.emplace_back(it.virtual_embed->out);
            comp_target = comp_cands.size() - 1;
        } else {
            const composition_label label{item.is_virtual ? dedup_attr : item.attr_id, item.obj_id};
            auto pos = seen_index.find(label);
            if (pos == seen_index.end()) {
                throw validation_error("training label " + std::to_string(label.attr_id) + "/" +
                                       std::to_string(label.obj_id) + " is not a seen pair");
            }
            comp_target = pos->second;
        }
        it.comp = softmax_cosine_loss(q.p_x, comp_target, comp_cands, hp.tau_c);
        it.l_comp = it.comp->loss;
        check_finite(it.l_comp, "L_comp");

        if (hp.use_att_loss) {
            if (virtual_active && ctx.att_mode == virtual_att_mode::mixed_candidate) {
                candidate_view att_ext = attr_cands;
                att_ext.emplace_back(item.mixed_attr);
                it.att = softmax_cosine_loss(q.p_a, att_ext.size() - 1, att_ext, hp.tau_a);
                it.l_att = it.att->loss;
            } else if (virtual_active) {
                it.weighted_att = true;
                it.att = softmax_cosine_loss(q.p_a, static_cast<size_t>(item.attr_id), attr_cands,
                                             hp.tau_a);
                it.att_b = softmax_cosine_loss(q.p_a, static_cast<size_t>(item.attr_b_id),
                                               attr_cands, hp.tau_a);
                it.l_att = item.lambda * it.att->loss + (1.0 - item.lambda) * it.att_b->loss;
            } else {
                const int target = item.is_virtual ? dedup_attr : item.attr_id;
                it.att = softmax_cosine_loss(q.p_a, static_cast<size_t>(target), attr_cands,
                                             hp.tau_a);
                it.l_att = it.att->loss;
            }
            check_finite(it.l_att, "L_att");
        }
        if (hp.use_obj_loss) {
            it.obj = softmax_cosine_loss(q.p_o, static_cast<size_t>(item.obj_id), obj_cands,
                                         hp.tau_o);
            it.l_obj = it.obj->loss;
            check_finite(it.l_obj, "L_obj");
        }
    };

    const int threads = std::max(1, ctx.threads);
    if (threads == 1 || items.size() < 2) {
        for (size_t i = 0; i < items.size(); ++i) run_item(i);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
        std::atomic<size_t> next{0};
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t]() {
                try {
                    size_t i;
                    while ((i = next.fetch_add(1)) < items.size()) run_item(i);
                } catch (...) {
                    errors[static_cast<size_t>(t)] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    // ---- batch means ----
    const double inv_b = 1.0 / static_cast<double>(items.size());
    double total = 0.0;
    for (const auto& it : res.trace.items) {
        res.losses.comp += it.l_comp * inv_b;
        res.losses.att += it.l_att * inv_b;
        res.losses.obj += it.l_obj * inv_b;
        total += (it.l_comp + res.trace.recorded_alpha * it.l_att +
                  res.trace.recorded_beta * it.l_obj);
    }
    res.losses.total = total * inv_b;
    res.trace.recorded_total = res.losses.total;

    if (!ctx.compute_grads) return res;

    // ---- sequential backward: fixed order over items, then candidates ----
    res.grads = gradient_set::zeros_like(params);
    grad_refs grads = grad_refs::bind(params, res.grads);

    const size_t dw = static_cast<size_t>(params.cfg.embed_dim);
    std::vector<std::vector<double>> d_seen(seen.size(), std::vector<double>(dw, 0.0));

    for (size_t i = 0; i < items.size(); ++i) {
        const train_item& item = items[i];
        auto& it = res.trace.items[i];
        const mixed_queries q = resolve_queries(it, item.lambda);

        std::vector<double> dp_o(dw, 0.0), dp_a(dw, 0.0), dp_x(dw, 0.0);
        std::vector<double> d_virtual(it.virtual_embed ? dw : 0, 0.0);

        {
            candidate_view comp_cands = seen_cands;
            if (it.virtual_embed) comp_cands.emplace_back(it.virtual_embed->out);
            softmax_cosine_loss_backward(
                *it.comp, q.p_x, comp_cands, inv_b, dp_x, [&](size_t k) -> std::span<double> {
                    if (k < d_seen.size()) return d_seen[k];
                    return d_virtual;
                });
        }
        if (it.att) {
            const double w = res.trace.recorded_alpha * inv_b;
            if (it.weighted_att && it.att_b) {
                candidate_view ext = attr_cands;
                softmax_cosine_loss_backward(*it.att, q.p_a, ext, w * item.lambda, dp_a);
                softmax_cosine_loss_backward(*it.att_b, q.p_a, ext, w * (1.0 - item.lambda), dp_a);
            } else if (it.att->cos.size() == attr_cands.size() + 1) {
                candidate_view ext = attr_cands;
                ext.emplace_back(item.mixed_attr);
                softmax_cosine_loss_backward(*it.att, q.p_a, ext, w, dp_a);
            } else {
                softmax_cosine_loss_backward(*it.att, q.p_a, attr_cands, w, dp_a);
            }
        }
        if (it.obj) {
            softmax_cosine_loss_backward(*it.obj, q.p_o, obj_cands,
                                         res.trace.recorded_beta * inv_b, dp_o);
        }

        if (it.virtual_embed) {
            g_backward(*it.virtual_embed, params, d_virtual, grads);
        }

        if (it.fwd_b) {
            const double lam = item.lambda;
            auto scaled = [&](const std::vector<double>& v, double s, std::vector<double>& out) {
                for (size_t k = 0; k < dw; ++k) out[k] = s * v[k];
            };
            std::vector<double> dp_o_s(dw), dp_a_s(dw), dp_x_s(dw);
            scaled(dp_o, lam, dp_o_s); scaled(dp_a, lam, dp_a_s); scaled(dp_x, lam, dp_x_s);
            sample_backward(it.fwd, params, dp_o_s, dp_a_s, dp_x_s, grads);
            scaled(dp_o, 1.0 - lam, dp_o_s); scaled(dp_a, 1.0 - lam, dp_a_s);
            scaled(dp_x, 1.0 - lam, dp_x_s);
            sample_backward(*it.fwd_b, params, dp_o_s, dp_a_s, dp_x_s, grads);
        } else {
            sample_backward(it.fwd, params, dp_o, dp_a, dp_x, grads);
        }
    }

    for (size_t k = 0; k < seen.size(); ++k) {
        g_backward(res.trace.candidates[k], params, d_seen[k], grads);
    }
    return res;
}

adam_optimizer::adam_optimizer(const model_params& params)
    : m(gradient_set::zeros_like(params)), v(gradient_set::zeros_like(params)) {}

void adam_optimizer::step(model_params& params, const gradient_set& grads, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    size_t idx = 0;
    params.visit([&](const std::string&, tensor& p) {
        auto& ms = m.slots[idx].data;
        auto& vs = v.slots[idx].data;
        const auto& gs = grads.slots[idx].data;
        for (size_t k = 0; k < p.data.size(); ++k) {
            ms[k] = beta1 * ms[k] + (1.0 - beta1) * gs[k];
            vs[k] = beta2 * vs[k] + (1.0 - beta2) * gs[k] * gs[k];
            const double mhat = ms[k] / bc1;
            const double vhat = vs[k] / bc2;
            p.data[k] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        ++idx;
    });
}

training_data::training_data(const dataset& ds, const word_embedding_table& table,
                             const toy_backbone* backbone, const feature_map* features)
    : ds_(ds), table_(table), backbone_(backbone), features_(features) {
    if (!backbone_ && !features_) {
        throw argument_error("training_data needs a backbone or a feature map");
    }
}

std::shared_ptr<const multi_level_features> training_data::features_for(
    const sample_record& rec) const {
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(rec.id);
        if (it != cache_.end()) return it->second;
    }
    std::shared_ptr<const multi_level_features> out;
    if (rec.kind == payload_kind::image) {
        if (!backbone_) throw argument_error("image payload but no backbone configured");
        out = std::make_shared<multi_level_features>(backbone_->extract(rec.image));
    } else {
        if (!features_) throw argument_error("feature_ref payload but no feature map loaded");
        auto it = features_->find(rec.id);
        if (it == features_->end()) {
            throw lookup_error("no feature record for sample " + std::to_string(rec.id));
        }
        out = std::make_shared<multi_level_features>(it->second);
    }
    std::lock_guard<std::mutex> lock(mu_);
    cache_.emplace(rec.id, out);
    return out;
}

std::shared_ptr<const multi_level_features> training_data::features_for_virtual(
    const virtual_sample& v) const {
    if (v.kind == payload_kind::image) {
        if (!backbone_) throw argument_error("image payload but no backbone configured");
        return std::make_shared<multi_level_features>(backbone_->extract(v.mixed_image));
    }
    return std::make_shared<multi_level_features>(v.mixed_features);
}

std::vector<epoch_log> train_epochs(const training_data& data, model_params& params,
                                    const train_options& opts) {
    const dataset& ds = data.data();
    const hyperparams& hp = opts.hyper;
    hp.validate();
    if (opts.maa) opts.maa->validate();
    if (ds.train.empty()) throw argument_error("train_epochs: dataset has no training records");

    const auto& seen = ds.splits.seen_pairs;
    const word_embedding_table& table = data.table();

    frequency_table freq = attribute_frequency_table(ds);
    train_pair_index pair_index = train_pair_index::build(ds);
    std::vector<std::vector<double>> kappa_cache(static_cast<size_t>(ds.vocab.n_objects()));
    auto kappa_for = [&](int o) -> const std::vector<double>& {
        auto& k = kappa_cache[static_cast<size_t>(o)];
        if (k.empty()) k = minority_sampling_weights(freq, o, opts.maa->exponent);
        return k;
    };

    std::ofstream audit;
    if (opts.maa && !opts.maa->audit_csv.empty()) {
        audit.open(opts.maa->audit_csv, std::ios::trunc);
        if (!audit) throw io_error("cannot write MAA audit log: " + opts.maa->audit_csv);
        audit << "epoch,sample_id_a,sample_id_b,lambda,applied\n";
    }

    adam_optimizer opt(params);
    std::vector<epoch_log> logs;
    const size_t n = ds.train.size();

    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        const double lr_e = hp.lr_at_epoch(epoch);
        const double p_maa = opts.maa ? maa_apply_probability(epoch, *opts.maa) : 0.0;

        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        {
            rng_stream rng(derive_seed(hp.seed, "shuffle", static_cast<uint64_t>(epoch)));
            for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        }

        epoch_log log;
        log.epoch = epoch;
        log.lr = lr_e;
        log.maa_probability = p_maa;

        size_t step = 0;
        for (size_t start = 0; start < n; start += static_cast<size_t>(hp.batch_size), ++step) {
            const size_t stop = std::min(n, start + static_cast<size_t>(hp.batch_size));
            std::vector<train_item> items;
            items.reserve(stop - start);

            for (size_t pos = start; pos < stop; ++pos) {
                const size_t rec_idx = order[pos];
                const sample_record& rec = ds.train[rec_idx];
                train_item item;
                item.sample_id = rec.id;
                item.attr_id = rec.label.attr_id;
                item.obj_id = rec.label.obj_id;

                bool standard = true;
                if (p_maa > 0.0) {
                    rng_stream rng(derive_seed(hp.seed, "maa", static_cast<uint64_t>(epoch), rec_idx));
                    if (rng.uniform() < p_maa) {
                        const auto& kappa = kappa_for(rec.label.obj_id);
                        auto aux = draw_auxiliary(rec, ds, pair_index, kappa, rng);
                        if (aux) {
                            const sample_record& other = ds.train[*aux];
                            const double lambda = rng.uniform();
                            item.is_virtual = true;
                            item.lambda = lambda;
                            item.attr_b_id = other.label.attr_id;
                            if (opts.maa->mixing == mix_level::input) {
                                const virtual_sample vs =
                                    mix_virtual_sample(rec, other, table, lambda, data.features());
                                item.mixed_attr = vs.mixed_attr;
                                item.feats = data.features_for_virtual(vs);
                            } else {
                                const auto& wa = table.attribute(rec.label.attr_id);
                                const auto& wb = table.attribute(other.label.attr_id);
                                item.mixed_attr.resize(wa.size());
                                for (size_t k = 0; k < wa.size(); ++k) {
                                    item.mixed_attr[k] = lambda * wa[k] + (1.0 - lambda) * wb[k];
                                }
                                item.feats = data.features_for(rec);
                                item.feats_b = data.features_for(other);
                            }
                            standard = false;
                            if (audit.is_open()) {
                                audit << epoch << ',' << rec.id << ',' << other.id << ','
                                      << format_double(lambda) << ",1\n";
                            }
                        } else if (audit.is_open()) {
                            audit << epoch << ',' << rec.id << ",-1,0,0\n";
                        }
                    }
                }
                if (standard) item.feats = data.features_for(rec);
                items.push_back(std::move(item));
            }

            batch_context ctx;
            ctx.seen_pairs = &seen;
            ctx.table = &table;
            ctx.hyper = hp;
            ctx.att_mode = opts.maa ? opts.maa->att_mode : virtual_att_mode::mixed_candidate;
            ctx.dropout_enabled = params.cfg.dropout_rate > 0.0;
            ctx.dropout_seed = derive_seed(hp.seed, "dropout", static_cast<uint64_t>(epoch), step);
            ctx.threads = opts.threads;

            batch_result res = total_loss_and_gradients(items, params, ctx);
            opt.step(params, res.grads, lr_e);

            const double w = static_cast<double>(items.size()) / static_cast<double>(n);
            log.l_total += res.losses.total * w;
            log.l_comp += res.losses.comp * w;
            log.l_att += res.losses.att * w;
            log.l_obj += res.losses.obj * w;
        }
        logs.push_back(log);
    }
    return logs;
}

virtual_loss_values virtual_losses(const train_item& item, const model_params& params,
                                   const hyperparams& hyper,
                                   const std::vector<composition_label>& seen_pairs,
                                   const word_embedding_table& table, virtual_att_mode att_mode) {
    batch_context ctx;
    ctx.seen_pairs = &seen_pairs;
    ctx.table = &table;
    ctx.hyper = hyper;
    ctx.hyper.use_att_loss = true;
    ctx.hyper.use_obj_loss = true;
    ctx.att_mode = att_mode;
    ctx.dropout_enabled = false;
    ctx.compute_grads = false;
    const auto res = total_loss_and_gradients({item}, params, ctx);
    return {res.trace.items[0].l_comp, res.trace.items[0].l_att, res.trace.items[0].l_obj};
}

gradcheck_report finite_diff_check(const std::vector<train_item>& items, model_params& params,
                                   const batch_context& ctx, double eps) {
    if (ctx.dropout_enabled) {
        throw argument_error("finite_diff_check requires dropout to be disabled");
    }
    if (!(eps >= 1e-6 && eps <= 1e-3)) {
        throw argument_error("finite_diff_check: eps must lie in [1e-6, 1e-3]");
    }

    batch_context grad_ctx = ctx;
    grad_ctx.compute_grads = true;
    const batch_result base = total_loss_and_gradients(items, params, grad_ctx);

    batch_context eval_ctx = ctx;
    eval_ctx.compute_grads = false;
    auto loss_at = [&]() {
        return total_loss_and_gradients(items, params, eval_ctx).losses.total;
    };

    gradcheck_report report;
    std::vector<std::pair<std::string, tensor*>> tensors;
    params.visit([&](const std::string& name, tensor& t) { tensors.push_back({name, &t}); });

    size_t slot = 0;
    for (auto& [name, t] : tensors) {
        gradcheck_entry entry;
        entry.tensor = name;
        const auto& analytic = base.grads.slots[slot].data;
        for (size_t k = 0; k < t->data.size(); ++k) {
            const double saved = t->data[k];
            t->data[k] = saved + eps;
            const double up = loss_at();
            t->data[k] = saved - eps;
            const double down = loss_at();
            t->data[k] = saved;

            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[k];
            const double rel = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), 1e-6});
            entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a));
            entry.max_abs_numeric = std::max(entry.max_abs_numeric, std::abs(numeric));
            if (rel > entry.max_rel_error) entry.max_rel_error = rel;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_tensor = name;
                report.worst_index = k;
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
        report.per_tensor.push_back(entry);
        ++slot;
    }
    return report;
}

} // namespace cot
