#include "kedit/pretrain.hpp"

#include "kedit/error.hpp"
#include "kedit/lm_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace kedit {

PretrainResult pretrain(TinyLm & model, const std::vector<std::vector<int>> & train,
                        const std::vector<std::vector<int>> & heldout, const PretrainConfig & cfg,
                        const PretrainProgress & progress) {
    if (train.empty() || heldout.empty()) {
        throw InputError("pretrain needs non-empty train and held-out corpora");
    }
    if (cfg.batch < 1 || cfg.eval_every < 1 || cfg.max_steps < 1) {
        throw ConfigError("pretrain batch, eval_every and max_steps must be >= 1");
    }
    auto & w = model.weights();
    std::map<std::string, Tensor> grads, m1, m2;
    kernels::GradSink sink;
    for (const auto & [name, t] : w) {
        grads.emplace(name, Tensor(t.shape()));
        m1.emplace(name, Tensor(t.shape()));
        m2.emplace(name, Tensor(t.shape()));
    }
    for (auto & [name, g] : grads) {
        sink.emplace(name, &g);
    }

    std::mt19937_64 rng(cfg.seed ^ 0x2545f4914f6cdd1dull);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;

    const double beta1 = 0.9, beta2 = 0.99, adam_eps = 1e-8;
    PretrainResult res;
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    double running = 0.0;

    for (int step = 1; step <= cfg.max_steps; ++step) {
        for (auto & [_, g] : grads) {
            g.fill(0.0f);
        }
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const auto & seq = train[order[cursor++]];
            const std::span<const int> s(seq);
            const auto tr = kernels::forward_trace<float>(model, s.first(s.size() - 1));
            kernels::MatF dlogits;
            batch_loss += kernels::target_nll(tr, 1, s.subspan(1), &dlogits);
            dlogits /= static_cast<float>(cfg.batch);
            kernels::backward(model, tr, dlogits, sink);
        }
        batch_loss /= cfg.batch;
        if (!std::isfinite(batch_loss)) {
            throw NumericError("pretraining diverged at step " + std::to_string(step));
        }
        running = step == 1 ? batch_loss : 0.98 * running + 0.02 * batch_loss;

        const double lr = cfg.lr * std::min(1.0, static_cast<double>(step) / std::max(1, cfg.warmup));
        const double bc1 = 1.0 - std::pow(beta1, step);
        const double bc2 = 1.0 - std::pow(beta2, step);
        for (const auto & name : w.names()) {
            Tensor & p = w.at(name);
            const Tensor & g = grads.at(name);
            Tensor & a = m1.at(name);
            Tensor & v = m2.at(name);
            for (std::size_t i = 0; i < p.numel(); ++i) {
                a[i] = static_cast<float>(beta1 * a[i] + (1 - beta1) * g[i]);
                v[i] = static_cast<float>(beta2 * v[i] + (1 - beta2) * g[i] * g[i]);
                const double mhat = a[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + adam_eps));
            }
        }
        res.steps = step;
        res.final_train_loss = running;

        if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
            const double ppl = model.perplexity(heldout);
            res.heldout_ppl.push_back(ppl);
            if (progress) {
                progress(step, running, ppl);
            }
            if (ppl < best * (1.0 - cfg.plateau_rel)) {
                best = ppl;
                stale = 0;
            } else {
                best = std::min(best, ppl);
                ++stale;
            }
            if (stale >= cfg.patience && step >= cfg.min_steps) {
                break;
            }
        }
    }
    return res;
}

}  // namespace kedit
