#include "kedit/grad.hpp"

#include "kedit/error.hpp"
#include "kedit/lm_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace kedit {

ParamSelector ParamSelector::ffn_of_layers(const std::vector<int> & layers) {
    ParamSelector sel;
    for (int l : layers) {
        sel.name_prefixes.push_back(ffn_prefix(l));
    }
    return sel;
}

bool ParamSelector::matches(const std::string & name) const {
    return std::any_of(name_prefixes.begin(), name_prefixes.end(),
                       [&](const std::string & p) { return name.rfind(p, 0) == 0; });
}

std::vector<std::string> ParamSelector::select(const StateDict & s) const {
    std::vector<std::string> out;
    for (const auto & [name, _] : s) {
        if (matches(name)) {
            out.push_back(name);
        }
    }
    if (out.empty()) {
        throw ConfigError("parameter selector " + describe() + " matches no tensor");
    }
    return out;
}

std::string ParamSelector::describe() const {
    std::string out = "[";
    for (std::size_t i = 0; i < name_prefixes.size(); ++i) {
        out += (i ? "," : "") + ("\"" + name_prefixes[i] + "\"");
    }
    return out + "]";
}

static void check_example(const TinyLm & m, const SupervisedExample & ex) {
    if (ex.target.empty()) {
        throw InputError("supervised example has an empty target");
    }
    if (ex.prompt.empty()) {
        throw InputError("supervised example has an empty prompt");
    }
    if (ex.prompt.size() + ex.target.size() > static_cast<std::size_t>(m.config().max_seq_len)) {
        throw InputError("supervised example does not fit max_seq_len");
    }
}

LossAndGrad grad_subset(const TinyLm & m, const SupervisedExample & ex, const ParamSelector & sel) {
    check_example(m, ex);
    LossAndGrad out;
    kernels::GradSink sink;
    for (const auto & name : sel.select(m.weights())) {
        auto [it, _] = out.grads.emplace(name, Tensor(m.weights().at(name).shape()));
        sink.emplace(name, &it->second);
    }
    const auto tr = kernels::forward_trace<double>(m, kernels::example_input(ex));
    kernels::Mat<double> dlogits;
    out.loss = kernels::target_nll(tr, ex.prompt.size(), ex.target, &dlogits);
    kernels::backward(m, tr, dlogits, sink);
    for (const auto & [name, g] : out.grads) {
        if (!g.all_finite()) {
            throw NumericError("non-finite gradient in tensor '" + name + "'");
        }
    }
    return out;
}

static double loss_f64(const TinyLm & m, const SupervisedExample & ex) {
    const auto input = kernels::example_input(ex);
    const auto logits = kernels::forward_logits_f64(m, input);
    double total = 0.0;
    for (std::size_t i = 0; i < ex.target.size(); ++i) {
        const auto row = logits.row(static_cast<Eigen::Index>(ex.prompt.size() - 1 + i));
        const double mx = row.maxCoeff();
        const double lse = mx + std::log((row.array() - mx).exp().sum());
        total += lse - row(ex.target[i]);
    }
    return total / static_cast<double>(ex.target.size());
}

FiniteDiffReport compare_with_finite_differences(const TinyLm & m, const SupervisedExample & ex,
                                                 const GradMap & analytic, double eps,
                                                 const FiniteDiffOptions & opts) {
    if (!(eps > 0.0)) {
        throw ParamError("finite difference eps must be > 0");
    }
    check_example(m, ex);
    TinyLm probe = m;
    std::mt19937_64 rng(opts.seed);
    FiniteDiffReport report;
    for (const auto & [name, grad] : analytic) {
        Tensor & w = probe.weights().at(name);
        if (w.shape() != grad.shape()) {
            throw ShapeError("gradient for '" + name + "' has shape " + shape_str(grad.shape()) + ", weight has " +
                             shape_str(w.shape()));
        }
        std::vector<std::size_t> coords(w.numel());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > opts.coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opts.coords_per_tensor);
        }
        for (std::size_t i : coords) {
            const float orig = w[i];
            const float up = orig + static_cast<float>(eps);
            const float down = orig - static_cast<float>(eps);
            w[i] = up;
            const double l_up = loss_f64(probe, ex);
            w[i] = down;
            const double l_down = loss_f64(probe, ex);
            w[i] = orig;
            const double numeric = (l_up - l_down) / (static_cast<double>(up) - static_cast<double>(down));
            const double a = grad[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_tensor = name;
                report.worst_index = i;
            }
        }
    }
    return report;
}

double finite_diff_check(const TinyLm & m, const SupervisedExample & ex, const ParamSelector & sel, double eps,
                         const FiniteDiffOptions & opts) {
    if (!(eps > 0.0)) {
        throw ParamError("finite difference eps must be > 0");
    }
    const auto lg = grad_subset(m, ex, sel);
    return compare_with_finite_differences(m, ex, lg.grads, eps, opts).max_rel_error;
}

void sgd_step(StateDict & weights, const GradMap & g, double eta) {
    if (!(eta > 0.0)) {
        throw ParamError("learning rate must be > 0");
    }
    for (const auto & [name, grad] : g) {
        const Tensor & w = weights.at(name);
        if (w.shape() != grad.shape()) {
            throw ShapeError("sgd_step: gradient for '" + name + "' has shape " + shape_str(grad.shape()) +
                             ", weight has " + shape_str(w.shape()));
        }
    }
    const float step = static_cast<float>(eta);
    for (const auto & [name, grad] : g) {
        Tensor & w = weights.at(name);
        float * pw = w.ptr();
        const float * pg = grad.ptr();
        for (std::size_t i = 0; i < w.numel(); ++i) {
            pw[i] -= step * pg[i];
        }
    }
}

}  // namespace kedit
