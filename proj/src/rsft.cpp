#include "kedit/rsft.hpp"

#include "kedit/error.hpp"
#include "kedit/lm_kernels.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace kedit {

void RsftConfig::validate() const {
    if (!(eta > 0.0)) {
        throw ConfigError("eta must be > 0");
    }
    if (!(tau > 0.0)) {
        throw ConfigError("tau must be > 0");
    }
    if (epochs < 1 || max_steps < 1) {
        throw ConfigError("epochs and max_steps must be >= 1");
    }
    if (selector.name_prefixes.empty()) {
        throw ConfigError("selector has no prefixes");
    }
}

std::vector<double> TrainLog::final_losses() const {
    std::vector<double> out;
    if (records.empty()) {
        return out;
    }
    const int last = records.back().epoch;
    for (const auto & r : records) {
        if (r.epoch == last && !r.loss_trace.empty()) {
            out.push_back(r.loss_trace.back());
        }
    }
    return out;
}

struct LmSampleObjective::Cache {
    kernels::ForwardTrace<double> trace;
    kernels::Mat<double> dlogits;
    bool valid = false;
};

LmSampleObjective::LmSampleObjective(TinyLm & model, SupervisedExample ex, const ParamSelector & sel)
    : model_(model), ex_(std::move(ex)), names_(sel.select(model.weights())), cache_(std::make_shared<Cache>()) {
    if (ex_.target.empty() || ex_.prompt.empty() ||
        ex_.prompt.size() + ex_.target.size() > static_cast<std::size_t>(model.config().max_seq_len)) {
        throw InputError("sample does not fit the model");
    }
}

double LmSampleObjective::loss() {
    cache_->trace = kernels::forward_trace<double>(model_, kernels::example_input(ex_));
    const double l = kernels::target_nll(cache_->trace, ex_.prompt.size(), ex_.target, &cache_->dlogits);
    cache_->valid = true;
    return l;
}

void LmSampleObjective::descend(double eta) {
    if (!cache_->valid) {
        throw Error("descend() called without a preceding loss()");
    }
    GradMap grads;
    kernels::GradSink sink;
    for (const auto & name : names_) {
        auto [it, _] = grads.emplace(name, Tensor(model_.weights().at(name).shape()));
        sink.emplace(name, &it->second);
    }
    kernels::backward(model_, cache_->trace, cache_->dlogits, sink);
    cache_->valid = false;
    for (const auto & [name, g] : grads) {
        if (!g.all_finite()) {
            throw NumericError("non-finite gradient in tensor '" + name + "'");
        }
    }
    sgd_step(model_.weights(), grads, eta);
}

InnerLoopResult sample_inner_loop(StepObjective & obj, const RsftConfig & cfg, std::int64_t & global_steps,
                                  const std::string & sample_id) {
    InnerLoopResult res;
    for (int k = 1; k <= cfg.max_steps; ++k) {
        const double l = obj.loss();
        ++res.loss_evals;
        res.loss_trace.push_back(l);
        if (!std::isfinite(l)) {
            std::ostringstream os;
            os << "non-finite loss on sample '" << sample_id << "' at step " << k << " (global step " << global_steps
               << ")";
            throw NumericError(os.str());
        }
        if (cfg.early_stop && l < cfg.tau) {
            res.stopped_early = true;
            break;
        }
        obj.descend(cfg.eta);
        ++res.steps_taken;
        ++global_steps;
    }
    return res;
}

RsftResult rsft_train(const TinyLm & base, const EditDataset & data, const RsftConfig & cfg) {
    cfg.validate();
    if (data.empty()) {
        throw InputError("rsft_train: dataset is empty");
    }
    TinyLm model = base;
    std::vector<SupervisedExample> examples;
    examples.reserve(data.size());
    for (const auto & s : data.samples) {
        examples.push_back(s.example());
    }
    RsftResult out;
    for (int e = 1; e <= cfg.epochs; ++e) {
        for (std::size_t n = 0; n < examples.size(); ++n) {
            LmSampleObjective obj(model, examples[n], cfg.selector);
            std::int64_t t = out.log.global_steps;
            InnerLoopResult r;
            try {
                r = sample_inner_loop(obj, cfg, t, data.samples[n].id);
            } catch (const NumericError & err) {
                throw NumericError(std::string(err.what()) + " in epoch " + std::to_string(e) +
                                   "; weights digest " + state_digest(model.weights()));
            }
            out.log.global_steps = t;
            out.log.records.push_back(TrainRecord{e, n, data.samples[n].id, r.steps_taken, r.loss_evals,
                                                  std::move(r.loss_trace), r.stopped_early});
        }
    }
    out.sft = std::move(model.weights());
    out.sft.meta()["stage"] = "rsft";
    out.sft.meta()["rsft.eta"] = std::to_string(cfg.eta);
    out.sft.meta()["rsft.tau"] = std::to_string(cfg.tau);
    out.sft.meta()["rsft.epochs"] = std::to_string(cfg.epochs);
    out.sft.meta()["rsft.max_steps"] = std::to_string(cfg.max_steps);
    out.sft.meta()["rsft.early_stop"] = cfg.early_stop ? "1" : "0";
    out.sft.meta()["rsft.selector"] = cfg.selector.describe();
    out.sft.meta()["rsft.global_steps"] = std::to_string(out.log.global_steps);
    return out;
}

void write_train_log(const TrainLog & log, const std::filesystem::path & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw IoError("cannot open for writing: " + path.string());
    }
    for (const auto & r : log.records) {
        nlohmann::json j{{"epoch", r.epoch},
                         {"sample_index", r.sample_index},
                         {"sample_id", r.sample_id},
                         {"steps_taken", r.steps_taken},
                         {"loss_evals", r.loss_evals},
                         {"loss_trace", r.loss_trace},
                         {"stopped_early", r.stopped_early}};
        f << j.dump() << "\n";
    }
}

}  // namespace kedit
