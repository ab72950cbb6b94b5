#include "kedit/merge.hpp"

#include "kedit/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace kedit {

void MergeSpec::validate() const {
    if (test_mode) {
        if (!(alpha >= 0.0 && alpha <= 1.0)) {
            throw ParamError("alpha must lie in [0, 1] in test mode");
        }
    } else if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ParamError("alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw ParamError("keep_fraction must lie in (0, 1], got " + std::to_string(keep_fraction));
    }
}

static void check_same_structure(const StateDict & a, const StateDict & b, const char * what) {
    std::vector<std::string> offenders;
    for (const auto & [name, t] : a) {
        if (!b.contains(name)) {
            offenders.push_back(name + " (missing)");
        } else if (b.at(name).shape() != t.shape()) {
            offenders.push_back(name + " " + shape_str(t.shape()) + " vs " + shape_str(b.at(name).shape()));
        }
    }
    for (const auto & [name, _] : b) {
        if (!a.contains(name)) {
            offenders.push_back(name + " (extra)");
        }
    }
    if (!offenders.empty()) {
        std::string msg = std::string(what) + ": structural mismatch:";
        for (const auto & o : offenders) {
            msg += " " + o + ";";
        }
        throw ShapeError(msg);
    }
}

KnowledgeDelta knowledge_delta(const StateDict & sft, const StateDict & base) {
    check_same_structure(sft, base, "knowledge_delta");
    KnowledgeDelta d;
    d.base_digest = state_digest(base);
    d.sft_digest = state_digest(sft);
    for (const auto & [name, s] : sft) {
        const Tensor & b = base.at(name);
        Tensor diff(s.shape());
        bool any = false;
        for (std::size_t i = 0; i < s.numel(); ++i) {
            diff[i] = s[i] - b[i];
            any = any || diff[i] != 0.0f;
        }
        if (any) {
            d.entries.emplace(name, std::move(diff));
        }
    }
    return d;
}

KnowledgeDelta prune_delta(const KnowledgeDelta & d, double keep_fraction) {
    KnowledgeDelta out;
    out.base_digest = d.base_digest;
    out.sft_digest = d.sft_digest;
    for (const auto & [name, t] : d.entries) {
        out.entries.emplace(name, apply_mask(t, topk_magnitude_mask(t, keep_fraction)));
    }
    return out;
}

StateDict merge(const StateDict & base, const KnowledgeDelta & d, const MergeSpec & spec) {
    spec.validate();
    for (const auto & [name, t] : d.entries) {
        if (!base.contains(name)) {
            throw ShapeError("merge: delta tensor '" + name + "' is not in the base checkpoint");
        }
        if (base.at(name).shape() != t.shape()) {
            throw ShapeError("merge: delta tensor '" + name + "' has shape " + shape_str(t.shape()) +
                             ", base has " + shape_str(base.at(name).shape()));
        }
    }
    StateDict out = base;
    const double scale = 1.0 - spec.alpha;
    for (const auto & [name, t] : d.entries) {
        if (spec.scope && !spec.scope->matches(name)) {
            continue;
        }
        const Tensor pruned = apply_mask(t, topk_magnitude_mask(t, spec.keep_fraction));
        out.at(name) = scale_add(base.at(name), pruned, scale);
    }
    std::ostringstream a, p;
    a << std::setprecision(17) << spec.alpha;
    p << std::setprecision(17) << spec.keep_fraction;
    out.meta()["stage"] = "merge";
    out.meta()["merge.alpha"] = a.str();
    out.meta()["merge.keep_fraction"] = p.str();
    out.meta()["merge.base_digest"] = d.base_digest;
    out.meta()["merge.sft_digest"] = d.sft_digest;
    if (spec.scope) {
        out.meta()["merge.scope"] = spec.scope->describe();
    }
    return out;
}

StateDict weighted_average(const StateDict & base, const StateDict & sft, double alpha) {
    check_same_structure(sft, base, "weighted_average");
    StateDict out = base;
    const double b = 1.0 - alpha;
    for (const auto & [name, s] : sft) {
        Tensor & t = out.at(name);
        const Tensor & bt = base.at(name);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            t[i] = static_cast<float>(alpha * bt[i] + b * s[i]);
        }
    }
    return out;
}

std::vector<MergeReportRow> merge_report(const KnowledgeDelta & d, double keep_fraction) {
    std::vector<MergeReportRow> rows;
    for (const auto & [name, t] : d.entries) {
        MergeReportRow r;
        r.tensor = name;
        r.numel = t.numel();
        r.kept = kept_count(t.numel(), keep_fraction);
        double ss = 0.0;
        for (float v : t.data()) {
            ss += static_cast<double>(v) * v;
            r.max_abs_delta = std::max(r.max_abs_delta, static_cast<double>(std::fabs(v)));
        }
        r.delta_l2 = std::sqrt(ss);
        rows.push_back(r);
    }
    return rows;
}

void write_merge_report(const std::vector<MergeReportRow> & rows, const std::filesystem::path & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw IoError("cannot open for writing: " + path.string());
    }
    f << "tensor,numel,kept,delta_l2,max_abs_delta\n";
    f << std::setprecision(9);
    for (const auto & r : rows) {
        f << r.tensor << "," << r.numel << "," << r.kept << "," << r.delta_l2 << "," << r.max_abs_delta << "\n";
    }
}

}  // namespace kedit
