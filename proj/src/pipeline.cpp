#include "kedit/pipeline.hpp"

#include "kedit/checkpoint.hpp"
#include "kedit/error.hpp"
#include "kedit/tokenizer.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace kedit {

namespace {

std::string trim(const std::string & s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string & key, const std::string & v) {
    T out{};
    const char * first = v.data();
    const char * last = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last)
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
    return out;
}

bool parse_bool(const std::string & key, const std::string & v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

// One config key: how to set it and how to print it.
struct Field {
    std::function<void(PipelineConfig &, const std::string &, const std::string &)> set;
    std::function<std::string(const PipelineConfig &)> get;
};

template <typename T, typename Acc>
Field number_field(Acc acc) {
    return {[acc](PipelineConfig & c, const std::string & k, const std::string & v) {
                acc(c) = parse_number<T>(k, v);
            },
            [acc](const PipelineConfig & c) {
                if constexpr (std::is_floating_point_v<T>)
                    return fmt(acc(const_cast<PipelineConfig &>(c)));
                else
                    return std::to_string(acc(const_cast<PipelineConfig &>(c)));
            }};
}

template <typename Acc>
Field bool_field(Acc acc) {
    return {[acc](PipelineConfig & c, const std::string & k, const std::string & v) { acc(c) = parse_bool(k, v); },
            [acc](const PipelineConfig & c) {
                return std::string(acc(const_cast<PipelineConfig &>(c)) ? "1" : "0");
            }};
}

#define KEDIT_FIELD(T, expr) number_field<T>([](PipelineConfig & c) -> T & { return expr; })
#define KEDIT_BOOL(expr) bool_field([](PipelineConfig & c) -> bool & { return expr; })

const std::map<std::string, Field> & fields() {
    static const std::map<std::string, Field> table = {
        {"world_seed", KEDIT_FIELD(std::uint64_t, c.world_seed)},
        {"seed", KEDIT_FIELD(std::uint64_t, c.seed)},
        {"n_entities", KEDIT_FIELD(std::size_t, c.n_entities)},
        {"n_edits", KEDIT_FIELD(std::size_t, c.n_edits)},
        {"templates_per_fact", KEDIT_FIELD(std::size_t, c.templates_per_fact)},
        {"qa_pairs", KEDIT_FIELD(std::size_t, c.qa_pairs)},
        {"vocab_size", KEDIT_FIELD(int, c.model.vocab_size)},
        {"d_model", KEDIT_FIELD(int, c.model.d_model)},
        {"n_layers", KEDIT_FIELD(int, c.model.n_layers)},
        {"n_heads", KEDIT_FIELD(int, c.model.n_heads)},
        {"d_ffn", KEDIT_FIELD(int, c.model.d_ffn)},
        {"max_seq_len", KEDIT_FIELD(int, c.model.max_seq_len)},
        {"pretrain_lr", KEDIT_FIELD(double, c.pretrain.lr)},
        {"pretrain_batch", KEDIT_FIELD(int, c.pretrain.batch)},
        {"pretrain_max_steps", KEDIT_FIELD(int, c.pretrain.max_steps)},
        {"pretrain_min_steps", KEDIT_FIELD(int, c.pretrain.min_steps)},
        {"pretrain_eval_every", KEDIT_FIELD(int, c.pretrain.eval_every)},
        {"pretrain_plateau_rel", KEDIT_FIELD(double, c.pretrain.plateau_rel)},
        {"pretrain_patience", KEDIT_FIELD(int, c.pretrain.patience)},
        {"pretrain_warmup", KEDIT_FIELD(int, c.pretrain.warmup)},
        {"eta", KEDIT_FIELD(double, c.rsft.eta)},
        {"tau", KEDIT_FIELD(double, c.rsft.tau)},
        {"epochs", KEDIT_FIELD(int, c.rsft.epochs)},
        {"max_steps", KEDIT_FIELD(int, c.rsft.max_steps)},
        {"edit_layer", KEDIT_FIELD(int, c.edit_layer)},
        {"early_stop", KEDIT_BOOL(c.rsft.early_stop)},
        {"alpha", KEDIT_FIELD(double, c.merge.alpha)},
        {"keep_fraction", KEDIT_FIELD(double, c.merge.keep_fraction)},
        {"test_mode", KEDIT_BOOL(c.merge.test_mode)},
        {"max_new", KEDIT_FIELD(std::size_t, c.eval.max_new)},
        {"out_dir",
         {[](PipelineConfig & c, const std::string &, const std::string & v) { c.out_dir = v; },
          [](const PipelineConfig & c) { return c.out_dir.string(); }}},
    };
    return table;
}

#undef KEDIT_FIELD
#undef KEDIT_BOOL

std::string base_key(const PipelineConfig & c) {
    std::ostringstream os;
    os << "world_seed=" << c.world_seed << ";n_entities=" << c.n_entities
       << ";templates=" << c.templates_per_fact << ";model=" << c.model.fingerprint() << ";lr=" << fmt(c.pretrain.lr)
       << ";batch=" << c.pretrain.batch << ";max_steps=" << c.pretrain.max_steps
       << ";min_steps=" << c.pretrain.min_steps << ";eval_every=" << c.pretrain.eval_every
       << ";plateau=" << fmt(c.pretrain.plateau_rel) << ";patience=" << c.pretrain.patience
       << ";warmup=" << c.pretrain.warmup;
    return sha256_hex(os.str());
}

TinyLm load_model(const std::filesystem::path & p) {
    StateDict sd = read_checkpoint(p);
    TinyLmConfig cfg = TinyLmConfig::from_meta(sd.meta());
    return TinyLm(cfg, std::move(sd));
}

template <typename F>
auto in_stage(const char * name, F && f) {
    try {
        return f();
    } catch (const StageError &) {
        throw;
    } catch (const std::exception & e) {
        throw StageError(name, e.what());
    }
}

struct EvalInputs {
    std::vector<std::vector<int>> heldout;
    std::vector<Probe> qa;
};

MetricsReport full_report(const std::string & label, const TinyLm & m, const TinyLm & base,
                          const EditDataset & data, const EvalInputs & in, const EvalOptions & opts) {
    MetricsReport r = evaluate_editing(m, base, data, opts);
    GeneralScores g = evaluate_general(m, in.heldout, in.qa, opts);
    r.label = label;
    r.general_ppl = g.ppl;
    r.qa_em = g.em;
    r.qa_f1 = g.f1;
    return r;
}

}  // namespace

void PipelineConfig::set(const std::string & key, const std::string & value) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
}

PipelineConfig PipelineConfig::parse(const std::string & text) {
    PipelineConfig c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        try {
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError & e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path & path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string PipelineConfig::to_text() const {
    std::string out;
    for (const auto & [k, f] : fields()) out += k + "=" + f.get(*this) + "\n";
    return out;
}

std::string PipelineConfig::digest() const {
    std::string text;
    for (const auto & [k, f] : fields())
        if (k != "seed" && k != "out_dir") text += k + "=" + f.get(*this) + "\n";
    return sha256_hex(text).substr(0, 16);
}

void PipelineConfig::finalize() {
    model.validate();
    if (edit_layer < 0 || edit_layer >= model.n_layers)
        throw ConfigError("edit_layer " + std::to_string(edit_layer) + " outside [0, " +
                          std::to_string(model.n_layers) + ")");
    if (n_edits == 0) throw ConfigError("n_edits must be positive");
    if (templates_per_fact < 2 || templates_per_fact > k_templates_per_relation)
        throw ConfigError("templates_per_fact must be in [2, " + std::to_string(k_templates_per_relation) + "]");
    if (qa_pairs == 0) throw ConfigError("qa_pairs must be positive");
    if (eval.max_new == 0) throw ConfigError("max_new must be positive");
    model.seed = world_seed;
    pretrain.seed = world_seed;
    rsft.selector = ParamSelector::ffn_of_layer(edit_layer);
    rsft.seed = seed;
    rsft.validate();
    merge.validate();
}

void write_probes(const std::vector<Probe> & probes, const std::filesystem::path & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto & p : probes) out << nlohmann::json{{"question", p.question}, {"expected", p.expected}}.dump() << "\n";
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Probe> read_probes(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<Probe> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            out.push_back({j.at("question").get<std::string>(), j.at("expected").get<std::string>()});
        } catch (const nlohmann::json::exception & e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void stage_gen_data(const PipelineConfig & cfg) {
    in_stage("gen-data", [&] {
        const RunPaths p{cfg.out_dir};
        std::filesystem::create_directories(p.dir);
        FactWorld w = generate_world(cfg.world_seed, cfg.n_entities);
        CorpusSplit split = render_corpus_split(w, cfg.templates_per_fact, cfg.world_seed);
        EditDataset data = make_edit_dataset(w, cfg.n_edits, cfg.seed);
        write_world(w, p.world());
        write_lines(split.train, p.train_corpus());
        write_lines(split.heldout, p.heldout_corpus());
        write_jsonl(data, p.edits());
        write_probes(make_qa_pairs(w, data, cfg.qa_pairs, cfg.seed), p.qa());
        return 0;
    });
}

void stage_pretrain(const PipelineConfig & cfg, std::ostream * progress) {
    in_stage("pretrain", [&] {
        const RunPaths p{cfg.out_dir};
        const std::string key = base_key(cfg);
        if (std::filesystem::exists(p.base())) {
            StateDict existing = read_checkpoint(p.base());
            auto it = existing.meta().find("pretrain.key");
            if (it != existing.meta().end() && it->second == key) {
                if (progress) *progress << "pretrain: reusing " << p.base().string() << "\n";
                return 0;
            }
        }
        auto train = encode_corpus(read_lines(p.train_corpus()));
        auto heldout = encode_corpus(read_lines(p.heldout_corpus()));
        TinyLm model = TinyLm::init_random(cfg.model);
        std::ofstream log(p.pretrain_log());
        log << "step,train_loss,heldout_ppl\n";
        PretrainResult res = pretrain(model, train, heldout, cfg.pretrain, [&](int step, double loss, double ppl) {
            log << step << "," << fmt(loss) << "," << fmt(ppl) << "\n";
            if (progress) *progress << "pretrain step " << step << " loss " << loss << " heldout ppl " << ppl << "\n";
        });
        StateDict sd = model.weights();
        sd.meta()["stage"] = "pretrain";
        sd.meta()["pretrain.key"] = key;
        sd.meta()["pretrain.steps"] = std::to_string(res.steps);
        write_checkpoint(sd, p.base());
        return 0;
    });
}

TrainLog stage_rsft(const PipelineConfig & cfg) {
    return in_stage("rsft", [&] {
        const RunPaths p{cfg.out_dir};
        TinyLm base = load_model(p.base());
        EditDataset data = read_jsonl(p.edits());
        RsftResult res = rsft_train(base, data, cfg.rsft);
        write_checkpoint(res.sft, p.sft());
        write_train_log(res.log, p.train_log());
        return res.log;
    });
}

void stage_merge(const PipelineConfig & cfg) {
    in_stage("merge", [&] {
        const RunPaths p{cfg.out_dir};
        StateDict base = read_checkpoint(p.base());
        StateDict sft = read_checkpoint(p.sft());
        KnowledgeDelta d = knowledge_delta(sft, base);
        write_checkpoint(merge(base, d, cfg.merge), p.edited());
        write_merge_report(merge_report(d, cfg.merge.keep_fraction), p.merge_report());
        return 0;
    });
}

std::vector<MetricsReport> stage_eval(const PipelineConfig & cfg) {
    return in_stage("eval", [&] {
        const RunPaths p{cfg.out_dir};
        TinyLm base = load_model(p.base());
        TinyLm sft = load_model(p.sft());
        TinyLm edited = load_model(p.edited());
        EditDataset data = read_jsonl(p.edits());
        EvalInputs in{encode_corpus(read_lines(p.heldout_corpus())), read_probes(p.qa())};

        std::vector<MetricsReport> reports;
        reports.push_back(full_report("base", base, base, data, in, cfg.eval));
        reports.push_back(full_report("sft", sft, base, data, in, cfg.eval));
        reports.push_back(full_report("edited", edited, base, data, in, cfg.eval));

        std::ofstream csv(p.results());
        csv << MetricsReport::csv_header() << "\n";
        for (const auto & r : reports) csv << r.csv_row() << "\n";
        if (!csv) throw IoError("write failed: " + p.results().string());

        nlohmann::json j;
        j["config_digest"] = cfg.digest();
        j["seed"] = cfg.seed;
        j["reports"] = nlohmann::json::array();
        for (const auto & r : reports) j["reports"].push_back(nlohmann::json::parse(r.to_json()));
        std::ofstream js(p.metrics());
        js << j.dump(2) << "\n";
        return reports;
    });
}

std::vector<MetricsReport> run_pipeline(const PipelineConfig & cfg, std::ostream * progress) {
    auto note = [&](const char * s) {
        if (progress) *progress << "== " << s << "\n";
    };
    note("gen-data");
    stage_gen_data(cfg);
    note("pretrain");
    stage_pretrain(cfg, progress);
    note("rsft");
    stage_rsft(cfg);
    note("merge");
    stage_merge(cfg);
    note("eval");
    return stage_eval(cfg);
}

// ---------------------------------------------------------------------------
// Sweeps

const char * sweep_axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::tau: return "tau";
        case SweepAxis::epochs_steps: return "epochs_steps";
        case SweepAxis::layer: return "layer";
        case SweepAxis::eta: return "eta";
        case SweepAxis::alpha: return "alpha";
        case SweepAxis::keep_fraction: return "keep_fraction";
    }
    return "?";
}

SweepAxis sweep_axis_from_name(const std::string & name) {
    for (auto a : {SweepAxis::tau, SweepAxis::epochs_steps, SweepAxis::layer, SweepAxis::eta, SweepAxis::alpha,
                   SweepAxis::keep_fraction})
        if (name == sweep_axis_name(a)) return a;
    throw ConfigError("unknown sweep axis '" + name + "'");
}

std::string SweepValue::label() const {
    if (k > 0) return fmt(x) + ":" + std::to_string(k);
    return fmt(x);
}

std::vector<SweepValue> SweepGrid::parse_values(SweepAxis axis, const std::string & text) {
    std::vector<SweepValue> out;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        SweepValue v;
        if (axis == SweepAxis::epochs_steps) {
            auto colon = item.find(':');
            if (colon == std::string::npos) throw ConfigError("epochs_steps values are E:K, got '" + item + "'");
            v.x = parse_number<int>("epochs_steps", trim(item.substr(0, colon)));
            v.k = parse_number<int>("epochs_steps", trim(item.substr(colon + 1)));
        } else {
            v.x = parse_number<double>(sweep_axis_name(axis), item);
        }
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("sweep needs at least one value");
    return out;
}

std::vector<SweepValue> SweepGrid::default_values(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::tau: return parse_values(axis, "0.01,0.02,0.05,0.1,0.2");
        case SweepAxis::epochs_steps: return parse_values(axis, "30:1,15:2,10:3,5:6,3:10,1:30");
        case SweepAxis::layer: return parse_values(axis, "0,1,2,3,4,5,6,7");
        case SweepAxis::eta: return parse_values(axis, "1e-4,5e-4,1e-3,5e-3");
        case SweepAxis::alpha: return parse_values(axis, "0,0.2,0.5,0.8,1");
        case SweepAxis::keep_fraction: return parse_values(axis, "0.05,0.1,0.2,0.4,0.8,1.0");
    }
    return {};
}

namespace {

bool merge_axis(SweepAxis a) { return a == SweepAxis::alpha || a == SweepAxis::keep_fraction; }

PipelineConfig apply_value(PipelineConfig c, SweepAxis axis, const SweepValue & v) {
    switch (axis) {
        case SweepAxis::tau: c.rsft.tau = v.x; break;
        case SweepAxis::epochs_steps:
            c.rsft.epochs = static_cast<int>(v.x);
            c.rsft.max_steps = v.k;
            break;
        case SweepAxis::layer: c.edit_layer = static_cast<int>(v.x); break;
        case SweepAxis::eta: c.rsft.eta = v.x; break;
        case SweepAxis::alpha:
            c.merge.alpha = v.x;
            if (v.x == 0.0 || v.x == 1.0) c.merge.test_mode = true;
            break;
        case SweepAxis::keep_fraction: c.merge.keep_fraction = v.x; break;
    }
    c.finalize();
    return c;
}

}  // namespace

void SweepGrid::validate() const {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
    if (axis == SweepAxis::epochs_steps) {
        const long budget = static_cast<long>(values.front().x) * values.front().k;
        for (const auto & v : values) {
            if (v.k < 1 || v.x < 1) throw ConfigError("epochs_steps entries need E >= 1 and K >= 1");
            if (static_cast<long>(v.x) * v.k != budget)
                throw ConfigError("epochs_steps values must share one budget E*K; " + v.label() + " differs from " +
                                  std::to_string(budget));
        }
    }
    for (const auto & v : values) apply_value(fixed, axis, v);
}

SweepResult run_sweep(const SweepGrid & grid, std::ostream * progress) {
    grid.validate();
    PipelineConfig fixed = grid.fixed;
    fixed.finalize();
    stage_gen_data(fixed);
    stage_pretrain(fixed, progress);

    const RunPaths p{fixed.out_dir};
    const TinyLm base = load_model(p.base());
    const FactWorld world = read_world(p.world());
    const EvalInputs in_heldout{encode_corpus(read_lines(p.heldout_corpus())), {}};

    SweepResult result;
    using clock = std::chrono::steady_clock;
    // For merge axes the fine-tuned model depends only on the seed.
    std::map<std::uint64_t, StateDict> sft_cache;

    for (const auto & v : grid.values) {
        for (std::uint64_t seed : grid.seeds) {
            SweepRow row;
            row.axis_value = v.label();
            row.seed = seed;
            row.model = merge_axis(grid.axis) ? "edited" : "sft";
            const auto t0 = clock::now();
            try {
                PipelineConfig c = fixed;
                c.seed = seed;
                c = apply_value(c, grid.axis, v);
                EditDataset data = make_edit_dataset(world, c.n_edits, seed);
                EvalInputs in{in_heldout.heldout, make_qa_pairs(world, data, c.qa_pairs, seed)};

                StateDict weights;
                if (merge_axis(grid.axis)) {
                    auto it = sft_cache.find(seed);
                    if (it == sft_cache.end()) it = sft_cache.emplace(seed, rsft_train(base, data, c.rsft).sft).first;
                    weights = merge(base.weights(), knowledge_delta(it->second, base.weights()), c.merge);
                } else {
                    weights = rsft_train(base, data, c.rsft).sft;
                }
                TinyLm model(base.config(), std::move(weights));
                row.metrics = full_report(row.model, model, base, data, in, c.eval);
            } catch (const std::exception & e) {
                row.error = e.what();
            }
            row.wallclock = std::chrono::duration<double>(clock::now() - t0).count();
            if (progress) {
                std::ostringstream line;
                line << std::fixed << std::setprecision(2) << sweep_axis_name(grid.axis) << "=" << row.axis_value
                     << " seed=" << seed;
                if (row.error.empty())
                    line << " succ=" << row.metrics.edit_success << " ppl=" << std::setprecision(4)
                         << row.metrics.general_ppl;
                else
                    line << " error: " << row.error;
                line << " (" << std::setprecision(1) << row.wallclock << "s)\n";
                *progress << line.str();
            }
            result.rows.push_back(std::move(row));
        }
    }

    for (const auto & v : grid.values) {
        SweepRow mean;
        mean.axis_value = v.label();
        mean.model = merge_axis(grid.axis) ? "edited" : "sft";
        int n = 0;
        for (const auto & r : result.rows) {
            if (r.axis_value != mean.axis_value || !r.error.empty()) continue;
            auto & m = mean.metrics;
            m.edit_success += r.metrics.edit_success;
            m.generalization += r.metrics.generalization;
            m.portability += r.metrics.portability;
            m.locality += r.metrics.locality;
            m.fluency += r.metrics.fluency;
            m.general_ppl += r.metrics.general_ppl;
            m.qa_em += r.metrics.qa_em;
            m.qa_f1 += r.metrics.qa_f1;
            mean.wallclock += r.wallclock;
            ++n;
        }
        if (n == 0) {
            mean.error = "no successful cells";
        } else {
            auto & m = mean.metrics;
            for (double * x : {&m.edit_success, &m.generalization, &m.portability, &m.locality, &m.fluency,
                               &m.general_ppl, &m.qa_em, &m.qa_f1, &mean.wallclock})
                *x /= n;
        }
        result.means.push_back(std::move(mean));
    }
    return result;
}

std::string sweep_csv_header() {
    return "axis_value,seed,succ,gen,port,loc,flu,ppl,em,f1,wallclock,model,error";
}

namespace {

std::string csv_escape(const std::string & s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

void write_row(std::ostream & os, const SweepRow & r, const std::string & seed) {
    const auto & m = r.metrics;
    os << r.axis_value << "," << seed << "," << std::fixed << std::setprecision(4) << m.edit_success << ","
       << m.generalization << "," << m.portability << "," << m.locality << "," << m.fluency << ","
       << m.general_ppl << "," << m.qa_em << "," << m.qa_f1 << "," << std::setprecision(3) << r.wallclock << ","
       << r.model << "," << csv_escape(r.error) << "\n";
}

}  // namespace

void write_sweep_csv(const SweepResult & r, const std::filesystem::path & path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << sweep_csv_header() << "\n";
    for (const auto & row : r.rows) write_row(os, row, std::to_string(row.seed));
    for (const auto & row : r.means) write_row(os, row, "mean");
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace kedit
