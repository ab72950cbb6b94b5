// Command-line entry point: individual stages, the full pipeline and sweeps.
// Exit codes: 0 success, 1 usage or configuration error, 2 stage failure.

#include "kedit/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

namespace {

struct Overrides {
    std::string config_path;
    std::vector<std::string> assignments;
    std::optional<double> eta, tau, alpha, keep_fraction;
    std::optional<int> epochs, max_steps, edit_layer;
    std::optional<std::uint64_t> seed, world_seed;
    std::optional<std::string> out_dir;
    bool no_early_stop = false;
    bool test_mode = false;
};

kedit::PipelineConfig build_config(const Overrides & o) {
    kedit::PipelineConfig c = o.config_path.empty() ? kedit::PipelineConfig{} : kedit::PipelineConfig::load(o.config_path);
    for (const auto & a : o.assignments) {
        auto eq = a.find('=');
        if (eq == std::string::npos) throw kedit::ConfigError("--set expects key=value, got '" + a + "'");
        c.set(a.substr(0, eq), a.substr(eq + 1));
    }
    if (o.eta) c.rsft.eta = *o.eta;
    if (o.tau) c.rsft.tau = *o.tau;
    if (o.epochs) c.rsft.epochs = *o.epochs;
    if (o.max_steps) c.rsft.max_steps = *o.max_steps;
    if (o.edit_layer) c.edit_layer = *o.edit_layer;
    if (o.no_early_stop) c.rsft.early_stop = false;
    if (o.alpha) c.merge.alpha = *o.alpha;
    if (o.keep_fraction) c.merge.keep_fraction = *o.keep_fraction;
    if (o.test_mode) c.merge.test_mode = true;
    if (o.seed) c.seed = *o.seed;
    if (o.world_seed) c.world_seed = *o.world_seed;
    if (o.out_dir) c.out_dir = *o.out_dir;
    c.finalize();
    return c;
}

void print_reports(const std::vector<kedit::MetricsReport> & reports) {
    std::cout << kedit::MetricsReport::csv_header() << "\n";
    for (const auto & r : reports) std::cout << r.csv_row() << "\n";
}

std::vector<std::uint64_t> parse_seeds(const std::string & text) {
    std::vector<std::uint64_t> out;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(std::stoull(item));
    if (out.empty()) throw kedit::ConfigError("--seeds needs at least one seed");
    return out;
}

}  // namespace

int main(int argc, char ** argv) {
    CLI::App app{"Knowledge editing by robust fine-tuning and model merging, on a tiny language model"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config_path, "key=value configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", o.assignments, "extra key=value assignment (repeatable)");
    app.add_option("--eta", o.eta, "R-SFT learning rate");
    app.add_option("--tau", o.tau, "early-stop loss threshold");
    app.add_option("--epochs", o.epochs, "R-SFT epochs E");
    app.add_option("--max-steps", o.max_steps, "consecutive updates per sample K");
    app.add_option("--edit-layer", o.edit_layer, "layer whose FFN is fine-tuned");
    app.add_flag("--no-early-stop", o.no_early_stop, "disable the loss < tau break");
    app.add_option("--alpha", o.alpha, "base-model weight of the merge");
    app.add_option("--keep-fraction", o.keep_fraction, "fraction of delta entries kept per tensor");
    app.add_flag("--test-mode", o.test_mode, "allow alpha in {0, 1}");
    app.add_option("--seed", o.seed, "edit dataset seed");
    app.add_option("--world-seed", o.world_seed, "fact world, initialization and pretraining seed");
    app.add_option("--out-dir", o.out_dir, "artifact directory");

    auto * gen = app.add_subcommand("gen-data", "generate the fact world, corpus, edits and QA pairs");
    auto * pre = app.add_subcommand("pretrain", "pretrain the base model on the corpus");
    auto * rsft = app.add_subcommand("rsft", "robust supervised fine-tuning on the edit dataset");
    auto * mrg = app.add_subcommand("merge", "merge the fine-tuned delta into the base model");
    auto * ev = app.add_subcommand("eval", "score base, fine-tuned and merged models");
    auto * pipe = app.add_subcommand("pipeline", "run every stage in order");
    auto * sweep = app.add_subcommand("sweep", "sweep one hyperparameter over several seeds");

    std::string axis_name = "tau", values_text, seeds_text = "1,2,3,4,5", csv_path;
    sweep->add_option("--axis", axis_name, "tau, epochs_steps, layer, eta, alpha or keep_fraction");
    sweep->add_option("--values", values_text, "comma-separated values; epochs_steps uses E:K");
    sweep->add_option("--seeds", seeds_text, "comma-separated edit dataset seeds");
    sweep->add_option("--csv", csv_path, "output CSV (default <out-dir>/sweep_<axis>.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    kedit::PipelineConfig cfg;
    kedit::SweepGrid grid;
    try {
        cfg = build_config(o);
        if (sweep->parsed()) {
            grid.axis = kedit::sweep_axis_from_name(axis_name);
            grid.values = values_text.empty() ? kedit::SweepGrid::default_values(grid.axis)
                                              : kedit::SweepGrid::parse_values(grid.axis, values_text);
            grid.seeds = parse_seeds(seeds_text);
            grid.fixed = cfg;
            grid.validate();
        }
    } catch (const std::exception & e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (gen->parsed()) {
            kedit::stage_gen_data(cfg);
        } else if (pre->parsed()) {
            kedit::stage_pretrain(cfg, &std::cerr);
        } else if (rsft->parsed()) {
            auto log = kedit::stage_rsft(cfg);
            std::cout << "global_steps=" << log.global_steps << "\n";
        } else if (mrg->parsed()) {
            kedit::stage_merge(cfg);
        } else if (ev->parsed()) {
            print_reports(kedit::stage_eval(cfg));
        } else if (pipe->parsed()) {
            print_reports(kedit::run_pipeline(cfg, &std::cerr));
        } else if (sweep->parsed()) {
            auto result = kedit::run_sweep(grid, &std::cerr);
            std::filesystem::path out =
                csv_path.empty() ? cfg.out_dir / ("sweep_" + axis_name + ".csv") : std::filesystem::path(csv_path);
            kedit::write_sweep_csv(result, out);
            std::cout << "wrote " << out.string() << "\n";
        }
    } catch (const kedit::StageError & e) {
        std::cerr << "stage failed: " << e.stage() << "\n" << e.what() << "\n";
        return 2;
    } catch (const std::exception & e) {
        std::cerr << "stage failed: " << (sweep->parsed() ? "sweep" : "unknown") << "\n" << e.what() << "\n";
        return 2;
    }
    return 0;
}
