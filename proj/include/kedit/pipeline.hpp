#pragma once

#include "kedit/edit_eval.hpp"
#include "kedit/error.hpp"
#include "kedit/merge.hpp"
#include "kedit/pretrain.hpp"
#include "kedit/rsft.hpp"
#include "kedit/synth_data.hpp"
#include "kedit/tiny_lm.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace kedit {

// Everything one end-to-end run needs. `world_seed` fixes the fact world, the
// model initialization and pretraining; `seed` fixes the edit selection and
// counterfactual targets, so several seeds can share one pretrained base.
struct PipelineConfig {
    std::uint64_t world_seed = 1;
    std::uint64_t seed = 7;
    std::size_t n_entities = 85;
    std::size_t n_edits = 50;
    std::size_t templates_per_fact = 4;
    std::size_t qa_pairs = 50;

    TinyLmConfig model;
    PretrainConfig pretrain;
    RsftConfig rsft;
    int edit_layer = 5;
    MergeSpec merge;
    EvalOptions eval;

    std::filesystem::path out_dir = "run";

    // key=value lines; '#' starts a comment. Unknown keys are errors.
    static PipelineConfig parse(const std::string & text);
    static PipelineConfig load(const std::filesystem::path & path);
    // Applies one key=value assignment.
    void set(const std::string & key, const std::string & value);
    std::string to_text() const;
    // Digest of every setting except `seed` and `out_dir`.
    std::string digest() const;
    // Validates and propagates derived fields (selector from edit_layer, seeds).
    void finalize();
};

// Files written under out_dir by the stages.
struct RunPaths {
    std::filesystem::path dir;
    std::filesystem::path world() const { return dir / "world.json"; }
    std::filesystem::path train_corpus() const { return dir / "train.txt"; }
    std::filesystem::path heldout_corpus() const { return dir / "heldout.txt"; }
    std::filesystem::path edits() const { return dir / "edits.jsonl"; }
    std::filesystem::path qa() const { return dir / "qa.jsonl"; }
    std::filesystem::path base() const { return dir / "base.mkc"; }
    std::filesystem::path pretrain_log() const { return dir / "pretrain_log.csv"; }
    std::filesystem::path sft() const { return dir / "sft.mkc"; }
    std::filesystem::path train_log() const { return dir / "train_log.jsonl"; }
    std::filesystem::path edited() const { return dir / "edited.mkc"; }
    std::filesystem::path merge_report() const { return dir / "merge_report.csv"; }
    std::filesystem::path results() const { return dir / "results.csv"; }
    std::filesystem::path metrics() const { return dir / "metrics.json"; }
};

void write_probes(const std::vector<Probe> & probes, const std::filesystem::path & path);
std::vector<Probe> read_probes(const std::filesystem::path & path);

// Stage failures carry the stage name for the command line.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string & what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string & stage() const { return stage_; }

  private:
    std::string stage_;
};

// Individual stages. Each reads its inputs from and writes its outputs to
// cfg.out_dir, so they can be run one at a time from the command line.
void stage_gen_data(const PipelineConfig & cfg);
// Reuses an existing base.mkc when its recorded digest matches the config.
void stage_pretrain(const PipelineConfig & cfg, std::ostream * progress = nullptr);
TrainLog stage_rsft(const PipelineConfig & cfg);
void stage_merge(const PipelineConfig & cfg);
std::vector<MetricsReport> stage_eval(const PipelineConfig & cfg);

// gen-data -> pretrain -> rsft -> merge -> eval. Exceptions are rethrown as
// StageError naming the failing stage.
std::vector<MetricsReport> run_pipeline(const PipelineConfig & cfg, std::ostream * progress = nullptr);

// Hyperparameter sweeps.
enum class SweepAxis { tau, epochs_steps, layer, eta, alpha, keep_fraction };
const char * sweep_axis_name(SweepAxis a);
SweepAxis sweep_axis_from_name(const std::string & name);

struct SweepValue {
    double x = 0.0;  // the axis value; for epochs_steps this is E
    int k = 0;       // K for epochs_steps, unused otherwise
    std::string label() const;
};

struct SweepGrid {
    SweepAxis axis = SweepAxis::tau;
    std::vector<SweepValue> values;
    PipelineConfig fixed;
    std::vector<std::uint64_t> seeds;

    // Values in the comma-separated form of the command line; epochs_steps
    // entries are written "E:K", alpha endpoints 0 and 1 enable test mode.
    static std::vector<SweepValue> parse_values(SweepAxis axis, const std::string & text);
    static std::vector<SweepValue> default_values(SweepAxis axis);
    void validate() const;
};

struct SweepRow {
    std::string axis_value;
    std::uint64_t seed = 0;
    std::string model;  // "sft" or "edited"
    MetricsReport metrics;
    double wallclock = 0.0;  // seconds
    std::string error;       // empty when the cell succeeded
};

struct SweepResult {
    std::vector<SweepRow> rows;
    // One row per axis value averaged over successful seeds.
    std::vector<SweepRow> means;
};

// Trainer axes report the R-SFT model, merge axes the merged model. Cells
// share the pretrained base in fixed.out_dir and never each other's state.
SweepResult run_sweep(const SweepGrid & grid, std::ostream * progress = nullptr);
std::string sweep_csv_header();
void write_sweep_csv(const SweepResult & r, const std::filesystem::path & path);

}  // namespace kedit
