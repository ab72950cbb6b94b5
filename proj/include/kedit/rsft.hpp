#pragma once

#include "kedit/grad.hpp"
#include "kedit/synth_data.hpp"
#include "kedit/tiny_lm.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace kedit {

struct RsftConfig {
    double eta = 5e-4;
    double tau = 0.1;
    int epochs = 5;
    int max_steps = 6;  // K, consecutive updates per sample per epoch
    ParamSelector selector = ParamSelector::ffn_of_layer(5);
    // false disables the loss < tau break ("w/o Early Stop" ablation)
    bool early_stop = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainRecord {
    int epoch = 0;               // 1-based
    std::size_t sample_index = 0;
    std::string sample_id;
    int steps_taken = 0;         // k_n*, updates applied
    int loss_evals = 0;          // includes the evaluation that triggered the break
    std::vector<double> loss_trace;
    bool stopped_early = false;
};

struct TrainLog {
    std::int64_t global_steps = 0;
    std::vector<TrainRecord> records;

    // Last evaluated loss per sample in the final epoch.
    std::vector<double> final_losses() const;
};

// Loss evaluation and one descent step on a fixed sample. descend() must follow
// a loss() call at the same parameters.
class StepObjective {
  public:
    virtual ~StepObjective() = default;
    virtual double loss() = 0;
    virtual void descend(double eta) = 0;
};

// One sample of TinyLm training restricted to a selector. Holds the model by
// reference and mutates the selected tensors.
class LmSampleObjective : public StepObjective {
  public:
    LmSampleObjective(TinyLm & model, SupervisedExample ex, const ParamSelector & sel);
    double loss() override;
    void descend(double eta) override;

  private:
    TinyLm & model_;
    SupervisedExample ex_;
    std::vector<std::string> names_;
    struct Cache;
    std::shared_ptr<Cache> cache_;
};

struct InnerLoopResult {
    int steps_taken = 0;
    int loss_evals = 0;
    std::vector<double> loss_trace;
    bool stopped_early = false;
};

// for k = 1..K: evaluate L; break if L < tau; else step and ++t.
// Non-finite losses raise NumericError naming `sample_id` and the step.
InnerLoopResult sample_inner_loop(StepObjective & obj, const RsftConfig & cfg, std::int64_t & global_steps,
                                  const std::string & sample_id = "");

struct RsftResult {
    StateDict sft;
    TrainLog log;
};

RsftResult rsft_train(const TinyLm & base, const EditDataset & data, const RsftConfig & cfg);

// One JSON object per (epoch, sample) record.
void write_train_log(const TrainLog & log, const std::filesystem::path & path);

}  // namespace kedit
