#include "kedit/error.hpp"
#include "kedit/pipeline.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace kedit;

namespace {

PipelineConfig tiny_run(const std::string & dir) {
    PipelineConfig c = PipelineConfig::parse(R"(
        # small enough for a unit test
        n_entities = 40
        n_edits = 6
        qa_pairs = 8
        d_model = 16
        n_layers = 6
        n_heads = 2
        d_ffn = 32
        pretrain_max_steps = 20
        pretrain_eval_every = 10
        pretrain_batch = 2
        eta = 0.05
        epochs = 2
        max_steps = 2
        max_new = 6
    )");
    c.out_dir = std::filesystem::temp_directory_path() / dir;
    std::filesystem::remove_all(c.out_dir);
    c.finalize();
    return c;
}

std::string slurp(const std::filesystem::path & p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config parsing") {
    PipelineConfig c = PipelineConfig::parse("eta=0.001\n tau = 0.05 # comment\n\nearly_stop=false\nedit_layer=3\n");
    CHECK(c.rsft.eta == 0.001);
    CHECK(c.rsft.tau == 0.05);
    CHECK_FALSE(c.rsft.early_stop);
    c.finalize();
    CHECK(c.rsft.selector.name_prefixes == std::vector<std::string>{"layers.3.ffn."});
    CHECK(PipelineConfig::parse(c.to_text()).to_text() == c.to_text());

    CHECK_THROWS_AS(PipelineConfig::parse("etaa=1"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::parse("eta=fast"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::parse("eta"), ConfigError);
    PipelineConfig bad;
    bad.edit_layer = 8;
    CHECK_THROWS_AS(bad.finalize(), ConfigError);

    PipelineConfig a, b;
    b.seed = 99;
    CHECK(a.digest() == b.digest());
    b.rsft.tau = 0.2;
    CHECK(a.digest() != b.digest());
}

TEST_CASE("pipeline writes all artifacts and is reproducible") {
    PipelineConfig c = tiny_run("kedit_pipeline_a");
    auto reports = run_pipeline(c);
    REQUIRE(reports.size() == 3);
    CHECK(reports[0].label == "base");
    CHECK(reports[1].label == "sft");
    CHECK(reports[2].label == "edited");
    CHECK(reports[0].locality == 100.0);
    RunPaths p{c.out_dir};
    for (auto f : {p.world(), p.train_corpus(), p.heldout_corpus(), p.edits(), p.qa(), p.base(), p.pretrain_log(),
                   p.sft(), p.train_log(), p.edited(), p.merge_report(), p.results(), p.metrics()})
        CHECK(std::filesystem::exists(f));

    PipelineConfig d = tiny_run("kedit_pipeline_b");
    run_pipeline(d);
    CHECK(slurp(p.results()) == slurp(RunPaths{d.out_dir}.results()));
    CHECK(slurp(p.base()) == slurp(RunPaths{d.out_dir}.base()));

    // The pretrained base is reused when the configuration is unchanged.
    auto stamp = std::filesystem::last_write_time(p.base());
    stage_pretrain(c);
    CHECK(std::filesystem::last_write_time(p.base()) == stamp);

    std::filesystem::remove_all(c.out_dir);
    std::filesystem::remove_all(d.out_dir);
}

TEST_CASE("stage failures name the stage") {
    PipelineConfig c = tiny_run("kedit_pipeline_missing");
    try {
        stage_rsft(c);
        FAIL("expected StageError");
    } catch (const StageError & e) {
        CHECK(e.stage() == "rsft");
    }
}

TEST_CASE("sweep grid validation") {
    SweepGrid g;
    g.axis = SweepAxis::epochs_steps;
    g.values = SweepGrid::parse_values(g.axis, "30:1,5:6,1:30");
    g.seeds = {1};
    CHECK_NOTHROW(g.validate());
    g.values = SweepGrid::parse_values(g.axis, "30:1,5:5");
    CHECK_THROWS_AS(g.validate(), ConfigError);
    CHECK_THROWS_AS(SweepGrid::parse_values(g.axis, "30"), ConfigError);
    CHECK(sweep_axis_from_name("keep_fraction") == SweepAxis::keep_fraction);
    CHECK_THROWS_AS(sweep_axis_from_name("beta"), ConfigError);
    g.axis = SweepAxis::layer;
    g.values = SweepGrid::parse_values(g.axis, "5,9");
    CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("alpha sweep endpoints reproduce the fine-tuned and base models") {
    PipelineConfig c = tiny_run("kedit_sweep_alpha");
    c.merge.keep_fraction = 1.0;  // the endpoint law needs the unpruned delta
    auto reports = run_pipeline(c);
    SweepGrid g;
    g.axis = SweepAxis::alpha;
    g.values = SweepGrid::parse_values(g.axis, "0,0.5,1");
    g.seeds = {c.seed};
    g.fixed = c;
    auto r = run_sweep(g);
    REQUIRE(r.rows.size() == 3);
    for (const auto & row : r.rows) CHECK(row.error.empty());
    CHECK(r.rows[0].metrics.edit_success == doctest::Approx(reports[1].edit_success));
    CHECK(r.rows[0].metrics.general_ppl == doctest::Approx(reports[1].general_ppl).epsilon(1e-4));
    CHECK(r.rows[2].metrics.edit_success == reports[0].edit_success);
    CHECK(r.rows[2].metrics.locality == 100.0);
    REQUIRE(r.means.size() == 3);
    auto csv = c.out_dir / "sweep.csv";
    write_sweep_csv(r, csv);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == sweep_csv_header());
    std::filesystem::remove_all(c.out_dir);
}

TEST_CASE("failing sweep cells are recorded and the sweep continues") {
    PipelineConfig c = tiny_run("kedit_sweep_fail");
    SweepGrid g;
    g.axis = SweepAxis::eta;
    g.values = SweepGrid::parse_values(g.axis, "1e300,0.05");  // the first diverges
    g.seeds = {1};
    g.fixed = c;
    auto r = run_sweep(g);
    REQUIRE(r.rows.size() == 2);
    CHECK_FALSE(r.rows[0].error.empty());
    CHECK(r.rows[1].error.empty());
    CHECK(r.means[0].error == "no successful cells");
    CHECK(r.means[1].error.empty());
    std::filesystem::remove_all(c.out_dir);
}
