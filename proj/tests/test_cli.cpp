#include <doctest.h>

#include "gvci/commands.hpp"
#include "gvci/seed.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace gvci;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("gvci_cli_" + name);
    fs::remove_all(p);
    return p;
}

json small_doc(const fs::path& out) {
    return {{"seed", 3},
            {"paths", {{"out", out.string()}}},
            {"synth", {{"genes", 10}, {"cells", 300}, {"treatments", 3}}},
            {"model", {{"latent_dim", 4}, {"encoder_hidden", {16}}, {"posterior_hidden", {16}}, {"decoder_hidden", {16}}}},
            {"training", {{"max_epochs", 6}, {"eval_every", 3}, {"de_genes", 3}}},
            {"refinement", {{"epochs", 2}, {"hidden", 8}}},
            {"split", {{"k", 1}}}};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GVCI_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config defaults round-trip and unknown keys are rejected") {
    RunConfig c = config_from_json(json::object());
    CHECK(c.split.k == 20);
    CHECK(c.de_genes == 50);
    CHECK(c.refinement.alpha == 0.3);
    CHECK(c.estimator.strata.empty());
    RunConfig again = config_from_json(config_to_json(c));
    CHECK(config_to_json(again) == config_to_json(c));

    CHECK_THROWS_WITH_AS(config_from_json(json{{"training", {{"lr", 1}}}}), doctest::Contains("training.lr"), ConfigError);
    CHECK_THROWS_WITH_AS(config_from_json(json{{"bogus", 1}}), doctest::Contains("bogus"), ConfigError);
    CHECK_THROWS_WITH_AS(config_from_json(json{{"synth", {{"genes", "many"}}}}), doctest::Contains("synth.genes"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(config_from_json(json{{"synth", {{"genes", 1}}}}), doctest::Contains("synth.genes"), ConfigError);
    CHECK_THROWS_WITH_AS(config_from_json(json{{"model", {{"attention", "both"}}}}), doctest::Contains("model.attention"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(config_from_json(json{{"refinement", {{"alpha", 1.5}}}}), doctest::Contains("refinement.alpha"),
                         ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"estimator", {{"strata", "some"}}}}), ConfigError);
}

TEST_CASE("overrides parse JSON values and fall back to strings") {
    json doc = json::object();
    apply_override(doc, "training.learning_rate=0.01");
    apply_override(doc, "model.encoder_hidden=[8,8]");
    apply_override(doc, "split.category=ct1");
    apply_override(doc, "estimator.strata=[[\"t1\",\"ct0\"]]");
    apply_override(doc, "model.attention=key_independent");
    RunConfig c = config_from_json(doc);
    CHECK(c.training.learning_rate == 0.01);
    CHECK(c.model.encoder_hidden == std::vector<int>{8, 8});
    CHECK(c.split.category == "ct1");
    REQUIRE(c.estimator.strata.size() == 1);
    CHECK(c.estimator.strata[0].first == "t1");
    CHECK_FALSE(c.model.key_dependent_attention);
    CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "split.category.x=1"), ConfigError);
    apply_override(doc, "training.typo=1");
    CHECK_THROWS_WITH_AS(config_from_json(doc), doctest::Contains("training.typo"), ConfigError);
}

TEST_CASE("subsystem seeds fan out from the root seed") {
    RunConfig c = config_from_json(json{{"seed", 11}});
    CHECK(c.synth.seed == derive_seed(11, seed_stream::synth));
    CHECK(c.refinement.seed == derive_seed(11, seed_stream::refine));
    CHECK(c.training.seed == derive_seed(11, seed_stream::train));
    CHECK(c.split_seed() == derive_seed(11, seed_stream::split));
    std::vector<std::uint64_t> seeds{c.synth_seed(), c.split_seed(), c.refine_seed(), c.model_seed(), c.train_seed(),
                                     c.estimate_seed()};
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::unique(seeds.begin(), seeds.end()) == seeds.end());
    RunConfig pinned = config_from_json(json{{"seed", 11}, {"split", {{"seed", 5}}}});
    CHECK(pinned.split_seed() == 5);
    CHECK(config_from_json(json{{"seed", 12}}).synth_seed() != c.synth_seed());
    CHECK_THROWS_AS(config_from_json(json{{"seed", -1}}), ConfigError);
}

TEST_CASE("synth writes consistent files and is byte-reproducible") {
    const auto a = scratch("synth_a"), b = scratch("synth_b");
    std::ostringstream log;
    RunConfig ca = config_from_json(small_doc(a));
    RunConfig cb = config_from_json(small_doc(b));
    cmd_synth(ca, log);
    cmd_synth(cb, log);
    for (const char* f : {"expression.tsv", "covariates.tsv", "treatments.tsv", "graph.edges.tsv", "graph.features.tsv",
                          "truth.edges.tsv", "scm_truth.json"}) {
        REQUIRE(fs::exists(a / f));
        CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
    }
    CHECK(line_count(a / "expression.tsv") == 301);
    CHECK(line_count(a / "covariates.tsv") == 301);
    CHECK(line_count(a / "treatments.tsv") == 301);
    CHECK(line_count(a / "graph.features.tsv") == 11);
    const ExpressionDataset data = load_dataset((a / "expression.tsv").string(), (a / "covariates.tsv").string(),
                                                (a / "treatments.tsv").string());
    CHECK(data.genes() == 10);
    CHECK(log.str().find("synth: 300 cells x 10 genes") != std::string::npos);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("refine-graph thresholds, warns on dense output and reruns identically") {
    const auto dir = scratch("refine");
    std::ostringstream log;
    json doc = small_doc(dir);
    cmd_synth(config_from_json(doc), log);

    doc["refinement"]["alpha"] = 1.0 - 1e-12;
    cmd_refine(config_from_json(doc), log);
    const auto genes = load_dataset((dir / "expression.tsv").string(), (dir / "covariates.tsv").string(),
                                    (dir / "treatments.tsv").string())
                           .gene_names();
    const RelationGraph none =
        load_graph((dir / "refined.edges.tsv").string(), (dir / "graph.features.tsv").string(), genes);
    CHECK(none.edge_count() == 0);

    doc["refinement"]["alpha"] = 1e-9;
    std::ostringstream dense;
    cmd_refine(config_from_json(doc), dense);
    CHECK(dense.str().find("warning: refined graph is dense") != std::string::npos);

    doc["refinement"]["alpha"] = 0.3;
    cmd_refine(config_from_json(doc), log);
    const std::string first = slurp(dir / "refined.edges.tsv"), weights = slurp(dir / "edge_weights.tsv");
    cmd_refine(config_from_json(doc), log);
    CHECK(slurp(dir / "refined.edges.tsv") == first);
    CHECK(slurp(dir / "edge_weights.tsv") == weights);
    CHECK(log.str().find("refine-graph: edges") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("train, evaluate and estimate produce their artifacts") {
    const auto dir = scratch("pipeline");
    std::ostringstream log;
    const RunConfig c = config_from_json(small_doc(dir));
    cmd_synth(c, log);
    CHECK_THROWS_WITH_AS(cmd_evaluate(c, log), doctest::Contains("checkpoint"), DataError);
    CHECK_THROWS_AS(cmd_estimate(c, log), DataError);
    cmd_train(c, log);
    std::ifstream metrics(dir / "metrics.csv");
    std::string header;
    std::getline(metrics, header);
    CHECK(header == "epoch,recon_nll,dist_loss,kl,val_r2_all,val_r2_de");
    CHECK(line_count(dir / "metrics.csv") == 7);
    CHECK(line_count(dir / "split.tsv") == 301);
    cmd_evaluate(c, log);
    const json eval = json::parse(slurp(dir / "evaluation.json"));
    CHECK(eval.contains("train_reconstruction"));
    CHECK(eval.contains("ood"));
    CHECK(eval["ood"]["groups"] == 1);
    std::ifstream pred(dir / "predictions.tsv");
    std::getline(pred, header);
    CHECK(header == "split\tcovariate\ttreatment\tgene\tpredicted\tobserved");
    cmd_estimate(c, log);
    std::ifstream cmp(dir / "estimator_comparison.csv");
    std::getline(cmp, header);
    CHECK(header == "method,gene_set,r2,r2_std");
    CHECK(line_count(dir / "estimator_comparison.csv") == 5);
    CHECK(fs::exists(dir / "marginals.tsv"));
    fs::remove_all(dir);
}

TEST_CASE("the executable maps failures to exit codes") {
    const auto dir = scratch("exit");
    const std::string out = " --out " + dir.string();
    CHECK(run_cli("") == 2);
    CHECK(run_cli("synth" + out + " --set synth.genes=1") == 2);
    CHECK(run_cli("synth" + out + " --set synth.typo=1") == 2);
    CHECK(run_cli("evaluate" + out) == 3);
    CHECK(run_cli("synth" + out + " --set synth.genes=6 --set synth.cells=120 --set synth.treatments=3") == 0);
    CHECK(fs::exists(dir / "expression.tsv"));
    CHECK(run_cli("evaluate" + out) == 3);
    CHECK(run_cli("train" + out + " --set synth.genes=6 --set training.max_epochs=3 --set training.learning_rate=1e300 "
                  "--set split.k=1") == 4);
    const fs::path cfg = dir / "run.json";
    std::ofstream(cfg) << "{\"seed\": 4, \"synth\": {\"genes\": 5, \"cells\": 90}}";
    CHECK(run_cli("synth --config " + cfg.string() + out) == 0);
    std::ofstream(cfg) << "{not json";
    CHECK(run_cli("synth --config " + cfg.string() + out) == 2);
    fs::remove_all(dir);
}
