#include <doctest.h>

#include "gradcheck.hpp"
#include "objective_fixture.hpp"
#include "gvci/model.hpp"
#include "gvci/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

using namespace gvci;
using gvci::testing::check_gradients;

namespace {

struct Fixture {
    ExpressionDataset data;
    RelationGraph graph;
};

Fixture small_fixture(std::uint64_t seed, std::size_t genes = 5, std::size_t cells = 40) {
    SynthConfig c;
    c.genes = genes;
    c.cells = cells;
    c.treatments = 3;
    c.covariate_levels = 2;
    c.seed = seed;
    auto s = generate(c);
    return {s.dataset, s.prior};
}

ModelConfig small_config() {
    ModelConfig mc;
    mc.latent_dim = 3;
    mc.graph_dim = 2;
    mc.encoder_hidden = {4};
    mc.posterior_hidden = {4};
    mc.decoder_hidden = {4};
    mc.gcn_hidden = {3};
    return mc;
}

std::vector<std::size_t> first_cells(std::size_t k) {
    std::vector<std::size_t> v(k);
    for (std::size_t i = 0; i < k; ++i) v[i] = i;
    return v;
}

}  // namespace

TEST_CASE("objective gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto f = small_fixture(seed);
        GraphVciModel model(small_config(), dims_of(f.data, f.graph), seed);
        const GraphInputs g = prepare_graph(f.graph, true);
        const Batch batch = make_batch(f.data, first_cells(8));
        const StratumFits strata = fit_stratum_gaussians(f.data);
        std::mt19937_64 rng(seed);
        const ObjectiveNoise noise = draw_noise(batch, model.dims(), 3, CounterfactualMode::uniform_other, rng);
        auto rep = check_gradients(
            [&](Tape& t) { return objective(t, model, g, batch, strata, noise, ObjectiveWeights{1.0, 0.1}); },
            model.parameters());
        CHECK_MESSAGE(rep.max_rel_error < 1e-4, rep.worst);
    }
}

TEST_CASE("zero weights leave the reconstruction term and the breakdown recomposes") {
    auto f = small_fixture(4);
    GraphVciModel model(small_config(), dims_of(f.data, f.graph), 4);
    const GraphInputs g = prepare_graph(f.graph, true);
    const Batch batch = make_batch(f.data, first_cells(16));
    const StratumFits strata = fit_stratum_gaussians(f.data);
    std::mt19937_64 rng(4);
    const ObjectiveNoise noise = draw_noise(batch, model.dims(), 3, CounterfactualMode::uniform_other, rng);

    LossTerms zero;
    {
        Tape t;
        Var v = objective(t, model, g, batch, strata, noise, ObjectiveWeights{0.0, 0.0}, &zero);
        CHECK(v.scalar() == zero.recon_nll);
    }
    LossTerms full;
    const ObjectiveWeights w{0.7, 2.5};
    Tape t;
    objective(t, model, g, batch, strata, noise, w, &full);
    CHECK(full.recon_nll == zero.recon_nll);
    CHECK(std::abs(full.total - (full.recon_nll + w.omega1 * full.dist_loss + w.omega2 * full.kl)) < 1e-12);
    CHECK(full.kl >= 0.0);
}

TEST_CASE("one-gene objective by hand") {
    const auto r = gvci::testing::one_gene_objective(1.3, 0.4);
    CHECK(std::abs(r.computed.recon_nll - r.expected.recon_nll) < 1e-10);
    CHECK(std::abs(r.computed.dist_loss - r.expected.dist_loss) < 1e-10);
    CHECK(std::abs(r.computed.kl - r.expected.kl) < 1e-10);
    CHECK(std::abs(r.computed.total - r.expected.total) < 1e-10);
}

TEST_CASE("counterfactual treatment sampling") {
    std::mt19937_64 rng(1);
    std::vector<int> t{0, 1, 2, 2, 1, 0, 0, 3};
    for (int rep = 0; rep < 50; ++rep) {
        auto other = sample_counterfactual_treatment(t, 4, CounterfactualMode::uniform_other, rng);
        for (std::size_t k = 0; k < t.size(); ++k) {
            CHECK(other[k] != t[k]);
            CHECK(other[k] >= 0);
            CHECK(other[k] < 4);
        }
        auto perm = sample_counterfactual_treatment(t, 4, CounterfactualMode::permute, rng);
        auto a = t, b = perm;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
    }
    CHECK_THROWS_AS(sample_counterfactual_treatment(t, 1, CounterfactualMode::uniform_other, rng), DataError);
    CHECK(parse_counterfactual_mode("permute") == CounterfactualMode::permute);
    CHECK(to_string(parse_aggregation("max")) == "max");
    CHECK_THROWS_AS(parse_aggregation("median"), ConfigError);
}

TEST_CASE("eval-mode prediction is deterministic and row-independent") {
    auto f = small_fixture(8, 6, 60);
    GraphVciModel model(small_config(), dims_of(f.data, f.graph), 8);
    const GraphInputs g = prepare_graph(f.graph, true);
    std::vector<std::size_t> cells{3, 10, 17, 40};
    std::vector<int> cf{1, 2, 0, 1};
    Matrix a = predict_counterfactual(model, g, f.data, cells, cf);
    Matrix b = predict_counterfactual(model, g, f.data, cells, cf);
    CHECK((a - b).norm() == 0.0);
    Matrix single = predict_counterfactual(model, g, f.data, {17}, {0});
    CHECK((single.row(0) - a.row(2)).cwiseAbs().maxCoeff() < 1e-14);

    Tape t;
    CounterfactualVar v = counterfactual_forward(t, model, g, make_batch(f.data, cells), cf, nullptr);
    CHECK((v.y_cf.value() - a).cwiseAbs().maxCoeff() < 1e-14);
    CHECK_THROWS_AS(predict_counterfactual(model, g, f.data, cells, {1, 2, 0, 9}), DataError);
}

TEST_CASE("key-independent attention ignores the key weights") {
    auto f = small_fixture(9);
    ModelConfig mc = small_config();
    mc.key_dependent_attention = false;
    GraphVciModel model(mc, dims_of(f.data, f.graph), 9);
    const GraphInputs g = prepare_graph(f.graph, true);
    Matrix a = predict_counterfactual(model, g, f.data, {0, 1, 2}, {1, 1, 1});
    model.f_h.key_weight.value.setConstant(3.0);
    Matrix b = predict_counterfactual(model, g, f.data, {0, 1, 2}, {1, 1, 1});
    CHECK((a - b).norm() == 0.0);
}

TEST_CASE("checkpoint round trip reproduces predictions") {
    auto f = small_fixture(10);
    GraphVciModel model(small_config(), dims_of(f.data, f.graph), 10);
    const auto path = (std::filesystem::temp_directory_path() / "gvci_model_test.ckpt").string();
    model.save(path);
    GraphVciModel back = GraphVciModel::load(path);
    const GraphInputs g = prepare_graph(f.graph, true);
    Matrix a = predict_counterfactual(model, g, f.data, {0, 5, 9}, {2, 0, 1});
    Matrix b = predict_counterfactual(back, g, f.data, {0, 5, 9}, {2, 0, 1});
    CHECK((a - b).norm() == 0.0);
    CHECK(back.config().graph_dim == 2);
    CHECK(back.dims().genes == model.dims().genes);
    std::remove(path.c_str());
    CHECK_THROWS_AS(GraphVciModel::load(path), DataError);
}

TEST_CASE("model config validation") {
    auto f = small_fixture(11);
    ModelConfig mc;
    mc.latent_dim = 0;
    CHECK_THROWS_WITH_AS(GraphVciModel(mc, dims_of(f.data, f.graph), 0), doctest::Contains("model.latent_dim"),
                         ConfigError);
    TrainingConfig tc;
    tc.batch_size = 0;
    CHECK_THROWS_WITH_AS(tc.validate(), doctest::Contains("training.batch_size"), ConfigError);
    tc = TrainingConfig{};
    tc.learning_rate = -1;
    CHECK_THROWS_WITH_AS(tc.validate(), doctest::Contains("training.learning_rate"), ConfigError);
    RelationGraph wrong = f.graph;
    wrong.node_names.pop_back();
    CHECK_THROWS_AS(dims_of(f.data, wrong), DataError);
}

TEST_CASE("training is deterministic, improves the loss and writes metrics") {
    auto f = small_fixture(12, 8, 400);
    auto ood = select_ood(f.data, "cell_type", f.data.covariates()[0].levels[0], 1, {"ctrl"});
    auto split = split_train_val(f.data, ood.split, 3);
    auto de = select_de_genes(f.data, 3, "ctrl");
    TrainingConfig tc;
    tc.max_epochs = 12;
    tc.eval_every = 4;
    tc.seed = 5;
    GraphVciModel model(small_config(), dims_of(f.data, f.graph), 1);
    auto r1 = train(model, f.data, f.graph, split, tc, de);
    auto r2 = train(model, f.data, f.graph, split, tc, de);
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t k = 0; k < r1.history.size(); ++k) {
        CHECK(r1.history[k].recon_nll == r2.history[k].recon_nll);
        CHECK(r1.history[k].val_r2_all == r2.history[k].val_r2_all);
    }
    CHECK(r1.history.back().recon_nll < r1.history.front().recon_nll);
    CHECK(r1.history[3].evaluated);
    CHECK_FALSE(r1.history[0].evaluated);

    const auto path = (std::filesystem::temp_directory_path() / "gvci_metrics.csv").string();
    write_metrics_csv(r1.history, path);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "epoch,recon_nll,dist_loss,kl,val_r2_all,val_r2_de");
    CHECK(row.substr(0, 2) == "1,");
    CHECK(row.back() == ',');
    std::remove(path.c_str());
}

TEST_CASE("a diverging run raises DivergenceError") {
    auto f = small_fixture(13, 5, 120);
    auto ood = select_ood(f.data, "cell_type", f.data.covariates()[0].levels[0], 1, {"ctrl"});
    auto split = split_train_val(f.data, ood.split, 3);
    TrainingConfig tc;
    tc.max_epochs = 5;
    tc.learning_rate = 1e300;
    GraphVciModel model(small_config(), dims_of(f.data, f.graph), 1);
    CHECK_THROWS_AS(train(model, f.data, f.graph, split, tc, select_de_genes(f.data, 2, "ctrl")), DivergenceError);
}

TEST_CASE("r2 evaluation scores every held-out group") {
    auto f = small_fixture(14, 6, 300);
    auto ood = select_ood(f.data, "cell_type", f.data.covariates()[0].levels[0], 2, {"ctrl"});
    auto split = split_train_val(f.data, ood.split, 3);
    GraphVciModel model(small_config(), dims_of(f.data, f.graph), 2);
    const GraphInputs g = prepare_graph(f.graph, true);
    auto de = select_de_genes(f.data, 2, "ctrl");
    R2Summary s = evaluate_r2(model, g, f.data, split, SplitTag::ood, de, "ctrl");
    CHECK(s.groups == 2);
    double mean = 0;
    for (const auto& grp : s.detail) {
        CHECK(std::abs(grp.r2_all - r2_score(grp.truth, grp.predicted)) < 1e-14);
        mean += grp.r2_all;
    }
    CHECK(std::abs(s.r2_all - mean / 2.0) < 1e-14);
    R2Summary r = reconstruction_r2(model, g, f.data, cells_with(split, SplitTag::train), de);
    CHECK(r.groups > 0);
}
