#pragma once

// One gene, one covariate level, two treatments, d = d_G = 1 and no hidden
// layers: the objective reduces to scalar algebra that is evaluated here
// directly, independent of the tape.

#include "gvci/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gvci::testing {

struct OneGeneResult {
    LossTerms expected;  // hand computation
    LossTerms computed;  // library objective
};

inline double log_normal_pdf(double x, double mean, double var) {
    return -0.5 * (std::log(2.0 * std::numbers::pi) + std::log(var) + (x - mean) * (x - mean) / var);
}

inline OneGeneResult one_gene_objective(double omega1, double omega2) {
    // 1 gene, 1 covariate level, 2 treatments, d = d_G = 1, no hidden layers
    Matrix y(6, 1);
    y << 0.5, 1.0, 2.0, -1.0, 0.0, 3.0;
    auto cov = CategoricalColumn::from_labels("cell_type", std::vector<std::string>(6, "c"));
    auto trt = CategoricalColumn::from_labels("treatment", {"ctrl", "ctrl", "ctrl", "drug", "drug", "drug"});
    ExpressionDataset data(y, {"g"}, {cov}, trt);
    RelationGraph graph{{"g"}, Matrix::Constant(1, 1, 0.8), Matrix::Zero(1, 1)};

    ModelConfig mc;
    mc.latent_dim = 1;
    mc.graph_dim = 1;
    mc.encoder_hidden = {};
    mc.posterior_hidden = {};
    mc.decoder_hidden = {};
    GraphVciModel model(mc, dims_of(data, graph), 0);
    if (model.dims().covariates != 1) throw std::logic_error("fixture expects one covariate column");

    const double wg = 0.9;
    const double ay = 0.7, ax = 0.2, at0 = -0.3, at1 = 0.4, bm = 0.1;
    const double qm_z = 0.6, qm_g = -0.5, qm_b = 0.05;
    const double ql_z = -0.2, ql_g = 0.3, ql_b = -0.4;
    const double pm_z = 1.1, pm_t0 = 0.2, pm_t1 = -0.6, pm_b = 0.3;
    const double pl_z = 0.1, pl_t0 = -0.5, pl_t1 = 0.25, pl_b = -0.7;
    const double olv = -0.3;
    model.f_g.weights()[0].value << wg;
    model.f_m.layers()[0].weight.value << ay, ax, at0, at1;
    model.f_m.layers()[0].bias.value << bm;
    model.q_h.mean_head().layers()[0].weight.value << qm_z, qm_g;
    model.q_h.mean_head().layers()[0].bias.value << qm_b;
    model.q_h.logvar_head().layers()[0].weight.value << ql_z, ql_g;
    model.q_h.logvar_head().layers()[0].bias.value << ql_b;
    model.p_m.mean_head().layers()[0].weight.value << pm_z, pm_t0, pm_t1;
    model.p_m.mean_head().layers()[0].bias.value << pm_b;
    model.p_m.logvar_head().layers()[0].weight.value << pl_z, pl_t0, pl_t1;
    model.p_m.logvar_head().layers()[0].bias.value << pl_b;
    model.output_logvar.value << olv;

    const std::vector<std::size_t> cells{0, 4};
    const Batch batch = make_batch(data, cells);
    ObjectiveNoise noise;
    noise.cf_t = {1, 0};
    noise.z.resize(2, 1);
    noise.z << 0.3, -1.2;
    noise.y_m.resize(2, 1);
    noise.y_m << -0.4, 0.8;
    noise.cf_y_m.resize(2, 1);
    noise.cf_y_m << 1.5, -0.1;
    noise.cf_y.resize(2, 1);
    noise.cf_y << 0.2, 0.6;

    // population moments of each treatment's cells
    const double ctrl_mean = (0.5 + 1.0 + 2.0) / 3.0, drug_mean = (-1.0 + 0.0 + 3.0) / 3.0;
    const double ctrl_var = ((0.5 - ctrl_mean) * (0.5 - ctrl_mean) + (1.0 - ctrl_mean) * (1.0 - ctrl_mean) +
                             (2.0 - ctrl_mean) * (2.0 - ctrl_mean)) / 3.0;
    const double drug_var = ((-1.0 - drug_mean) * (-1.0 - drug_mean) + (0.0 - drug_mean) * (0.0 - drug_mean) +
                             (3.0 - drug_mean) * (3.0 - drug_mean)) / 3.0;

    const double zg = std::tanh(0.8 * wg);
    double recon = 0, dist = 0, kl = 0;
    for (int k = 0; k < 2; ++k) {
        const double yk = batch.y(k, 0);
        const int t = batch.t[static_cast<std::size_t>(k)];
        const int a = noise.cf_t[static_cast<std::size_t>(k)];
        auto q = [&](double yy, int tt) {
            const double zm = ay * yy + ax + (tt == 0 ? at0 : at1) + bm;
            return std::pair{qm_z * zm + qm_g * zg + qm_b, ql_z * zm + ql_g * zg + ql_b};
        };
        auto p = [&](double z, int tt) {
            return std::pair{pm_z * z + (tt == 0 ? pm_t0 : pm_t1) + pm_b, pl_z * z + (tt == 0 ? pl_t0 : pl_t1) + pl_b};
        };
        const auto [mu, lv] = q(yk, t);
        const double z = mu + std::exp(0.5 * lv) * noise.z(k, 0);
        const auto [pm, plv] = p(z, t);
        const double ym = pm + std::exp(0.5 * plv) * noise.y_m(k, 0);  // attention over one dimension is the identity
        recon -= log_normal_pdf(yk, ym, std::exp(olv));
        const auto [pm2, plv2] = p(z, a);
        const double ym2 = pm2 + std::exp(0.5 * plv2) * noise.cf_y_m(k, 0);
        const double ycf = ym2 + std::exp(0.5 * olv) * noise.cf_y(k, 0);
        dist -= a == 0 ? log_normal_pdf(ycf, ctrl_mean, ctrl_var) : log_normal_pdf(ycf, drug_mean, drug_var);
        const auto [mu2, lv2] = q(ycf, a);
        kl += 0.5 * (lv2 - lv + (std::exp(lv) + (mu - mu2) * (mu - mu2)) / std::exp(lv2) - 1.0);
    }
    recon /= 2;
    dist /= 2;
    kl /= 2;

    const StratumFits strata = fit_stratum_gaussians(data);
    const GraphInputs g = prepare_graph(graph, true);
    OneGeneResult r;
    r.expected.recon_nll = recon;
    r.expected.dist_loss = dist;
    r.expected.kl = kl;
    r.expected.total = recon + omega1 * dist + omega2 * kl;
    Tape tape;
    objective(tape, model, g, batch, strata, noise, ObjectiveWeights{omega1, omega2}, &r.computed);
    return r;
}

}  // namespace gvci::testing
