#include <doctest.h>

#include "gradcheck.hpp"
#include "gvci/checkpoint.hpp"
#include "gvci/nn.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

using namespace gvci;
using gvci::testing::check_gradients;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = n(rng);
    return m;
}

// Plain-Eigen reference for a row softmax restricted to kept entries.
Matrix reference_masked_softmax(const Matrix& logits, const Matrix& keep) {
    Matrix w = Matrix::Zero(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double z = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j)
            if (keep(i, j) != 0.0) z += std::exp(logits(i, j));
        for (Eigen::Index j = 0; j < logits.cols(); ++j)
            if (keep(i, j) != 0.0) w(i, j) = std::exp(logits(i, j)) / z;
    }
    return w;
}

}  // namespace

TEST_CASE("dense stack: zero weights give activation of the bias") {
    std::mt19937_64 rng(1);
    DenseStack s("s", {3, 2}, {Activation::relu}, rng);
    s.layers()[0].weight.value.setZero();
    s.layers()[0].bias.value << -1.0, 2.0;
    Matrix out = s.forward(random_matrix(4, 3, rng));
    for (Eigen::Index r = 0; r < 4; ++r) {
        CHECK(out(r, 0) == 0.0);
        CHECK(out(r, 1) == 2.0);
    }
}

TEST_CASE("dense stack: identity single layer is the affine map") {
    std::mt19937_64 rng(2);
    DenseStack s("s", {3, 2}, {Activation::identity}, rng);
    Matrix x = random_matrix(5, 3, rng);
    Matrix expect = (x * s.layers()[0].weight.value).rowwise() + s.layers()[0].bias.value.row(0);
    CHECK((s.forward(x) - expect).cwiseAbs().maxCoeff() == 0.0);
    Tape t;
    CHECK((s.forward(t, t.constant(x)).value() - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dense stack: width mismatch throws") {
    std::mt19937_64 rng(3);
    DenseStack s("s", {3, 2}, {Activation::identity}, rng);
    CHECK_THROWS(s.forward(Matrix::Zero(2, 4)));
    Tape t;
    CHECK_THROWS(s.forward(t, t.constant(Matrix::Zero(2, 4))));
}

TEST_CASE("dense stack gradients match finite differences") {
    for (int seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(100 + seed);
        DenseStack s("s", {4, 5, 3, 2}, {Activation::tanh, Activation::relu, Activation::identity}, rng);
        Matrix x = random_matrix(6, 4, rng);
        std::vector<Parameter*> ps;
        s.collect(ps);
        auto rep = check_gradients([&](Tape& t) { return sum(square(s.forward(t, t.constant(x)))); }, ps);
        CHECK_MESSAGE(rep.max_rel_error < 1e-4, rep.worst);
    }
}

TEST_CASE("gcn: identity adjacency reduces to a per-node dense map") {
    std::mt19937_64 rng(4);
    GraphConvStack g("g", {3, 4, 2}, {Activation::tanh, Activation::identity}, rng);
    Matrix f = random_matrix(5, 3, rng);
    Matrix expect = (f * g.weights()[0].value).array().tanh().matrix() * g.weights()[1].value;
    Matrix eye = Matrix::Identity(5, 5);
    CHECK((g.forward(f, normalize_adjacency(eye)) - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gcn: star graph centre is the mean of its neighbourhood") {
    std::mt19937_64 rng(5);
    GraphConvStack g("g", {2, 3}, {Activation::identity}, rng);
    Matrix adj = Matrix::Zero(4, 4);
    for (int k = 1; k < 4; ++k) adj(0, k) = adj(k, 0) = 1.0;
    Matrix f(4, 2);
    f << 1, 2, 3, 4, 5, 6, 7, 8;
    Matrix out = g.forward(f, normalize_adjacency(adj));
    // centre: (1+3+5+7)/4, (2+4+6+8)/4; leaf 1: mean of itself and the centre
    RowVector centre(2), leaf(2);
    centre << 4.0, 5.0;
    leaf << 2.0, 3.0;
    const Matrix& theta = g.weights()[0].value;
    CHECK((out.row(0) - centre * theta).norm() < 1e-14);
    CHECK((out.row(1) - leaf * theta).norm() < 1e-14);
}

TEST_CASE("gcn: normalisation rows sum to one and isolated nodes are rejected without self-loops") {
    Matrix adj = Matrix::Zero(3, 3);
    adj(0, 1) = 1.0;
    adj(1, 2) = 1.0;
    Matrix norm = normalize_adjacency(adj);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(norm.row(i).sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS(normalize_adjacency(adj, false));
}

TEST_CASE("gcn gradients match finite differences") {
    for (int seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(200 + seed);
        GraphConvStack g("g", {3, 4, 2}, {Activation::tanh, Activation::tanh}, rng);
        Matrix adj = (random_matrix(6, 6, rng).array() > 0.5).cast<double>();
        Matrix norm = normalize_adjacency(adj);
        Parameter feats("features", random_matrix(6, 3, rng));
        std::vector<Parameter*> ps{&feats};
        g.collect(ps);
        auto rep = check_gradients([&](Tape& t) { return sum(square(g.forward(t, t.param(feats), norm))); }, ps);
        CHECK_MESSAGE(rep.max_rel_error < 1e-4, rep.worst);
    }
}

TEST_CASE("attention: probability vector, uniform for equal logits, key-independent mode") {
    std::mt19937_64 rng(6);
    AttentionParams p("a", 3, 4, true, rng);
    RowVector q = random_matrix(1, 3, rng).row(0), k = random_matrix(1, 4, rng).row(0);
    RowVector w = attention_scores(q, k, p);
    CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    CHECK(w.minCoeff() >= 0.0);

    AttentionParams flat("f", 3, 4, true, rng);
    flat.query_weight.value.setZero();
    flat.key_weight.value.setZero();
    RowVector u = attention_scores(q, k, flat);
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(u(j) == doctest::Approx(0.25));

    AttentionParams ind("i", 3, 4, false, rng);
    RowVector k2 = k + random_matrix(1, 4, rng).row(0);
    CHECK((attention_scores(q, k, ind) - attention_scores(q, k2, ind)).norm() == 0.0);
}

TEST_CASE("attention decode agrees with per-pair scores") {
    std::mt19937_64 rng(7);
    AttentionParams p("a", 3, 4, true, rng);
    Matrix queries = random_matrix(5, 3, rng), keys = random_matrix(2, 4, rng);
    Tape t;
    Matrix out = attention_decode(t, t.constant(queries), t.constant(keys), p).value();
    for (Eigen::Index b = 0; b < 2; ++b)
        for (Eigen::Index i = 0; i < 5; ++i) {
            RowVector w = attention_scores(queries.row(i), keys.row(b), p);
            CHECK(std::abs(out(b, i) - w.dot(keys.row(b))) < 1e-12);
        }
}

TEST_CASE("attention decode gradients match finite differences in both modes") {
    for (int seed = 0; seed < 5; ++seed) {
        for (bool key_dep : {true, false}) {
            std::mt19937_64 rng(300 + seed);
            AttentionParams p("a", 3, 4, key_dep, rng);
            p.bias.value = random_matrix(1, 4, rng);
            Parameter q("queries", random_matrix(5, 3, rng));
            Parameter k("keys", random_matrix(3, 4, rng));
            std::vector<Parameter*> ps{&q, &k};
            p.collect(ps);
            auto rep = check_gradients(
                [&](Tape& t) { return sum(square(attention_decode(t, t.param(q), t.param(k), p))); }, ps);
            CHECK_MESSAGE(rep.max_rel_error < 1e-4, rep.worst);
        }
    }
}

TEST_CASE("reparameterised sampling") {
    Vector mean(3), var(3), zero = Vector::Zero(3);
    mean << 1.0, -2.0, 0.5;
    var << 0.5, 2.0, 0.0;
    CHECK((reparam_sample(mean, var, zero) - mean).norm() == 0.0);
    Vector noise = Vector::Ones(3);
    CHECK(reparam_sample(mean, var, noise)(2) == 0.5);
    Vector bad = var;
    bad(0) = -1.0;
    CHECK_THROWS(reparam_sample(mean, bad, noise));

    // Monte-Carlo mean of 1e6 draws lies within 4 sigma / 1000 of the mean.
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01(0.0, 1.0);
    Vector m1(1), v1(1), e(1);
    m1 << 0.7;
    v1 << 2.5;
    double acc = 0.0;
    constexpr int kDraws = 1000000;
    for (int s = 0; s < kDraws; ++s) {
        e(0) = n01(rng);
        acc += reparam_sample(m1, v1, e)(0);
    }
    CHECK(std::abs(acc / kDraws - 0.7) < 4.0 * std::sqrt(2.5) / 1000.0);
}

TEST_CASE("reparameterised sampling gradients match finite differences") {
    for (int seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(400 + seed);
        Parameter mu("mu", random_matrix(3, 4, rng)), lv("logvar", random_matrix(3, 4, rng, 0.5));
        Matrix noise = random_matrix(3, 4, rng);
        auto rep = check_gradients([&](Tape& t) { return sum(square(reparam_sample(t.param(mu), t.param(lv), noise))); },
                                   {&mu, &lv});
        CHECK_MESSAGE(rep.max_rel_error < 1e-4, rep.worst);
    }
}

TEST_CASE("kl divergence closed form") {
    Vector a(2), v(2);
    a << 0.3, -1.2;
    v << 0.7, 1.9;
    CHECK(kl_diag_gaussian(a, v, a, v) == 0.0);
    Vector one(1), zero(1), unit(1);
    one << 1.0;
    zero << 0.0;
    unit << 1.0;
    CHECK(kl_diag_gaussian(one, unit, zero, unit) == doctest::Approx(0.5).epsilon(1e-15));

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int k = 0; k < 100; ++k) {
        Vector pm = random_matrix(3, 1, rng), qm = random_matrix(3, 1, rng);
        Vector pv(3), qv(3);
        for (int j = 0; j < 3; ++j) {
            pv(j) = u(rng);
            qv(j) = u(rng);
        }
        CHECK(kl_diag_gaussian(pm, pv, qm, qv) >= 0.0);
    }
}

TEST_CASE("kl divergence tape version agrees and matches finite differences") {
    std::mt19937_64 rng(10);
    Parameter pm("pm", random_matrix(3, 2, rng)), pl("pl", random_matrix(3, 2, rng, 0.5));
    Parameter qm("qm", random_matrix(3, 2, rng)), ql("ql", random_matrix(3, 2, rng, 0.5));
    Tape t;
    Matrix kl = kl_diag_gaussian(t.param(pm), t.param(pl), t.param(qm), t.param(ql)).value();
    for (Eigen::Index r = 0; r < 3; ++r) {
        Vector pv = pl.value.row(r).array().exp().transpose(), qv = ql.value.row(r).array().exp().transpose();
        CHECK(kl(r, 0) == doctest::Approx(kl_diag_gaussian(pm.value.row(r).transpose(), pv, qm.value.row(r).transpose(), qv))
                              .epsilon(1e-12));
    }
    auto rep = check_gradients(
        [&](Tape& tp) { return sum(kl_diag_gaussian(tp.param(pm), tp.param(pl), tp.param(qm), tp.param(ql))); },
        {&pm, &pl, &qm, &ql});
    CHECK_MESSAGE(rep.max_rel_error < 1e-4, rep.worst);
}

TEST_CASE("gaussian log likelihood") {
    Vector x(1), m(1), v(1);
    x << 0.4;
    m << 0.4;
    v << 1.0;
    CHECK(gaussian_log_likelihood(x, m, v) == doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-15));

    double prev = gaussian_log_likelihood(x, m, v);
    for (double d = 0.1; d < 3.0; d += 0.1) {
        Vector y(1);
        y << 0.4 + d;
        const double cur = gaussian_log_likelihood(y, m, v);
        CHECK(cur < prev);
        prev = cur;
    }

    // trapezoidal quadrature of the density over +-12 sd
    Vector mean(1), var(1);
    mean << -0.8;
    var << 2.3;
    const double sd = std::sqrt(var(0));
    const int steps = 20000;
    const double lo = mean(0) - 12 * sd, hi = mean(0) + 12 * sd, h = (hi - lo) / steps;
    double integral = 0.0;
    for (int k = 0; k <= steps; ++k) {
        Vector p(1);
        p << lo + k * h;
        const double w = (k == 0 || k == steps) ? 0.5 : 1.0;
        integral += w * std::exp(gaussian_log_likelihood(p, mean, var)) * h;
    }
    CHECK(std::abs(integral - 1.0) < 1e-3);
}

TEST_CASE("gaussian log likelihood tape versions match the vector version and finite differences") {
    std::mt19937_64 rng(11);
    Parameter x("x", random_matrix(3, 4, rng)), mu("mu", random_matrix(3, 4, rng)), lv("lv", random_matrix(1, 4, rng, 0.3));
    Tape t;
    Matrix ll = gaussian_log_likelihood(t.param(x), t.param(mu), t.param(lv)).value();
    Vector var = lv.value.row(0).array().exp().transpose();
    for (Eigen::Index r = 0; r < 3; ++r)
        CHECK(ll(r, 0) == doctest::Approx(gaussian_log_likelihood(x.value.row(r).transpose(), mu.value.row(r).transpose(), var))
                              .epsilon(1e-12));
    auto rep = check_gradients(
        [&](Tape& tp) { return sum(gaussian_log_likelihood(tp.param(x), tp.param(mu), tp.param(lv))); }, {&x, &mu, &lv});
    CHECK_MESSAGE(rep.max_rel_error < 1e-4, rep.worst);

    Matrix cm = random_matrix(3, 4, rng), cv = random_matrix(3, 4, rng).array().abs() + 0.2;
    auto rep2 = check_gradients([&](Tape& tp) { return sum(gaussian_log_likelihood(tp.param(x), cm, cv)); }, {&x});
    CHECK_MESSAGE(rep2.max_rel_error < 1e-4, rep2.worst);
}

TEST_CASE("masked row softmax: hand examples") {
    SparseMask m;
    m.size = 3;
    m.rows = {{0, 1}, {0, 1, 2}, {2}};
    Matrix logits = Matrix::Zero(3, 3);
    logits(0, 0) = std::log(2.0);
    logits(0, 1) = std::log(1.0);
    logits(0, 2) = 50.0;  // masked out
    Matrix w = Matrix(masked_row_softmax(logits, m));
    CHECK(w(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(w(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(w(0, 2) == 0.0);
    CHECK(w(1, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(w(2, 2) == 1.0);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("masked softmax aggregate matches a dense reference and finite differences") {
    for (int seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(500 + seed);
        const Eigen::Index n = 5;
        Matrix keep = (random_matrix(n, n, rng).array() > 0.0).cast<double>();
        keep.diagonal().setOnes();
        SparseMask mask;
        mask.size = n;
        mask.rows.resize(n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (keep(i, j) != 0.0) mask.rows[static_cast<std::size_t>(i)].push_back(j);
        CHECK((mask.to_dense() - keep).norm() == 0.0);

        Parameter logits("L", random_matrix(n, n, rng));
        Parameter h("h", random_matrix(2 * n, 3, rng));
        Tape t;
        Matrix out = masked_softmax_aggregate(t.param(logits), mask, t.param(h)).value();
        Matrix w = reference_masked_softmax(logits.value, keep);
        CHECK((out.topRows(n) - w * h.value.topRows(n)).norm() < 1e-12);
        CHECK((out.bottomRows(n) - w * h.value.bottomRows(n)).norm() < 1e-12);

        auto rep = check_gradients(
            [&](Tape& tp) { return sum(square(masked_softmax_aggregate(tp.param(logits), mask, tp.param(h)))); },
            {&logits, &h});
        CHECK_MESSAGE(rep.max_rel_error < 1e-4, rep.worst);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    std::mt19937_64 rng(12);
    DenseStack s("s", {3, 4, 2}, {Activation::relu, Activation::identity}, rng);
    std::vector<Parameter*> ps;
    s.collect(ps);
    auto path = std::filesystem::temp_directory_path() / "gvci_test_ckpt.bin";
    save_checkpoint(path.string(), "{\"k\":1}", ps);
    Checkpoint c = load_checkpoint(path.string());
    CHECK(c.metadata == "{\"k\":1}");
    DenseStack s2("s", {3, 4, 2}, {Activation::relu, Activation::identity}, rng);
    std::vector<Parameter*> ps2;
    s2.collect(ps2);
    restore_parameters(c, ps2);
    for (std::size_t k = 0; k < ps.size(); ++k)
        CHECK(std::memcmp(ps[k]->value.data(), ps2[k]->value.data(), sizeof(double) * ps[k]->value.size()) == 0);

    DenseStack wrong("s", {3, 5, 2}, {Activation::relu, Activation::identity}, rng);
    std::vector<Parameter*> pw;
    wrong.collect(pw);
    CHECK_THROWS(restore_parameters(c, pw));
    std::filesystem::remove(path);
}
