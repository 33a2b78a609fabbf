#include "fixtures.hpp"
#include "lps/metrics.hpp"
#include "lps/unfolded.hpp"

#include <doctest.h>

#include <filesystem>

using namespace lps;
using namespace lps::test;

namespace {

double loss_of(const UnfoldedModel& m, const ReconProblem& P, const Casorati& gt, double frac) {
    return mae_loss(forward(m, P).sum(), gt, frac);
}

// Central differences per parameter; a parameter is skipped when two step sizes disagree,
// which flags a kink crossed inside the stencil.
void check_gradient(const UnfoldedModel& model, const ReconProblem& P, const Casorati& gt, double frac) {
    const ForwardResult fw = forward(model, P);
    const LossValue lv = mae_loss_with_grad(fw.sum(), gt, frac);
    const BackwardResult br = backward(model, P, fw.tape, lv.grad);
    const std::vector<double> theta = model.flatten();
    REQUIRE(br.grad.size() == theta.size());
    std::size_t checked = 0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        auto fd = [&](double h) {
            UnfoldedModel a = model, b = model;
            std::vector<double> tp = theta, tm = theta;
            tp[i] += h;
            tm[i] -= h;
            a.unflatten(tp);
            b.unflatten(tm);
            return (loss_of(a, P, gt, frac) - loss_of(b, P, gt, frac)) / (2 * h);
        };
        // Richardson-extrapolated central differences, fourth order in h.
        const double h = 1e-4 * std::max(std::abs(theta[i]), 1e-2);
        const double g1 = fd(h), g2 = fd(h / 2), g = (4 * g2 - g1) / 3;
        const double scale = std::max({std::abs(g), std::abs(br.grad[i]), 1e-12});
        if (std::abs(g1 - g2) > 1e-2 * scale) continue;
        ++checked;
        CHECK_MESSAGE(std::abs(br.grad[i] - g) <= 1e-4 * scale, "param " << i << " analytic " << br.grad[i]
                                                                        << " fd " << g);
    }
    CHECK(checked >= theta.size() / 2);
}

Casorati target(const ReconProblem& P, std::uint64_t seed) {
    const Casorati base = cpa_solve(P, {0.01, 0.005, 200, std::nullopt}).sum();
    return base + random_casorati(base.rows(), base.cols(), seed, 0.05 * base.cwiseAbs().mean());
}

} // namespace

TEST_CASE("simple tied network equals the classical solver bitwise") {
    const auto P = structured_problem(6, 8, 3, 7);
    const UnfoldedModel m = UnfoldedModel::make(ActivationMode::Simple, true, 30, 0.05, 0.02);
    const ForwardResult fw = forward(m, *P);
    const Reconstruction r = cpa_solve(*P, {0.05, 0.02, 30, std::nullopt});
    CHECK(fw.L == r.L);
    CHECK(fw.S == r.S);
}

TEST_CASE("parameter layout and projection") {
    UnfoldedModel m = UnfoldedModel::make(ActivationMode::Soft, false, 3, 0.1, 0.2);
    CHECK(m.parameter_count() == 12);
    CHECK(UnfoldedModel::make(ActivationMode::Simple, true, 100, 0.1, 0.2).parameter_count() == 2);
    CHECK(UnfoldedModel::make(ActivationMode::Garrote, false, 100, 0.1, 0.2).parameter_count() == 200);
    std::vector<double> v = m.flatten();
    CHECK(v == std::vector<double>{0.1, 0.2, 1, 1, 0.1, 0.2, 1, 1, 0.1, 0.2, 1, 1});
    v[4] = -3.0;
    m.unflatten(v);
    m.project();
    CHECK(m.params[1].threshold_L == 0.0);
    CHECK_THROWS_AS(m.unflatten(std::vector<double>(5)), UsageError);
}

TEST_CASE("analytic gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
        const auto P = structured_problem(6, 8, 3, 40 + seed);
        const Casorati gt = target(*P, 90 + seed);
        for (auto mode : {ActivationMode::Simple, ActivationMode::Soft, ActivationMode::Garrote}) {
            for (bool tied : {true, false}) {
                UnfoldedModel m = UnfoldedModel::make(mode, tied, 4, 0.05, 0.01);
                if (mode == ActivationMode::Soft) {
                    auto v = m.flatten();
                    for (std::size_t i = 2; i < v.size(); i += 4) v[i] = 0.9, v[i + 1] = 1.1;
                    m.unflatten(v);
                }
                CAPTURE(seed);
                CAPTURE(to_string(mode));
                CAPTURE(tied);
                check_gradient(m, *P, gt, 0.5);
            }
        }
    }
}

TEST_CASE("frozen factors approximate the exact threshold gradient") {
    // Four frames and a noiseless rank-2 scene keep the singular values of every layer apart.
    const auto P = structured_problem(6, 4, 8, 61, 0.0);
    const Casorati gt = target(*P, 62);
    const UnfoldedModel m = UnfoldedModel::make(ActivationMode::Simple, true, 4, 0.05, 0.01);
    const ForwardResult fw = forward(m, *P);
    const LossValue lv = mae_loss_with_grad(fw.sum(), gt, 1.0);
    const auto exact = backward(m, *P, fw.tape, lv.grad, SvdBackend::Exact).grad;
    const auto frozen = backward(m, *P, fw.tape, lv.grad, SvdBackend::Frozen).grad;
    CHECK(std::isfinite(frozen[0]));
    CHECK(std::abs(frozen[0] - exact[0]) <= 0.1 * std::abs(exact[0]));
}

TEST_CASE("Adam step matches a hand computation") {
    AdamState a;
    std::vector<double> p{1.0, -2.0};
    a.step(p, {0.5, -0.1}, 0.01);
    // First step with bias correction moves each coordinate by lr * sign(g) (up to eps).
    CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(-1.99).epsilon(1e-9));
    const double p0 = p[0];
    a.step(p, {0.5, 0.3}, 0.01);
    const double m1 = 0.9 * 0.05 + 0.1 * 0.5, v1 = 0.999 * 0.00025 + 0.001 * 0.25;
    const double mh = m1 / (1 - 0.81), vh = v1 / (1 - 0.999 * 0.999);
    CHECK(p[0] == doctest::Approx(p0 - 0.01 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("training lowers the loss and is reproducible") {
    std::vector<Example> data;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto P = structured_problem(6, 8, 3, 70 + s);
        data.push_back({P, cpa_solve(*P, {0.002, 0.001, 300, std::nullopt}).sum()});
    }
    const UnfoldedModel init = UnfoldedModel::make(ActivationMode::Soft, false, 5, 0.3, 0.1);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.learning_rate = 0.02;
    cfg.loss_fraction = 1.0;
    cfg.seed = 3;
    const TrainResult a = train(init, data, cfg), b = train(init, data, cfg);
    CHECK(a.history.size() == 6);
    CHECK(a.history.back() < a.initial_loss);
    CHECK(a.model.flatten() == b.model.flatten());
    for (const auto& p : a.model.params) CHECK(p.threshold_L >= 0);
    cfg.learning_rate = -1;
    CHECK_THROWS_AS(train(init, data, cfg), UsageError);
}

TEST_CASE("parameter file round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "lps_params_test";
    std::filesystem::create_directories(dir);
    for (bool tied : {true, false}) {
        UnfoldedModel m = UnfoldedModel::make(ActivationMode::Soft, tied, 3, 0.0234, 1.6e-5);
        auto v = m.flatten();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += 1e-3 * double(i) / 3.0;
        m.unflatten(v);
        write_params(dir / "p.csv", m);
        const UnfoldedModel r = read_params(dir / "p.csv");
        CHECK(r.mode == m.mode);
        CHECK(r.tied == m.tied);
        CHECK(r.layers == m.layers);
        CHECK(r.flatten() == m.flatten());
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("loss gradient is the scaled sign of the residual") {
    Casorati r(2, 4), g = Casorati::Zero(2, 4);
    r << Complex(3, 4), 1, 1, 1, 2, 1, 1, 1;
    const LossValue lv = mae_loss_with_grad(r, g, 0.25);
    CHECK(lv.value == doctest::Approx(3.5));
    CHECK(lv.grad(0, 0) == Complex(0.3, 0.4));
    CHECK(lv.grad(1, 0) == Complex(0.5, 0));
    CHECK(lv.grad(0, 1) == Complex(0, 0));
}
