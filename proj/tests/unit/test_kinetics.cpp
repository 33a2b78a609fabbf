#include "lps/kinetics.hpp"
#include "lps/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace lps;

namespace {

// Fine-grid Riemann-midpoint convolution of the interpolated AIF with the residue.
double conv_oracle(const Perfusion& p, const std::vector<double>& aif, double dt, double t) {
    auto c = [&](double s) {
        if (s <= 0) return 0.0;
        const double i = s / dt;
        const auto k = static_cast<std::size_t>(i);
        if (k + 1 >= aif.size()) return aif.back();
        const double w = i - double(k);
        return (1 - w) * aif[k] + w * aif[k + 1];
    };
    const int n = 200000;
    const double h = t / n;
    double acc = 0;
    for (int j = 0; j < n; ++j) {
        const double s = (j + 0.5) * h;
        acc += c(t - s) * ath_residue(s, p);
    }
    return p.Fp / 60.0 * acc * h;
}

} // namespace

TEST_CASE("derived parameters") {
    const DerivedParams d = derive_params({0.5, 0.2, 6, 0.3});
    CHECK(d.Ktrans == doctest::Approx(0.1));
    CHECK(d.PS == doctest::Approx(-0.5 * std::log(0.8)));
}

TEST_CASE("ATH residue shape") {
    const Perfusion p{0.6, 0.25, 5.0, 0.2};
    CHECK(ath_residue(0.0, p) == 1.0);
    CHECK(ath_residue(4.99, p) == 1.0);
    CHECK(ath_residue(5.0, p) == doctest::Approx(0.25));
    const double k = 0.25 * 0.6 / 60.0 / 0.2;
    CHECK(ath_residue(15.0, p) == doctest::Approx(0.25 * std::exp(-k * 10.0)));
}

TEST_CASE("gamma variate peaks at one") {
    const GammaVariate g;
    CHECK(g(g.t0) == 0.0);
    CHECK(g(g.t0 + g.a * g.b) == doctest::Approx(1.0));
    CHECK(g(g.t0 + g.a * g.b + 0.1) < 1.0);
    CHECK(g(g.t0 - 1) == 0.0);
}

TEST_CASE("tissue curve equals the fine-grid convolution") {
    const double dt = 1.92;
    std::vector<double> t(32);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = double(i) * dt;
    const std::vector<double> aif = GammaVariate{}.sample(t);
    for (const Perfusion& p : {Perfusion{0.3, 0.3, 8.0, 0.3}, Perfusion{1.2, 0.1, 3.3, 0.05}}) {
        const auto curve = tissue_curve(p, aif, dt);
        REQUIRE(curve.size() == aif.size());
        CHECK(curve[0] == 0.0);
        for (std::size_t n : {3u, 7u, 15u, 31u})
            CHECK(curve[n] == doctest::Approx(conv_oracle(p, aif, dt, t[n])).epsilon(1e-6));
    }
}

TEST_CASE("signal model inverts") {
    SignalParams lin;
    lin.gain = 0.01;
    CHECK(signal_model(2.0, 1.0, lin) == doctest::Approx(1.02));
    CHECK(to_concentration(1.02, 1.0, lin).value == doctest::Approx(2.0));
    SignalParams sp;
    sp.mode = SignalMode::Spgr;
    CHECK(signal_model(0.0, 0.7, sp) == doctest::Approx(0.7));
    for (double C : {0.0, 0.05, 0.5, 2.0}) {
        const double S = signal_model(C, 0.7, sp);
        const ConcentrationSample back = to_concentration(S, 0.7, sp);
        CHECK_FALSE(back.clamped);
        CHECK(back.value == doctest::Approx(C).epsilon(1e-9).scale(1));
    }
    CHECK(signal_model(1.0, 0.7, sp) > signal_model(0.5, 0.7, sp));
    CHECK(to_concentration(0.1, 0.7, sp).clamped);
    CHECK(parse_signal_mode("spgr") == SignalMode::Spgr);
    CHECK_THROWS_AS(parse_signal_mode("t2"), UsageError);
}

TEST_CASE("parameter validity") {
    CHECK(Perfusion{}.valid());
    CHECK_FALSE(Perfusion{0.3, 1.0, 8, 0.3}.valid());
    CHECK_FALSE(Perfusion{-0.1, 0.3, 8, 0.3}.valid());
    CHECK_FALSE(Perfusion{0.3, 0.3, 8, 0.0}.valid());
}
