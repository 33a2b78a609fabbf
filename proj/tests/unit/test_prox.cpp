#include "fixtures.hpp"
#include "lps/prox.hpp"

#include <Eigen/SVD>
#include <doctest.h>

using namespace lps;
using namespace lps::test;

namespace {

double nuclear(const Casorati& X) { return Eigen::JacobiSVD<Casorati>(X).singularValues().sum(); }

} // namespace

TEST_CASE("soft thresholding closed forms") {
    CHECK(soft(3.0, 1.0) == 2.0);
    CHECK(soft(-3.0, 1.0) == -2.0);
    CHECK(soft(0.5, 1.0) == 0.0);
    CHECK(soft(Complex(3, 4), 1.0) == Complex(3.0 * 4.0 / 5.0, 4.0 * 4.0 / 5.0));
    CHECK(soft(Complex(0.3, 0.4), 1.0) == Complex(0, 0));
    CHECK(soft(Complex(0, 0), 0.0) == Complex(0, 0));
    CHECK(garrote(Complex(2, 0), 1.0) == Complex(1.5, 0));
    CHECK(garrote(Complex(0, 0.5), 1.0) == Complex(0, 0));
}

TEST_CASE("SVT of a diagonal matrix thresholds the diagonal") {
    Casorati D = Casorati::Zero(4, 3);
    D(0, 0) = 5.0;
    D(1, 1) = 2.0;
    D(2, 2) = 0.5;
    const Casorati out = svt(D, 1.0);
    Casorati expect = Casorati::Zero(4, 3);
    expect(0, 0) = 4.0;
    expect(1, 1) = 1.0;
    CHECK((out - expect).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("SVT and soft satisfy prox optimality under random perturbations") {
    // prox(Y) minimizes 1/2 ||X - Y||^2 + alpha f(X); no perturbation may lower the value.
    std::size_t violations = 0;
    for (std::uint64_t inst = 0; inst < 50; ++inst) {
        const Casorati Y = random_casorati(7, 5, 10 + inst);
        const double alpha = 0.5 + 0.05 * double(inst % 20);
        const Casorati Xs = svt(Y, alpha);
        const Casorati Xe = activate_elementwise(ActivationMode::Simple, Y, alpha, 1.0);
        auto obj_s = [&](const Casorati& X) { return 0.5 * (X - Y).squaredNorm() + alpha * nuclear(X); };
        auto obj_e = [&](const Casorati& X) { return 0.5 * (X - Y).squaredNorm() + alpha * X.cwiseAbs().sum(); };
        const double fs = obj_s(Xs), fe = obj_e(Xe);
        for (std::uint64_t k = 0; k < 1000; ++k) {
            const double eps = 1e-3 * double(1 + k % 10);
            const Casorati E = random_casorati(7, 5, 100000 * (inst + 1) + k, eps);
            if (obj_s(Xs + E) < fs - 1e-12) ++violations;
            if (obj_e(Xe + E) < fe - 1e-12) ++violations;
        }
    }
    CHECK(violations == 0);
}

TEST_CASE("SVD reconstructs and orders singular values") {
    for (auto [m, n] : {std::pair{9, 4}, std::pair{4, 9}, std::pair{5, 5}}) {
        const Casorati X = random_casorati(m, n, 3);
        const SvdFactors f = svd(X);
        CHECK(f.sigma.size() == std::min(m, n));
        for (Eigen::Index i = 1; i < f.sigma.size(); ++i) CHECK(f.sigma(i - 1) >= f.sigma(i));
        CHECK(rel_err(f.U * f.sigma.asDiagonal() * f.V.adjoint(), X) <= 1e-13);
        CHECK(rel_err(f.U.adjoint() * f.U, Casorati::Identity(f.sigma.size(), f.sigma.size())) <= 1e-13);
    }
    Casorati bad = Casorati::Zero(3, 3);
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(svd(bad), NumericalError);
}

TEST_CASE("shrinkage partials match finite differences") {
    const double h = 1e-6;
    for (auto mode : {ActivationMode::Simple, ActivationMode::Soft, ActivationMode::Garrote}) {
        const double r = 1.7, a = 0.6, s = 0.8;
        const Shrinkage g = shrink(mode, r, a, s);
        auto v = [&](double rr, double aa, double ss) { return shrink(mode, rr, aa, ss).value; };
        CHECK(g.d_r == doctest::Approx((v(r + h, a, s) - v(r - h, a, s)) / (2 * h)).epsilon(1e-7));
        CHECK(g.d_alpha == doctest::Approx((v(r, a + h, s) - v(r, a - h, s)) / (2 * h)).epsilon(1e-7));
        CHECK(g.d_slope == doctest::Approx((v(r, a, s + h) - v(r, a, s - h)) / (2 * h)).epsilon(1e-7).scale(1));
        const Shrinkage z = shrink(mode, 0.6, 0.6, s);
        CHECK(z.value == 0.0);
        CHECK(z.d_alpha == 0.0);
    }
}

TEST_CASE("spectral activation agrees with the elementwise rule on singular values") {
    const Casorati X = random_casorati(6, 4, 8);
    const SvdFactors f = svd(X);
    for (auto mode : {ActivationMode::Soft, ActivationMode::Garrote}) {
        Eigen::VectorXd g(f.sigma.size());
        for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = shrink(mode, f.sigma(i), 1.2, 0.7).value;
        CHECK(rel_err(activate_spectral(mode, X, 1.2, 0.7), f.U * g.asDiagonal() * f.V.adjoint()) <= 1e-13);
    }
    CHECK(rel_err(activate_spectral(ActivationMode::Simple, X, 1.2, 0.3), svt(X, 1.2)) <= 1e-15);
}

TEST_CASE("activation parameter validation and names") {
    CHECK(parse_activation("garrote") == ActivationMode::Garrote);
    CHECK(to_string(ActivationMode::Soft) == "soft");
    CHECK_THROWS_AS(parse_activation("relu"), UsageError);
    ActivationParams p{ActivationMode::Soft, -1.0, 0.0};
    CHECK_THROWS_AS(p.validate(), UsageError);
    CHECK(ActivationParams{ActivationMode::Soft}.count() == 4);
    CHECK(ActivationParams{ActivationMode::Garrote}.count() == 2);
}
