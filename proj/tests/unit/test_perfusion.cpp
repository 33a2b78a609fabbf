#include "lps/perfusion.hpp"
#include "lps/random.hpp"
#include "lps/simulate.hpp"

#include <doctest.h>

#include <algorithm>

using namespace lps;

namespace {

std::vector<double> aif_on(std::size_t nt, double dt) {
    std::vector<double> t(nt);
    for (std::size_t i = 0; i < nt; ++i) t[i] = double(i) * dt;
    return GammaVariate{}.sample(t);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

const Perfusion kTruths[] = {{0.4, 0.3, 8.0, 0.25}, {0.9, 0.15, 4.0, 0.1}, {0.2, 0.5, 12.0, 0.4}};

} // namespace

TEST_CASE("noiseless curves refit to their parameters") {
    const double dt = 1.92;
    const auto aif = aif_on(32, dt);
    for (const Perfusion& p : kTruths) {
        const auto c = tissue_curve(p, aif, dt);
        const Perfusion init{p.Fp * 1.5, std::min(p.E * 1.5, 0.9), p.Tc * 1.5, std::min(p.ve * 1.5, 0.9)};
        const PixelFit f = fit_pixel(c, aif, dt, init);
        CHECK(f.converged);
        CHECK(f.residual <= f.initial_residual);
        CHECK(rel(f.p.Fp, p.Fp) <= 0.01);
        CHECK(rel(f.p.E, p.E) <= 0.01);
        CHECK(rel(f.p.Tc, p.Tc) <= 0.01);
        CHECK(rel(f.p.ve, p.ve) <= 0.01);
    }
}

TEST_CASE("fits under 1 percent noise stay within 10 percent in the median") {
    const double dt = 0.96;
    const auto aif = aif_on(64, dt);
    const Perfusion p = kTruths[0];
    const auto clean = tissue_curve(p, aif, dt);
    const double peak = *std::max_element(clean.begin(), clean.end());
    std::vector<double> eF, eE, eT, eV;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(substream(77, seed));
        auto c = clean;
        for (double& v : c) v += 0.01 * peak * rng.normal();
        const PixelFit f = fit_pixel(c, aif, dt, Perfusion{});
        eF.push_back(rel(f.p.Fp, p.Fp));
        eE.push_back(rel(f.p.E, p.E));
        eT.push_back(rel(f.p.Tc, p.Tc));
        eV.push_back(rel(f.p.ve, p.ve));
    }
    CHECK(median(eF) <= 0.1);
    CHECK(median(eE) <= 0.1);
    CHECK(median(eT) <= 0.1);
    CHECK(median(eV) <= 0.1);
}

TEST_CASE("all-zero curve is reported as not converged") {
    const auto aif = aif_on(16, 1.0);
    const PixelFit f = fit_pixel(std::vector<double>(16, 0.0), aif, 1.0, Perfusion{});
    CHECK_FALSE(f.converged);
    CHECK(f.p.Fp == 0.0);
}

TEST_CASE("maps from the rendered phantom match the generator") {
    const PhantomSpec spec = PhantomSpec::desk(32, 32, 32, 1.92, 5);
    const ImageSequence seq = render_phantom(spec);
    const PerfusionMaps ref = true_maps(spec);
    const auto masks = roi_masks(spec);
    const auto aif = spec.aif.sample(spec.times());
    FitConfig cfg;
    cfg.signal = spec.signal;
    const PerfusionMaps est = fit_maps(seq, masks, aif, spec.dt, cfg, spec.aif.t0);
    REQUIRE(masks.size() == 4);
    for (const auto& m : masks) {
        for (MapParam prm : {MapParam::Fp, MapParam::E, MapParam::Tc, MapParam::ve}) {
            std::vector<double> e;
            for (std::size_t i = 0; i < m.inside.size(); ++i)
                if (m.inside[i]) e.push_back(rel(field(est, prm)[i], field(ref, prm)[i]));
            REQUIRE(!e.empty());
            CAPTURE(m.name);
            CAPTURE(to_string(prm));
            CHECK(median(e) <= 0.01);
        }
    }
    const RoiReport rep = roi_relative_error(est, ref, masks);
    CHECK(rep.at("tumour", MapParam::Fp).mean_rel_err_pct < 1.0);
    CHECK(rep.csv().rfind("roi,parameter,mean_rel_err_pct\n", 0) == 0);
}

TEST_CASE("ROI report excludes zero references and differences subtract") {
    PerfusionMaps ref(2, 1), a(2, 1), b(2, 1);
    ref.set(0, {0.5, 0.2, 5, 0.2}, 0, true);
    a.set(0, {0.6, 0.2, 5, 0.2}, 0, true);
    b.set(0, {0.55, 0.2, 5, 0.2}, 0, true);
    a.set(1, {1.0, 0.2, 5, 0.2}, 0, true);
    const std::vector<RoiMask> masks{{"r", {1, 1}}};
    const RoiReport ra = roi_relative_error(a, ref, masks), rb = roi_relative_error(b, ref, masks);
    CHECK(ra.at("r", MapParam::Fp).mean_rel_err_pct == doctest::Approx(20.0));
    CHECK(ra.at("r", MapParam::Fp).excluded == 1);
    CHECK(difference(ra, rb).at("r", MapParam::Fp).mean_rel_err_pct == doctest::Approx(10.0));
}
