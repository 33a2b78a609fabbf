#include "lps/simulate.hpp"

#include "lps/error.hpp"
#include "lps/operators.hpp"
#include "lps/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lps {

namespace {

constexpr double kPi = std::numbers::pi;

double q32(double v) { return static_cast<double>(static_cast<float>(v)); }
Complex q32(Complex z) { return {q32(z.real()), q32(z.imag())}; }

// Stream tags.
constexpr std::uint64_t kTagPhantom = 0x7068616e;
constexpr std::uint64_t kTagNoise = 0x6e6f6973;

} // namespace

double golden_angle_deg(std::size_t i) {
    const double step = 180.0 * (std::sqrt(5.0) - 1.0) / 2.0;
    // Exact integer multiple then reduction; fmod is exact.
    return std::fmod(static_cast<double>(i) * step, 180.0);
}

std::vector<KPoint> golden_trajectory(std::size_t nspokes, std::size_t nread, std::size_t first_spoke) {
    if (nread == 0) throw UsageError("golden_trajectory: nread must be positive");
    std::vector<KPoint> traj(nspokes * nread);
    for (std::size_t s = 0; s < nspokes; ++s) {
        const double th = golden_angle_deg(first_spoke + s) * kPi / 180.0;
        const double c = std::cos(th), sn = std::sin(th);
        for (std::size_t r = 0; r < nread; ++r) {
            const double rad = -0.5 + static_cast<double>(r) / static_cast<double>(nread);
            traj[s * nread + r] = {rad * c, rad * sn};
        }
    }
    return traj;
}

CoilSensitivities synth_sensitivities(std::size_t ncoils, std::size_t nx, std::size_t ny) {
    if (ncoils == 0 || nx == 0 || ny == 0) throw UsageError("synth_sensitivities: empty geometry");
    const double cx = 0.5 * static_cast<double>(nx), cy = 0.5 * static_cast<double>(ny);
    const double R = 0.5 * static_cast<double>(std::max(nx, ny));
    const double w = 0.5 * static_cast<double>(std::max(nx, ny));
    std::vector<Eigen::VectorXcd> maps(ncoils, Eigen::VectorXcd(static_cast<Eigen::Index>(nx * ny)));
    for (std::size_t c = 0; c < ncoils; ++c) {
        const double th = 2.0 * kPi * static_cast<double>(c) / static_cast<double>(ncoils);
        const double px = cx + R * std::cos(th), py = cy + R * std::sin(th);
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) {
                const double dx = static_cast<double>(x) - px, dy = static_cast<double>(y) - py;
                const double mag = ncoils == 1 ? 1.0 : std::exp(-(dx * dx + dy * dy) / (2 * w * w));
                const double ph = th + 0.5 * kPi * ((static_cast<double>(x) - cx) * std::cos(th) +
                                                    (static_cast<double>(y) - cy) * std::sin(th)) /
                                           static_cast<double>(nx);
                maps[c](static_cast<Eigen::Index>(y * nx + x)) = std::polar(mag, ph);
            }
    }
    for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(nx * ny); ++p) {
        double ss = 0;
        for (const auto& m : maps) ss += std::norm(m(p));
        const double inv = 1.0 / std::sqrt(ss);
        for (auto& m : maps) m(p) *= inv;
    }
    return CoilSensitivities(nx, ny, std::move(maps));
}

bool Ellipse::contains(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = ((x - cx) * c + (y - cy) * s) / ax;
    const double v = (-(x - cx) * s + (y - cy) * c) / ay;
    return u * u + v * v <= 1.0;
}

void PhantomSpec::validate() const {
    if (nx < 2 || ny < 2 || nt_full < 2) throw UsageError("phantom needs nx, ny, nt >= 2");
    if (!(dt > 0)) throw UsageError("phantom frame period must be positive");
    auto inside = [&](const Ellipse& e) {
        const double r = std::max(e.ax, e.ay);
        return e.ax > 0 && e.ay > 0 && e.cx - r >= -0.5 && e.cy - r >= -0.5 &&
               e.cx + r <= static_cast<double>(nx) - 0.5 && e.cy + r <= static_cast<double>(ny) - 0.5;
    };
    if (!inside(head)) throw UsageError("head ellipse leaves the image");
    if (!head_perfusion.valid()) throw UsageError("invalid head perfusion record");
    for (const auto& r : rois) {
        if (!inside(r.region)) throw UsageError("ROI '" + r.name + "' leaves the image");
        if (!r.perfusion.valid()) throw UsageError("invalid perfusion record for ROI '" + r.name + "'");
    }
}

std::vector<double> PhantomSpec::times() const {
    std::vector<double> t(nt_full);
    for (std::size_t f = 0; f < nt_full; ++f) t[f] = static_cast<double>(f) * dt;
    return t;
}

PhantomSpec PhantomSpec::desk(std::size_t nx, std::size_t ny, std::size_t nt, double dt, std::uint64_t seed,
                              double intensity_scale) {
    Rng rng(substream(seed, kTagPhantom));
    const double X = static_cast<double>(nx), Y = static_cast<double>(ny);
    auto jit = [&](double v, double rel) { return v * (1.0 + rel * rng.uniform(-1.0, 1.0)); };
    auto ell = [&](double cx, double cy, double ax, double ay, double angle) {
        return Ellipse{cx * X - 0.5 + 0.03 * X * rng.uniform(-1.0, 1.0), cy * Y - 0.5 + 0.03 * Y * rng.uniform(-1.0, 1.0),
                       jit(ax * X, 0.08), jit(ay * Y, 0.08), angle + 0.2 * rng.uniform(-1.0, 1.0)};
    };
    auto perf = [&](double Fp, double E, double Tc, double ve) {
        return Perfusion{jit(Fp, 0.15), jit(E, 0.15), jit(Tc, 0.15), jit(ve, 0.15)};
    };

    PhantomSpec s;
    s.nx = nx;
    s.ny = ny;
    s.nt_full = nt;
    s.dt = dt;
    s.head = {0.5 * X - 0.5, 0.5 * Y - 0.5, 0.44 * X, 0.47 * Y, 0.0};
    s.head_baseline = jit(0.6, 0.05) * intensity_scale;
    s.head_perfusion = perf(0.4, 0.04, 3.0, 0.1);
    s.vessel = ell(0.5, 0.58, 0.045, 0.045, 0.0);
    s.vessel_baseline = jit(0.4, 0.05) * intensity_scale;
    s.rois = {
        {"left_muscle", ell(0.24, 0.70, 0.09, 0.13, 0.3), jit(0.5, 0.05) * intensity_scale, perf(0.15, 0.35, 6.0, 0.15)},
        {"right_muscle", ell(0.76, 0.70, 0.09, 0.13, -0.3), jit(0.5, 0.05) * intensity_scale, perf(0.15, 0.35, 6.0, 0.15)},
        {"tongue", ell(0.50, 0.80, 0.13, 0.07, 0.0), jit(0.55, 0.05) * intensity_scale, perf(0.3, 0.25, 8.0, 0.2)},
        {"tumour", ell(0.58, 0.32, 0.11, 0.11, 0.0), jit(0.7, 0.05) * intensity_scale, perf(0.6, 0.35, 5.0, 0.35)},
    };
    s.background = 0.0;
    s.signal.gain = intensity_scale;
    s.validate();
    return s;
}

void AcquisitionConfig::validate(const PhantomSpec& spec) const {
    if (ncoils == 0) throw UsageError("ncoils must be positive");
    if (spokes_per_frame == 0 || decimation == 0) throw UsageError("spokes_per_frame and decimation must be positive");
    if (!(noise_sigma >= 0)) throw UsageError("noise_sigma must be >= 0");
    if (!(TR > 0)) throw UsageError("TR must be positive");
    const std::size_t total = spec.nt_full * spokes_per_frame * decimation;
    if (spokes_total != 0 && spokes_total != total)
        throw UsageError("spokes_total must equal nt * spokes_per_frame * decimation (" + std::to_string(total) + ")");
    if (std::abs(spec.dt - frame_period()) > 1e-9 * frame_period())
        throw UsageError("phantom frame period does not match spokes_per_frame * decimation * TR");
}

namespace {

// Label image: -1 outside the head, 0 head tissue, 1 vessel, 2 + i ROI i.
std::vector<int> labels(const PhantomSpec& spec) {
    std::vector<int> lab(spec.nx * spec.ny, -1);
    for (std::size_t y = 0; y < spec.ny; ++y)
        for (std::size_t x = 0; x < spec.nx; ++x) {
            const double fx = static_cast<double>(x), fy = static_cast<double>(y);
            int l = -1;
            if (spec.head.contains(fx, fy)) l = 0;
            if (l == 0 && spec.vessel.contains(fx, fy)) l = 1;
            for (std::size_t i = 0; i < spec.rois.size(); ++i)
                if (spec.rois[i].region.contains(fx, fy)) l = 2 + static_cast<int>(i);
            lab[y * spec.nx + x] = l;
        }
    return lab;
}

} // namespace

ImageSequence render_phantom(const PhantomSpec& spec) {
    spec.validate();
    const auto t = spec.times();
    const auto aif = spec.aif.sample(t);
    const auto lab = labels(spec);
    std::vector<std::vector<double>> curves;
    curves.push_back(tissue_curve(spec.head_perfusion, aif, spec.dt));
    curves.push_back(aif);
    for (const auto& r : spec.rois) curves.push_back(tissue_curve(r.perfusion, aif, spec.dt));

    const std::size_t npix = spec.nx * spec.ny;
    std::vector<Complex> v(npix * spec.nt_full);
    for (std::size_t f = 0; f < spec.nt_full; ++f)
        for (std::size_t p = 0; p < npix; ++p) {
            const int l = lab[p];
            double s = spec.background;
            if (l == 0) s = signal_model(curves[0][f], spec.head_baseline, spec.signal);
            else if (l == 1) s = signal_model(curves[1][f], spec.vessel_baseline, spec.signal);
            else if (l >= 2) s = signal_model(curves[static_cast<std::size_t>(l)][f], spec.rois[static_cast<std::size_t>(l - 2)].baseline, spec.signal);
            v[f * npix + p] = s;
        }
    return ImageSequence({spec.nx, spec.ny, spec.nt_full}, std::move(v));
}

PerfusionMaps true_maps(const PhantomSpec& spec) {
    const auto lab = labels(spec);
    PerfusionMaps m(spec.nx, spec.ny);
    for (std::size_t p = 0; p < lab.size(); ++p) {
        if (lab[p] == 0) m.set(p, spec.head_perfusion, 0.0, true);
        else if (lab[p] >= 2) m.set(p, spec.rois[static_cast<std::size_t>(lab[p] - 2)].perfusion, 0.0, true);
    }
    return m;
}

std::vector<RoiMask> roi_masks(const PhantomSpec& spec) {
    const auto lab = labels(spec);
    std::vector<RoiMask> masks;
    for (std::size_t i = 0; i < spec.rois.size(); ++i) {
        RoiMask m{spec.rois[i].name, std::vector<std::uint8_t>(lab.size(), 0)};
        for (std::size_t p = 0; p < lab.size(); ++p) m.inside[p] = lab[p] == 2 + static_cast<int>(i);
        masks.push_back(std::move(m));
    }
    return masks;
}

namespace {

std::vector<std::size_t> frame_binning(std::size_t nt, std::size_t spf) {
    std::vector<std::size_t> b(nt * spf);
    for (std::size_t s = 0; s < b.size(); ++s) b[s] = s / spf;
    return b;
}

KSpaceDataset geometry(std::size_t ncoils, std::size_t nt, std::size_t spf, std::size_t nread) {
    std::vector<KPoint> traj = golden_trajectory(nt * spf, nread);
    for (auto& k : traj) k = {q32(k.kx), q32(k.ky)};
    return KSpaceDataset(ncoils, nt * spf, nread, std::vector<Complex>(ncoils * nt * spf * nread), std::move(traj),
                         frame_binning(nt, spf));
}

// Conjugate gradients on A*A x = b, all frames at once.
Casorati solve_normal(const NormalOperator& AhA, const Casorati& b, std::size_t iters) {
    Casorati x = Casorati::Zero(b.rows(), b.cols());
    Casorati r = b, p = b, Ap;
    double rr = r.squaredNorm();
    const double stop = 1e-28 * b.squaredNorm();
    for (std::size_t it = 0; it < iters && rr > stop; ++it) {
        AhA.apply(p, Ap);
        const double alpha = rr / std::real(p.cwiseProduct(Ap.conjugate()).sum());
        x += alpha * p;
        r -= alpha * Ap;
        const double rr_new = r.squaredNorm();
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    return x;
}

void record(io::Manifest& m, const std::string& key, double v) { m.emplace_back(key, io::format_double(v)); }
void record(io::Manifest& m, const std::string& key, std::size_t v) { m.emplace_back(key, std::to_string(v)); }

io::Manifest make_manifest(const PhantomSpec& spec, const AcquisitionConfig& acq) {
    io::Manifest m;
    m.emplace_back("seed", std::to_string(acq.seed));
    record(m, "nx", spec.nx);
    record(m, "ny", spec.ny);
    record(m, "nt", spec.nt_full);
    record(m, "dt", spec.dt);
    record(m, "ncoils", acq.ncoils);
    record(m, "nread", acq.nread);
    record(m, "spokes_per_frame", acq.spokes_per_frame);
    record(m, "decimation", acq.decimation);
    record(m, "spokes_total", spec.nt_full * acq.spokes_per_frame * acq.decimation);
    record(m, "TR", acq.TR);
    record(m, "flip_deg", acq.flip_deg);
    record(m, "TE", acq.TE);
    record(m, "noise_sigma", acq.noise_sigma);
    record(m, "truth_iterations", acq.truth_iterations);
    m.emplace_back("signal_mode", std::string(to_string(spec.signal.mode)));
    record(m, "signal_gain", spec.signal.gain);
    record(m, "aif_t0", spec.aif.t0);
    record(m, "aif_a", spec.aif.a);
    record(m, "aif_b", spec.aif.b);
    record(m, "background", spec.background);
    record(m, "head_baseline", spec.head_baseline);
    record(m, "roi_count", spec.rois.size());
    for (std::size_t i = 0; i < spec.rois.size(); ++i) {
        const auto& r = spec.rois[i];
        const std::string k = "roi." + std::to_string(i) + ".";
        m.emplace_back(k + "name", r.name);
        record(m, k + "baseline", r.baseline);
        record(m, k + "Fp", r.perfusion.Fp);
        record(m, k + "E", r.perfusion.E);
        record(m, k + "Tc", r.perfusion.Tc);
        record(m, k + "ve", r.perfusion.ve);
    }
    return m;
}

} // namespace

Simulation simulate_dataset(const PhantomSpec& spec, const AcquisitionConfig& acq_in) {
    spec.validate();
    AcquisitionConfig acq = acq_in;
    if (acq.nread == 0) acq.nread = 2 * spec.nx;
    acq.validate(spec);

    Simulation sim;
    {
        const ImageSequence ph = render_phantom(spec);
        sim.phantom = from_casorati(to_casorati(ph).unaryExpr([](Complex z) { return q32(z); }), spec.nx, spec.ny);
    }
    sim.maps = true_maps(spec);
    for (auto* f : {&sim.maps.Fp, &sim.maps.E, &sim.maps.Tc, &sim.maps.ve, &sim.maps.Ktrans, &sim.maps.PS, &sim.maps.residual})
        for (double& v : *f) v = q32(v);
    sim.masks = roi_masks(spec);
    sim.aif = spec.aif.sample(spec.times());
    for (auto& a : sim.aif) a = q32(a);

    {
        CoilSensitivities raw = synth_sensitivities(acq.ncoils, spec.nx, spec.ny);
        std::vector<Eigen::VectorXcd> maps;
        for (std::size_t c = 0; c < raw.ncoils(); ++c) maps.push_back(raw.map(c).unaryExpr([](Complex z) { return q32(z); }));
        sim.sens = CoilSensitivities(spec.nx, spec.ny, std::move(maps));
    }

    const Casorati x = to_casorati(sim.phantom);

    // Ground truth: least squares from fully sampled noiseless data.
    {
        const KSpaceDataset full = geometry(acq.ncoils, spec.nt_full, acq.spokes_per_frame * acq.decimation, acq.nread);
        const EncodingOperator A(sim.sens, full);
        const NormalOperator AhA(A);
        const Casorati gt = solve_normal(AhA, AhA.apply(x), acq.truth_iterations);
        sim.truth = from_casorati(gt.unaryExpr([](Complex z) { return q32(z); }), spec.nx, spec.ny);
    }

    // Undersampled noisy acquisition.
    KSpaceDataset geo = geometry(acq.ncoils, spec.nt_full, acq.spokes_per_frame, acq.nread);
    const EncodingOperator A(sim.sens, geo);
    Eigen::VectorXcd y = A.forward(x);
    const std::size_t nspokes = geo.nspokes(), nread = geo.nread();
    // Stored at binary32 first: GCC 11 at -O3 vectorized away an in-place double round trip.
    std::vector<std::complex<float>> stored(static_cast<std::size_t>(y.size()));
#pragma omp parallel for schedule(static)
    for (long cs = 0; cs < static_cast<long>(acq.ncoils * nspokes); ++cs) {
        Rng rng(substream(acq.seed, kTagNoise, static_cast<std::uint64_t>(cs)));
        for (std::size_t r = 0; r < nread; ++r) {
            const std::size_t i = static_cast<std::size_t>(cs) * nread + r;
            const double re = rng.normal(), im = rng.normal();
            const Complex z = y(static_cast<Eigen::Index>(i)) + acq.noise_sigma * Complex(re, im);
            stored[i] = {static_cast<float>(z.real()), static_cast<float>(z.imag())};
        }
    }
    sim.data = geo.with_samples(std::vector<Complex>(stored.begin(), stored.end()));
    sim.manifest = make_manifest(spec, acq);
    return sim;
}

const std::vector<MapParam>& map_order() {
    static const std::vector<MapParam> order{MapParam::Fp, MapParam::E,      MapParam::Tc,
                                             MapParam::ve, MapParam::Ktrans, MapParam::PS};
    return order;
}

io::RawArray maps_to_raw(const PerfusionMaps& m) {
    std::vector<double> v;
    for (MapParam p : map_order()) v.insert(v.end(), field(m, p).begin(), field(m, p).end());
    v.insert(v.end(), m.residual.begin(), m.residual.end());
    for (auto c : m.converged) v.push_back(c);
    for (auto c : m.fitted) v.push_back(c);
    return io::real_array({map_order().size() + 3, m.ny, m.nx}, v);
}

PerfusionMaps maps_from_raw(const io::RawArray& a) {
    if (a.is_complex || a.dims.size() != 3 || a.dims[0] != map_order().size() + 3)
        throw FormatError(FormatError::Kind::Syntax, "maps array must be (9, ny, nx) real");
    PerfusionMaps m(a.dims[2], a.dims[1]);
    const auto v = io::real_values(a);
    const std::size_t n = m.nx * m.ny;
    std::vector<std::vector<double>*> dst{&m.Fp, &m.E, &m.Tc, &m.ve, &m.Ktrans, &m.PS, &m.residual};
    for (std::size_t k = 0; k < dst.size(); ++k) std::copy_n(v.begin() + static_cast<long>(k * n), n, dst[k]->begin());
    for (std::size_t i = 0; i < n; ++i) {
        m.converged[i] = v[7 * n + i] != 0;
        m.fitted[i] = v[8 * n + i] != 0;
    }
    return m;
}

void write_simulation(const std::filesystem::path& dir, const Simulation& sim) {
    std::filesystem::create_directories(dir);
    io::write_dataset(dir, sim.data, sim.sens);
    io::write_sequence(dir / "truth.cseq", sim.truth);
    io::write_sequence(dir / "phantom.cseq", sim.phantom);
    io::write_array(dir / "maps.rseq", maps_to_raw(sim.maps));
    std::vector<double> mv;
    for (const auto& m : sim.masks) mv.insert(mv.end(), m.inside.begin(), m.inside.end());
    io::write_array(dir / "masks.rseq", io::real_array({sim.masks.size(), sim.truth.ny(), sim.truth.nx()}, mv));
    io::write_array(dir / "aif.rseq", io::real_array({sim.aif.size()}, sim.aif));
    io::write_manifest(dir / "manifest.txt", sim.manifest);
}

Simulation read_simulation(const std::filesystem::path& dir) {
    Simulation sim;
    std::tie(sim.data, sim.sens) = io::read_dataset(dir);
    sim.truth = io::read_sequence(dir / "truth.cseq");
    sim.phantom = io::read_sequence(dir / "phantom.cseq");
    sim.maps = maps_from_raw(io::read_array(dir / "maps.rseq"));
    sim.manifest = io::read_manifest(dir / "manifest.txt");
    const auto ma = io::read_array(dir / "masks.rseq");
    if (ma.is_complex || ma.dims.size() != 3 || ma.dims[1] != sim.truth.ny() || ma.dims[2] != sim.truth.nx())
        throw FormatError(FormatError::Kind::Syntax, "masks array must be (roi, ny, nx) real");
    const auto mv = io::real_values(ma);
    const std::size_t n = sim.truth.nx() * sim.truth.ny();
    for (std::size_t i = 0; i < ma.dims[0]; ++i) {
        RoiMask m{"roi" + std::to_string(i), std::vector<std::uint8_t>(n)};
        for (const auto& [k, v] : sim.manifest)
            if (k == "roi." + std::to_string(i) + ".name") m.name = v;
        for (std::size_t p = 0; p < n; ++p) m.inside[p] = mv[i * n + p] != 0;
        sim.masks.push_back(std::move(m));
    }
    sim.aif = io::real_values(io::read_array(dir / "aif.rseq"));
    return sim;
}

} // namespace lps
