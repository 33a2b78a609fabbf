#include "lps/cli.hpp"

#include "lps/error.hpp"
#include "lps/io.hpp"
#include "lps/metrics.hpp"
#include "lps/operators.hpp"
#include "lps/perfusion.hpp"
#include "lps/random.hpp"
#include "lps/simulate.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

namespace lps::cli {

namespace fs = std::filesystem;

// --- experiment rows ------------------------------------------------------------------------

io::Manifest ExperimentConfig::to_manifest() const {
    return {
        {"run.experiment", name},
        {"train.activation", std::string(to_string(activation))},
        {"train.tied", tied ? "true" : "false"},
        {"train.layers", std::to_string(layers)},
        {"solver.lambda_l", io::format_double(init_lambda_L)},
        {"solver.lambda_s", io::format_double(init_lambda_S)},
        {"train.epochs", std::to_string(train.epochs)},
        {"train.learning_rate", io::format_double(train.learning_rate)},
        {"train.loss_fraction", io::format_double(train.loss_fraction)},
        {"train.batch_size", std::to_string(train.batch_size)},
        {"train.backend", train.backend == SvdBackend::Exact ? "exact" : "frozen"},
        {"run.data", data.string()},
        {"run.out", out.string()},
        {"seed", std::to_string(seed)},
    };
}

namespace {

SvdBackend parse_backend(const std::string& s) {
    if (s == "exact") return SvdBackend::Exact;
    if (s == "frozen") return SvdBackend::Frozen;
    throw UsageError("unknown SVD backend '" + s + "'");
}

} // namespace

ExperimentConfig ExperimentConfig::from_manifest(const io::Manifest& m) {
    Settings s;
    ExperimentConfig c;
    for (const auto& [k, v] : m) {
        if (k == "run.experiment") c.name = v;
        else if (k == "run.data") c.data = v;
        else if (k == "run.out") c.out = v;
    }
    s.load(m);
    c.activation = parse_activation(s.get("train.activation"));
    c.tied = s.flag("train.tied");
    c.layers = s.count("train.layers");
    c.init_lambda_L = s.number("solver.lambda_l");
    c.init_lambda_S = s.number("solver.lambda_s");
    c.train.epochs = s.count("train.epochs");
    c.train.learning_rate = s.number("train.learning_rate");
    c.train.loss_fraction = s.number("train.loss_fraction");
    c.train.batch_size = s.count("train.batch_size");
    c.train.backend = parse_backend(s.get("train.backend"));
    c.seed = s.u64("seed");
    c.train.seed = c.seed;
    return c;
}

std::vector<ExperimentConfig> table1_rows(const TrainConfig& base) {
    struct Row {
        const char* name;
        ActivationMode mode;
        bool tied;
        double l, s;
    };
    const Row rows[] = {
        {"#1", ActivationMode::Simple, true, 0.05, 5e-5},   {"#2", ActivationMode::Simple, false, 0.05, 5e-5},
        {"#3", ActivationMode::Soft, true, 0.0234, 1.6e-5}, {"#4", ActivationMode::Soft, false, 0.0234, 1.6e-5},
        {"#5", ActivationMode::Soft, false, 0.001, 1e-4},   {"#6", ActivationMode::Garrote, false, 0.001, 1e-4},
    };
    std::vector<ExperimentConfig> out;
    for (const auto& r : rows) {
        ExperimentConfig c;
        c.name = r.name;
        c.activation = r.mode;
        c.tied = r.tied;
        c.layers = 100;
        c.init_lambda_L = r.l;
        c.init_lambda_S = r.s;
        c.train = base;
        c.seed = base.seed;
        out.push_back(c);
    }
    return out;
}

std::vector<Table1Row> run_table1_matrix(const std::vector<ExperimentConfig>& configs,
                                         const std::vector<Example>& train, const std::vector<Example>& test) {
    std::vector<Table1Row> rows;
    for (const auto& c : configs) {
        const UnfoldedModel init = UnfoldedModel::make(c.activation, c.tied, c.layers, c.init_lambda_L, c.init_lambda_S);
        TrainConfig tc = c.train;
        tc.seed = c.seed;
        const TrainResult tr = lps::train(init, train, tc);
        Table1Row row{c, tr.model.parameter_count(), tr.history.empty() ? tr.initial_loss : tr.history.back(), 0.0};
        double sum = 0;
        for (const auto& ex : test) sum += mean_abs_error(forward(tr.model, *ex.problem).sum(), ex.truth);
        row.test_mae = test.empty() ? 0.0 : sum / static_cast<double>(test.size());
        rows.push_back(row);
    }
    return rows;
}

std::string table1_csv(const std::vector<Table1Row>& rows) {
    std::ostringstream os;
    os << kTable1Header << '\n';
    for (const auto& r : rows) {
        os << r.config.name << ',' << to_string(r.config.activation) << ',' << (r.config.tied ? "yes" : "no") << ','
           << r.config.layers << ',' << r.trained_params << ',' << io::format_double(r.config.init_lambda_L) << ','
           << io::format_double(r.config.init_lambda_S) << ',' << io::format_double(r.train_loss) << ','
           << io::format_double(r.test_mae) << '\n';
    }
    return os.str();
}

// --- image outputs --------------------------------------------------------------------------

void write_pgm(const fs::path& path, const std::vector<double>& values, std::size_t width, std::size_t height,
               double vmax) {
    if (values.size() != width * height) throw UsageError("write_pgm: size mismatch");
    if (vmax <= 0) {
        vmax = 0;
        for (double v : values)
            if (std::isfinite(v)) vmax = std::max(vmax, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::Io, "cannot open for writing: " + path.string());
    out << "P5\n" << width << ' ' << height << "\n65535\n";
    for (double v : values) {
        double q = vmax > 0 && std::isfinite(v) ? v / vmax : 0.0;
        q = std::clamp(q, 0.0, 1.0);
        const auto u = static_cast<std::uint16_t>(std::lround(q * 65535.0));
        const char b[2] = {static_cast<char>(u >> 8), static_cast<char>(u & 0xff)};
        out.write(b, 2);
    }
    if (!out) throw FormatError(FormatError::Kind::Io, "write failed: " + path.string());
}

void write_image_csv(const fs::path& path, const std::vector<double>& values, std::size_t width, std::size_t height) {
    if (values.size() != width * height) throw UsageError("write_image_csv: size mismatch");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::Io, "cannot open for writing: " + path.string());
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) out << (x ? "," : "") << io::format_double(values[y * width + x]);
        out << '\n';
    }
}

std::vector<double> montage(const ImageSequence& seq, std::size_t& width, std::size_t& height) {
    width = seq.nx() * seq.nt();
    height = seq.ny();
    std::vector<double> v(width * height);
    for (std::size_t t = 0; t < seq.nt(); ++t)
        for (std::size_t y = 0; y < seq.ny(); ++y)
            for (std::size_t x = 0; x < seq.nx(); ++x) v[y * width + t * seq.nx() + x] = std::abs(seq(x, y, t));
    return v;
}

// --- datasets -------------------------------------------------------------------------------

std::vector<fs::path> expand_dataset_dirs(const std::vector<fs::path>& dirs) {
    std::vector<fs::path> out;
    for (const auto& d : dirs) {
        if (fs::exists(d / "kspace.cseq")) {
            out.push_back(d);
            continue;
        }
        if (!fs::is_directory(d)) throw FormatError(FormatError::Kind::Io, "not a dataset directory: " + d.string());
        std::vector<fs::path> children;
        for (const auto& e : fs::directory_iterator(d))
            if (e.is_directory() && fs::exists(e.path() / "kspace.cseq")) children.push_back(e.path());
        if (children.empty()) throw FormatError(FormatError::Kind::Io, "no datasets under " + d.string());
        std::sort(children.begin(), children.end());
        out.insert(out.end(), children.begin(), children.end());
    }
    return out;
}

std::vector<Example> load_examples(const std::vector<fs::path>& dirs, const ProblemOptions& opts) {
    std::vector<Example> out;
    for (const auto& d : expand_dataset_dirs(dirs)) {
        auto [data, sens] = io::read_dataset(d);
        const ImageSequence truth = io::read_sequence(d / "truth.cseq");
        auto P = std::make_shared<const ReconProblem>(data, sens, opts);
        if (P->nx() != truth.nx() || P->ny() != truth.ny() || P->nt() != truth.nt())
            throw FormatError(FormatError::Kind::Syntax, "truth.cseq does not match the dataset in " + d.string());
        out.push_back({std::move(P), Casorati(to_casorati(truth))});
    }
    return out;
}

namespace {

// --- shared command plumbing -----------------------------------------------------------------

struct Common {
    std::string config;
    std::string out;
    std::map<std::string, std::string> cli; // setting key -> value from flags
};

void add_setting(CLI::App* app, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(
        flag, [&c, key](const std::string& v) { c.cli[key] = v; }, help);
}

Settings resolve(const Common& c) {
    Settings s;
    if (const char* env = std::getenv("LPS_SEED"); env && *env) s.set("seed", env, Source::Env);
    if (!c.config.empty()) s.load(read_config(c.config), Source::Config);
    for (const auto& [k, v] : c.cli) s.set(k, v, Source::Cli);
    set_threads(static_cast<int>(s.count("threads")));
    return s;
}

fs::path out_dir(const Common& c) {
    if (c.out.empty()) throw UsageError("--out is required");
    fs::create_directories(c.out);
    return c.out;
}

void finish(const fs::path& dir, const std::string& command, const Settings& s, io::Manifest extra) {
    io::Manifest m{{"run.command", command}};
    m.insert(m.end(), extra.begin(), extra.end());
    const auto base = s.manifest();
    m.insert(m.end(), base.begin(), base.end());
    io::write_manifest(dir / "manifest.txt", m);
}

PhantomSpec phantom_from(const Settings& s, double dt, std::uint64_t seed) {
    PhantomSpec spec = PhantomSpec::desk(s.count("phantom.nx"), s.count("phantom.ny"), s.count("phantom.nt"), dt, seed,
                                         s.number("phantom.intensity_scale"));
    spec.signal.mode = parse_signal_mode(s.get("phantom.signal"));
    spec.signal.TR = s.number("acquisition.tr");
    spec.signal.flip_deg = s.number("acquisition.flip_deg");
    return spec;
}

AcquisitionConfig acquisition_from(const Settings& s, std::uint64_t seed) {
    AcquisitionConfig a;
    a.ncoils = s.count("acquisition.ncoils");
    a.nread = s.count("acquisition.nread");
    a.spokes_per_frame = s.count("acquisition.spokes_per_frame");
    a.decimation = s.count("acquisition.decimation");
    a.TR = s.number("acquisition.tr");
    a.flip_deg = s.number("acquisition.flip_deg");
    a.TE = s.number("acquisition.te");
    a.noise_sigma = s.number("acquisition.noise_sigma");
    a.truth_iterations = s.count("acquisition.truth_iterations");
    a.seed = seed;
    return a;
}

TrainConfig train_from(const Settings& s) {
    TrainConfig t;
    t.epochs = s.count("train.epochs");
    t.learning_rate = s.number("train.learning_rate");
    t.loss_fraction = s.number("train.loss_fraction");
    t.batch_size = s.count("train.batch_size");
    t.backend = parse_backend(s.get("train.backend"));
    t.seed = s.u64("seed");
    return t;
}

SolveConfig solve_from(const Settings& s) {
    SolveConfig c;
    c.lambda_L = s.number("solver.lambda_l");
    c.lambda_S = s.number("solver.lambda_s");
    c.max_iter = s.count("solver.iterations");
    if (const double tol = s.number("solver.stop_tol"); tol > 0) c.stop_tol = tol;
    return c;
}

std::string manifest_value(const io::Manifest& m, const std::string& key) {
    for (const auto& [k, v] : m)
        if (k == key) return v;
    throw FormatError(FormatError::Kind::Syntax, "manifest has no '" + key + "' entry");
}

void write_recon(const fs::path& dir, const Casorati& L, const Casorati& S, std::size_t nx, std::size_t ny) {
    const ImageSequence x = from_casorati(L + S, nx, ny);
    io::write_sequence(dir / "recon.cseq", x);
    io::write_sequence(dir / "lowrank.cseq", from_casorati(L, nx, ny));
    io::write_sequence(dir / "sparse.cseq", from_casorati(S, nx, ny));
    std::size_t w = 0, h = 0;
    const auto img = montage(x, w, h);
    write_pgm(dir / "preview.pgm", img, w, h);
    write_image_csv(dir / "preview.csv", img, w, h);
}

// --- commands -------------------------------------------------------------------------------

int cmd_simulate(const Common& c, std::ostream& out) {
    const Settings s = resolve(c);
    const fs::path dir = out_dir(c);
    const std::uint64_t seed = s.u64("seed");
    const std::size_t count = s.count("acquisition.count");
    if (count == 0) throw UsageError("acquisition.count must be >= 1");
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t si = substream(seed, 0x736571, i);
        const AcquisitionConfig acq = acquisition_from(s, si);
        const PhantomSpec spec = phantom_from(s, acq.frame_period(), si);
        Simulation sim = simulate_dataset(spec, acq);
        char name[32];
        std::snprintf(name, sizeof name, "seq_%03zu", i);
        write_simulation(dir / name, sim);
        std::size_t w = 0, h = 0;
        const auto img = montage(sim.truth, w, h);
        write_pgm(dir / name / "truth.pgm", img, w, h);
    }
    finish(dir, "simulate", s, {{"run.count", std::to_string(count)}});
    out << "wrote " << count << " sequence(s) to " << dir.string() << '\n';
    return kOk;
}

int cmd_reconstruct(const Common& c, const std::string& data, const std::string& mode, const std::string& params,
                    std::ostream& out) {
    const Settings s = resolve(c);
    const fs::path dir = out_dir(c);
    auto [ds, sens] = io::read_dataset(data);
    const ReconProblem P(ds, sens);
    Casorati L, S;
    io::Manifest extra{{"run.data", data}, {"run.mode", mode}};
    if (mode == "baseline") {
        const Reconstruction r = cpa_solve(P, solve_from(s));
        L = r.L;
        S = r.S;
        extra.emplace_back("run.iterations", std::to_string(r.iterations));
    } else if (mode == "unfolded") {
        if (params.empty()) throw UsageError("--params is required for --mode unfolded");
        const UnfoldedModel m = read_params(params);
        ForwardResult fw = forward(m, P);
        L = std::move(fw.L);
        S = std::move(fw.S);
        extra.emplace_back("run.params", params);
    } else {
        throw UsageError("--mode must be baseline or unfolded");
    }
    write_recon(dir, L, S, P.nx(), P.ny());
    if (fs::exists(fs::path(data) / "truth.cseq")) {
        const ImageSequence truth = io::read_sequence(fs::path(data) / "truth.cseq");
        const double e = mean_abs_error(L + S, Casorati(to_casorati(truth)));
        extra.emplace_back("run.mae", io::format_double(e));
        out << "mae = " << io::format_double(e) << '\n';
    }
    finish(dir, "reconstruct", s, extra);
    return kOk;
}

int cmd_grid_search(const Common& c, const std::vector<std::string>& data, std::ostream& out) {
    const Settings s = resolve(c);
    const fs::path dir = out_dir(c);
    std::vector<fs::path> dirs(data.begin(), data.end());
    const auto train = load_examples(dirs);
    const auto gl = s.list("grid.lambda_l"), gs = s.list("grid.lambda_s");
    const GridSearchResult g = grid_search(train, gl, gs, solve_from(s));
    std::ofstream csv(dir / "grid.csv", std::ios::trunc);
    csv << "lambda_l,lambda_s,mae\n";
    for (std::size_t i = 0; i < gl.size(); ++i)
        for (std::size_t j = 0; j < gs.size(); ++j)
            csv << io::format_double(gl[i]) << ',' << io::format_double(gs[j]) << ',' << io::format_double(g.mae[i][j]) << '\n';
    csv.close();
    finish(dir, "grid-search", s,
           {{"run.best_lambda_l", io::format_double(g.lambda_L)},
            {"run.best_lambda_s", io::format_double(g.lambda_S)},
            {"run.best_mae", io::format_double(g.best_mae)}});
    out << "best lambda_l = " << io::format_double(g.lambda_L) << ", lambda_s = " << io::format_double(g.lambda_S)
        << ", mae = " << io::format_double(g.best_mae) << '\n';
    return kOk;
}

int cmd_train(const Common& c, const std::vector<std::string>& data, std::ostream& out) {
    const Settings s = resolve(c);
    const fs::path dir = out_dir(c);
    std::vector<fs::path> dirs(data.begin(), data.end());
    const auto train = load_examples(dirs);
    const UnfoldedModel init =
        UnfoldedModel::make(parse_activation(s.get("train.activation")), s.flag("train.tied"), s.count("train.layers"),
                            s.number("solver.lambda_l"), s.number("solver.lambda_s"));
    const TrainResult r = lps::train(init, train, train_from(s));
    write_params(dir / "params.csv", r.model);
    std::ofstream h(dir / "history.csv", std::ios::trunc);
    h << "epoch,train_loss\n";
    h << "0," << io::format_double(r.initial_loss) << '\n';
    for (std::size_t e = 0; e < r.history.size(); ++e) h << e + 1 << ',' << io::format_double(r.history[e]) << '\n';
    h.close();
    finish(dir, "train", s,
           {{"run.initial_loss", io::format_double(r.initial_loss)},
            {"run.final_loss", io::format_double(r.history.empty() ? r.initial_loss : r.history.back())},
            {"run.svd_fallbacks", std::to_string(r.fallbacks)}});
    out << "trained " << r.model.parameter_count() << " parameters, loss "
        << io::format_double(r.initial_loss) << " -> "
        << io::format_double(r.history.empty() ? r.initial_loss : r.history.back()) << '\n';
    return kOk;
}

int cmd_fit_perfusion(const Common& c, const std::string& seq_path, const std::string& data, std::ostream& out) {
    const Settings s = resolve(c);
    const fs::path dir = out_dir(c);
    const ImageSequence seq = io::read_sequence(seq_path);
    const Simulation sim = read_simulation(data);
    const double dt = std::stod(manifest_value(sim.manifest, "dt"));
    const double onset = std::stod(manifest_value(sim.manifest, "aif_t0"));
    FitConfig fc;
    fc.max_iter = s.count("perfusion.max_iter");
    fc.step_tol = s.number("perfusion.step_tol");
    fc.retry = s.flag("perfusion.retry");
    fc.signal.mode = parse_signal_mode(manifest_value(sim.manifest, "signal_mode"));
    fc.signal.gain = std::stod(manifest_value(sim.manifest, "signal_gain"));
    fc.signal.TR = std::stod(manifest_value(sim.manifest, "TR"));
    fc.signal.flip_deg = std::stod(manifest_value(sim.manifest, "flip_deg"));
    const PerfusionMaps maps = fit_maps(seq, sim.masks, sim.aif, dt, fc, onset);
    io::write_array(dir / "maps.rseq", maps_to_raw(maps));
    for (MapParam p : map_order()) {
        const std::string name(to_string(p));
        write_pgm(dir / (name + ".pgm"), field(maps, p), maps.nx, maps.ny);
        write_image_csv(dir / (name + ".csv"), field(maps, p), maps.nx, maps.ny);
    }
    std::size_t fitted = 0, converged = 0;
    for (std::size_t i = 0; i < maps.fitted.size(); ++i) {
        fitted += maps.fitted[i];
        converged += maps.converged[i];
    }
    finish(dir, "fit-perfusion", s,
           {{"run.seq", seq_path},
            {"run.data", data},
            {"run.fit_signal", "magnitude"},
            {"run.concentration", std::string(to_string(fc.signal.mode))},
            {"run.fitted", std::to_string(fitted)},
            {"run.converged", std::to_string(converged)}});
    out << "fitted " << fitted << " pixels, " << converged << " converged\n";
    return kOk;
}

int cmd_evaluate(const Common& c, const std::string& est, const std::string& ref, const std::string& maps_est,
                 const std::string& maps_ref, const std::string& maps_other, const std::string& data,
                 std::ostream& out) {
    const Settings s = resolve(c);
    io::Manifest extra;
    if (!est.empty() || !ref.empty()) {
        if (est.empty() || ref.empty()) throw UsageError("--est and --ref go together");
        const double e = mae(io::read_sequence(est), io::read_sequence(ref));
        out << "mae = " << io::format_double(e) << '\n';
        extra.emplace_back("run.mae", io::format_double(e));
    }
    std::string report_csv, diff_csv;
    if (!maps_est.empty()) {
        if (maps_ref.empty() || data.empty()) throw UsageError("--maps-est needs --maps-ref and --data");
        const Simulation sim = read_simulation(data);
        const PerfusionMaps a = maps_from_raw(io::read_array(maps_est));
        const PerfusionMaps r = maps_from_raw(io::read_array(maps_ref));
        const RoiReport rep = roi_relative_error(a, r, sim.masks);
        report_csv = rep.csv();
        out << report_csv;
        if (!maps_other.empty()) {
            const RoiReport other = roi_relative_error(maps_from_raw(io::read_array(maps_other)), r, sim.masks);
            diff_csv = difference(rep, other).csv();
        }
    }
    if (!c.out.empty()) {
        const fs::path dir = out_dir(c);
        if (!report_csv.empty()) std::ofstream(dir / "roi_report.csv", std::ios::trunc) << report_csv;
        if (!diff_csv.empty()) std::ofstream(dir / "roi_difference.csv", std::ios::trunc) << diff_csv;
        finish(dir, "evaluate", s, extra);
    }
    return kOk;
}

int cmd_table1(const Common& c, const std::vector<std::string>& train_dirs, const std::vector<std::string>& test_dirs,
               std::ostream& out) {
    const Settings s = resolve(c);
    const fs::path dir = out_dir(c);
    const auto train = load_examples(std::vector<fs::path>(train_dirs.begin(), train_dirs.end()));
    const auto test = load_examples(std::vector<fs::path>(test_dirs.begin(), test_dirs.end()));
    auto rows = run_table1_matrix(table1_rows(train_from(s)), train, test);
    const std::string csv = table1_csv(rows);
    std::ofstream(dir / "table1.csv", std::ios::trunc) << csv;
    finish(dir, "table1", s, {});
    out << csv;
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Learned low-rank plus sparse DCE-MRI reconstruction"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    Common c;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", c.config, "key = value config file");
        sub->add_option("--out", c.out, "output directory");
        add_setting(sub, c, "--seed", "seed", "random seed (falls back to $LPS_SEED)");
        add_setting(sub, c, "--threads", "threads", "OpenMP worker cap, 0 = runtime default");
    };
    auto solver_flags = [&](CLI::App* sub) {
        add_setting(sub, c, "--lambda-l", "solver.lambda_l", "nuclear-norm weight / initial L threshold");
        add_setting(sub, c, "--lambda-s", "solver.lambda_s", "temporal-sparsity weight / initial S threshold");
        add_setting(sub, c, "--iters", "solver.iterations", "CPA iterations");
        add_setting(sub, c, "--stop-tol", "solver.stop_tol", "relative-change stop, 0 = off");
    };

    auto* sim = app.add_subcommand("simulate", "generate phantom datasets");
    common(sim);
    add_setting(sim, c, "--count", "acquisition.count", "number of sequences");
    add_setting(sim, c, "--nx", "phantom.nx", "image width");
    add_setting(sim, c, "--ny", "phantom.ny", "image height");
    add_setting(sim, c, "--nt", "phantom.nt", "frames");
    add_setting(sim, c, "--spokes-per-frame", "acquisition.spokes_per_frame", "spokes per frame after decimation");
    add_setting(sim, c, "--ncoils", "acquisition.ncoils", "receive coils");
    add_setting(sim, c, "--noise-sigma", "acquisition.noise_sigma", "k-space noise std (re and im)");

    std::string data, mode = "baseline", params;
    auto* rec = app.add_subcommand("reconstruct", "baseline CPA or unfolded reconstruction of one dataset");
    common(rec);
    solver_flags(rec);
    rec->add_option("--data", data, "dataset directory")->required();
    rec->add_option("--mode", mode, "baseline | unfolded");
    rec->add_option("--params", params, "trained parameter file (unfolded)");

    auto* inf = app.add_subcommand("infer", "run a trained network on one dataset");
    common(inf);
    inf->add_option("--data", data, "dataset directory")->required();
    inf->add_option("--params", params, "trained parameter file")->required();

    std::vector<std::string> datas, tests;
    auto* grid = app.add_subcommand("grid-search", "pick (lambda_L, lambda_S) by training-set MAE");
    common(grid);
    solver_flags(grid);
    grid->add_option("--data", datas, "training dataset directories")->required();
    add_setting(grid, c, "--grid-l", "grid.lambda_l", "comma-separated lambda_L values");
    add_setting(grid, c, "--grid-s", "grid.lambda_s", "comma-separated lambda_S values");

    auto* trn = app.add_subcommand("train", "train an unfolded network");
    common(trn);
    trn->add_option("--data", datas, "training dataset directories")->required();
    add_setting(trn, c, "--activation", "train.activation", "simple | soft | garrote");
    add_setting(trn, c, "--tied", "train.tied", "true | false");
    add_setting(trn, c, "--layers", "train.layers", "layers K");
    add_setting(trn, c, "--epochs", "train.epochs", "epochs");
    add_setting(trn, c, "--lr", "train.learning_rate", "Adam learning rate");
    add_setting(trn, c, "--loss-fraction", "train.loss_fraction", "leading fraction of frames in the loss");
    add_setting(trn, c, "--batch-size", "train.batch_size", "sequences per step");
    add_setting(trn, c, "--backend", "train.backend", "exact | frozen");
    add_setting(trn, c, "--init-l", "solver.lambda_l", "initial L threshold");
    add_setting(trn, c, "--init-s", "solver.lambda_s", "initial S threshold");

    std::string seq;
    auto* fit = app.add_subcommand("fit-perfusion", "pixel-wise ATH maps of a reconstruction");
    common(fit);
    fit->add_option("--seq", seq, "image sequence (.cseq)")->required();
    fit->add_option("--data", data, "simulation directory with masks, AIF and manifest")->required();

    std::string est, ref, maps_est, maps_ref, maps_other;
    auto* ev = app.add_subcommand("evaluate", "MAE between sequences and ROI errors between maps");
    common(ev);
    ev->add_option("--est", est, "estimated sequence");
    ev->add_option("--ref", ref, "reference sequence");
    ev->add_option("--maps-est", maps_est, "estimated maps.rseq");
    ev->add_option("--maps-ref", maps_ref, "reference maps.rseq");
    ev->add_option("--maps-other", maps_other, "second estimate for a percentage-point difference");
    ev->add_option("--data", data, "simulation directory with the ROI masks");

    auto* tab = app.add_subcommand("table1", "train and test the six experiment-matrix configurations");
    common(tab);
    tab->add_option("--train", datas, "training dataset directories")->required();
    tab->add_option("--test", tests, "test dataset directories")->required();
    add_setting(tab, c, "--epochs", "train.epochs", "epochs");
    add_setting(tab, c, "--lr", "train.learning_rate", "Adam learning rate");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        if (sim->parsed()) return cmd_simulate(c, out);
        if (rec->parsed()) return cmd_reconstruct(c, data, mode, params, out);
        if (inf->parsed()) return cmd_reconstruct(c, data, "unfolded", params, out);
        if (grid->parsed()) return cmd_grid_search(c, datas, out);
        if (trn->parsed()) return cmd_train(c, datas, out);
        if (fit->parsed()) return cmd_fit_perfusion(c, seq, data, out);
        if (ev->parsed()) return cmd_evaluate(c, est, ref, maps_est, maps_ref, maps_other, data, out);
        if (tab->parsed()) return cmd_table1(c, datas, tests, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return kData;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kData;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kNumerical;
    }
    return kUsage;
}

} // namespace lps::cli
