#include "lps/cli.hpp"
#include "lps/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lps;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int rc = cli::run(args, o, e);
    if (out) *out = o.str() + e.str();
    return rc;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void check_same_tree(const fs::path& a, const fs::path& b) {
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), a);
        CAPTURE(rel.string());
        REQUIRE(fs::exists(b / rel));
        CHECK(slurp(e.path()) == slurp(b / rel));
        ++n;
    }
    CHECK(n > 0);
}

const std::vector<std::string> kSmall{"--nx", "16", "--ny", "16", "--nt", "8", "--seed", "4"};

} // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run({}) == cli::kUsage);
    CHECK(run({"frobnicate"}) == cli::kUsage);
    CHECK(run({"reconstruct", "--out", "x"}) == cli::kUsage);
    std::string out;
    CHECK(run({"--help"}, &out) == cli::kOk);
    CHECK(out.find("simulate") != std::string::npos);
}

TEST_CASE("missing or malformed data exits with code 2") {
    const fs::path dir = fs::temp_directory_path() / "lps_cli_bad";
    fs::create_directories(dir);
    std::ofstream(dir / "kspace.cseq") << "not an array";
    CHECK(run({"reconstruct", "--data", (dir / "missing").string(), "--out", (dir / "o").string()}) == cli::kData);
    CHECK(run({"reconstruct", "--data", dir.string(), "--out", (dir / "o").string()}) == cli::kData);
    std::ofstream(dir / "bad.cfg") << "seed 3\n";
    CHECK(run({"simulate", "--config", (dir / "bad.cfg").string(), "--out", (dir / "s").string()}) == cli::kData);
    fs::remove_all(dir);
}

TEST_CASE("pipeline stages are byte-identical on re-run") {
    const fs::path root = fs::temp_directory_path() / "lps_cli_det";
    fs::remove_all(root);
    for (const char* run_name : {"a", "b"}) {
        const fs::path d = root / run_name;
        auto sim = kSmall;
        sim.insert(sim.begin(), {"simulate", "--out", (d / "sim").string(), "--count", "2"});
        REQUIRE(run(sim) == cli::kOk);
        const std::string s0 = (d / "sim" / "seq_000").string();
        REQUIRE(run({"reconstruct", "--data", s0, "--out", (d / "rec").string(), "--iters", "20"}) == cli::kOk);
        REQUIRE(run({"train", "--data", (d / "sim").string(), "--out", (d / "tr").string(), "--layers", "3",
                     "--epochs", "2", "--activation", "soft", "--tied", "false", "--lr", "0.001"}) == cli::kOk);
        REQUIRE(run({"infer", "--data", s0, "--params", (d / "tr" / "params.csv").string(), "--out",
                     (d / "inf").string()}) == cli::kOk);
        REQUIRE(run({"fit-perfusion", "--seq", (d / "rec" / "recon.cseq").string(), "--data", s0, "--out",
                     (d / "fit").string()}) == cli::kOk);
        REQUIRE(run({"evaluate", "--maps-est", (d / "fit" / "maps.rseq").string(), "--maps-ref",
                     (d / "sim" / "seq_000" / "maps.rseq").string(), "--data", s0, "--out", (d / "ev").string()}) ==
                cli::kOk);
    }
    // Manifests record the output paths, so compare with the run directory name masked.
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), root / "a");
        std::string x = slurp(e.path()), y = slurp(root / "b" / rel);
        if (rel.filename() == "manifest.txt") {
            for (std::string* s : {&x, &y})
                for (const std::string& d : {(root / "a").string(), (root / "b").string()})
                    for (std::size_t p; (p = s->find(d)) != std::string::npos;) s->replace(p, d.size(), "RUN");
        }
        CAPTURE(rel.string());
        CHECK(x == y);
    }
    // Same output path twice: identical bytes without masking.
    const fs::path again = root / "again";
    auto sim = kSmall;
    sim.insert(sim.begin(), {"simulate", "--out", (again / "x").string()});
    REQUIRE(run(sim) == cli::kOk);
    fs::rename(again / "x", again / "first");
    REQUIRE(run(sim) == cli::kOk);
    check_same_tree(again / "first", again / "x");
    fs::remove_all(root);
}

TEST_CASE("manifests record settings provenance") {
    const fs::path root = fs::temp_directory_path() / "lps_cli_manifest";
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "c.cfg") << "[phantom]\nnx = 16\nny = 16\nnt = 8\n";
    setenv("LPS_SEED", "12", 1);
    REQUIRE(run({"simulate", "--config", (root / "c.cfg").string(), "--out", (root / "s").string()}) == cli::kOk);
    unsetenv("LPS_SEED");
    const auto m = io::read_manifest(root / "s" / "manifest.txt");
    auto get = [&](const std::string& k) {
        for (const auto& [key, v] : m)
            if (key == k) return v;
        return std::string("<missing>");
    };
    CHECK(get("seed") == "12");
    CHECK(get("source.seed") == "env");
    CHECK(get("phantom.nx") == "16");
    CHECK(get("source.phantom.nx") == "config");
    CHECK(get("source.solver.lambda_l") == "<missing>");
    fs::remove_all(root);
}

TEST_CASE("experiment rows and table schema") {
    const auto rows = cli::table1_rows(TrainConfig{});
    REQUIRE(rows.size() == 6);
    CHECK(rows[1].activation == ActivationMode::Simple);
    CHECK_FALSE(rows[1].tied);
    CHECK(rows[2].init_lambda_L == 0.0234);
    CHECK(rows[5].activation == ActivationMode::Garrote);
    CHECK(rows[5].init_lambda_S == 1e-4);
    std::vector<cli::Table1Row> t;
    for (const auto& r : rows) {
        const auto m = UnfoldedModel::make(r.activation, r.tied, r.layers, r.init_lambda_L, r.init_lambda_S);
        t.push_back({r, m.parameter_count(), 0.0, 0.0});
    }
    const std::string csv = cli::table1_csv(t);
    CHECK(csv.rfind(std::string(cli::kTable1Header) + "\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    CHECK(csv.find("#4,soft,no,100,400,") != std::string::npos);
    CHECK(csv.find("#1,simple,yes,100,2,") != std::string::npos);
    const auto back = cli::ExperimentConfig::from_manifest(rows[3].to_manifest());
    CHECK(back.activation == rows[3].activation);
    CHECK(back.tied == rows[3].tied);
    CHECK(back.init_lambda_S == rows[3].init_lambda_S);
}

TEST_CASE("PGM output header and scaling") {
    const fs::path p = fs::temp_directory_path() / "lps_test.pgm";
    cli::write_pgm(p, {0.0, 0.5, 1.0, 2.0}, 2, 2, 1.0);
    const std::string s = slurp(p);
    REQUIRE(s.rfind("P5\n2 2\n65535\n", 0) == 0);
    const auto* px = reinterpret_cast<const unsigned char*>(s.data() + 13);
    CHECK(px[0] == 0);
    CHECK((px[2] << 8 | px[3]) == 32768);
    CHECK((px[6] << 8 | px[7]) == 65535);
    fs::remove(p);
}
