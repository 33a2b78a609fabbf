#include "fixtures.hpp"
#include "lps/config.hpp"
#include "lps/io.hpp"
#include "lps/metrics.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace lps;
namespace fs = std::filesystem;

TEST_CASE("image sequence invariants") {
    CHECK_THROWS_AS(ImageSequence({2, 2, 1}, std::vector<Complex>(3)), UsageError);
    CHECK_THROWS_AS(ImageSequence({1, 1, 1}, {Complex(std::nan(""), 0)}), NumericalError);
    const ImageSequence s({2, 3, 2}, [] {
        std::vector<Complex> v(12);
        for (std::size_t i = 0; i < 12; ++i) v[i] = Complex(double(i), -double(i));
        return v;
    }());
    CHECK(s(1, 2, 1) == Complex(11, -11));
    const Casorati m = to_casorati(s);
    CHECK(m(5, 1) == Complex(11, -11));
    CHECK(mae(from_casorati(m, 2, 3), s) == 0.0);
}

TEST_CASE("array encoding layout") {
    io::RawArray a{true, {1, 2}, {1.0f, 2.0f, 3.0f, 4.0f}};
    const auto b = io::encode(a);
    REQUIRE(b.size() == 4 + 2 + 2 + 16 + 16);
    CHECK(std::memcmp(b.data(), "CSEQ", 4) == 0);
    CHECK(b[4] == 1);
    CHECK(b[5] == 0);
    CHECK(b[6] == 2);
    CHECK(b[8] == 1);
    CHECK(b[16] == 2);
    float f;
    std::memcpy(&f, b.data() + 24 + 8, 4);
    CHECK(f == 3.0f);
    const io::RawArray back = io::decode(b);
    CHECK(back.dims == a.dims);
    CHECK(back.payload == a.payload);
}

TEST_CASE("decoding rejects malformed input") {
    io::RawArray a{false, {3}, {1, 2, 3}};
    auto b = io::encode(a);
    auto kind = [](const std::vector<std::uint8_t>& bytes) {
        try {
            io::decode(bytes);
        } catch (const FormatError& e) {
            return e.kind();
        }
        return FormatError::Kind::Io;
    };
    auto bad = b;
    bad[0] = 'X';
    CHECK(kind(bad) == FormatError::Kind::BadMagic);
    bad = b;
    bad[4] = 2;
    CHECK(kind(bad) == FormatError::Kind::UnsupportedVersion);
    bad = b;
    bad.pop_back();
    CHECK(kind(bad) == FormatError::Kind::Truncated);
    bad = b;
    for (int i = 8; i < 16; ++i) bad[i] = 0xff;
    CHECK(kind(bad) == FormatError::Kind::DimensionOverflow);
    CHECK_THROWS_AS(io::read_array("/nonexistent/file.rseq"), FormatError);
}

TEST_CASE("sequence and manifest files round trip") {
    const fs::path dir = fs::temp_directory_path() / "lps_io_test";
    fs::create_directories(dir);
    std::vector<Complex> v(2 * 2 * 3);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = Complex(0.25 * double(i), 1.0 / 8.0);
    const ImageSequence s({2, 2, 3}, v);
    io::write_sequence(dir / "a.cseq", s);
    CHECK(mae(io::read_sequence(dir / "a.cseq"), s) == 0.0);
    const io::Manifest m{{"b", "1"}, {"a", "x y"}, {"c", io::format_double(0.1)}};
    io::write_manifest(dir / "m.txt", m);
    CHECK(io::read_manifest(dir / "m.txt") == m);
    CHECK(std::stod(io::format_double(0.1)) == 0.1);
    fs::remove_all(dir);
}

TEST_CASE("config parsing") {
    const auto m = parse_config("# top\nseed = 4\n[solver]\nlambda_l = 0.5  # trailing\n\n[train]\ntied=false\n");
    REQUIRE(m.size() == 3);
    CHECK(m[0] == std::pair<std::string, std::string>{"seed", "4"});
    CHECK(m[1] == std::pair<std::string, std::string>{"solver.lambda_l", "0.5"});
    CHECK(m[2] == std::pair<std::string, std::string>{"train.tied", "false"});
    try {
        parse_config("seed = 1\njunk\n");
        FAIL("expected a syntax error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("[bad\n"), FormatError);
}

TEST_CASE("settings precedence and provenance") {
    Settings s;
    CHECK(s.u64("seed") == 0);
    CHECK(s.source("seed") == Source::Default);
    s.set("seed", "5", Source::Env);
    s.load({{"seed", "6"}, {"solver.lambda_l", "0.1"}, {"run.command", "x"}}, Source::Config);
    CHECK(s.u64("seed") == 6);
    s.set("seed", "7", Source::Cli);
    s.set("seed", "8", Source::Config);
    CHECK(s.u64("seed") == 7);
    CHECK(s.source("seed") == Source::Cli);
    CHECK(s.number("solver.lambda_l") == 0.1);
    CHECK(s.list("grid.lambda_s").size() == 4);
    CHECK_THROWS_AS(s.set("nope", "1", Source::Cli), UsageError);
    s.set("train.tied", "maybe", Source::Cli);
    CHECK_THROWS_AS(s.flag("train.tied"), UsageError);
    const auto man = s.manifest();
    CHECK(std::find(man.begin(), man.end(), std::pair<std::string, std::string>{"source.seed", "cli"}) != man.end());
    Settings again;
    again.load(man);
    CHECK(again.u64("seed") == 7);
}
