#include "lps/io.hpp"

#include "lps/error.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace lps::io {

namespace {

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 40;
constexpr std::size_t kMaxDims = 16;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
    const auto v = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

    bool has(std::size_t n) const { return b_.size() - pos_ >= n; }
    std::size_t remaining() const { return b_.size() - pos_; }

    std::uint16_t u16() {
        need(2, "header");
        const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint64_t u64() {
        need(8, "header");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_ + i]} << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_ + i]} << (8 * i);
        pos_ += 4;
        return std::bit_cast<float>(v);
    }
    std::string magic() {
        need(4, "magic");
        std::string m(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      b_.begin() + static_cast<std::ptrdiff_t>(pos_ + 4));
        pos_ += 4;
        return m;
    }

private:
    void need(std::size_t n, const char* what) const {
        if (!has(n))
            throw FormatError(FormatError::Kind::Truncated, std::string("truncated ") + what);
    }

    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

} // namespace

std::uint64_t RawArray::elements() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<std::uint8_t> encode(const RawArray& a) {
    const std::uint64_t per = a.is_complex ? 2 : 1;
    if (a.dims.size() > kMaxDims)
        throw FormatError(FormatError::Kind::DimensionOverflow, "too many dimensions");
    if (a.payload.size() != a.elements() * per) throw UsageError("encode: payload does not match dims");
    std::vector<std::uint8_t> out;
    out.reserve(8 + 8 * a.dims.size() + 4 * a.payload.size());
    const char* magic = a.is_complex ? "CSEQ" : "RSEQ";
    out.insert(out.end(), magic, magic + 4);
    put_u16(out, kFormatVersion);
    put_u16(out, static_cast<std::uint16_t>(a.dims.size()));
    for (auto d : a.dims) put_u64(out, d);
    for (float f : a.payload) put_f32(out, f);
    return out;
}

RawArray decode(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    RawArray a;
    const std::string magic = r.magic();
    if (magic == "CSEQ")
        a.is_complex = true;
    else if (magic == "RSEQ")
        a.is_complex = false;
    else
        throw FormatError(FormatError::Kind::BadMagic, "bad magic bytes");
    const auto version = r.u16();
    if (version != kFormatVersion)
        throw FormatError(FormatError::Kind::UnsupportedVersion,
                          "unsupported format version " + std::to_string(version));
    const auto ndim = r.u16();
    if (ndim > kMaxDims)
        throw FormatError(FormatError::Kind::DimensionOverflow, "too many dimensions");
    std::uint64_t n = 1;
    for (std::uint16_t i = 0; i < ndim; ++i) {
        const auto d = r.u64();
        if (d != 0 && n > kMaxElements / d)
            throw FormatError(FormatError::Kind::DimensionOverflow, "dimension product overflows");
        n *= d;
        a.dims.push_back(d);
    }
    const std::uint64_t floats = n * (a.is_complex ? 2 : 1);
    if (r.remaining() < floats * 4)
        throw FormatError(FormatError::Kind::Truncated, "truncated payload");
    if (r.remaining() > floats * 4)
        throw FormatError(FormatError::Kind::Syntax, "trailing bytes after payload");
    a.payload.resize(floats);
    for (auto& f : a.payload) f = r.f32();
    return a;
}

void write_array(const std::filesystem::path& path, const RawArray& a) {
    const auto bytes = encode(a);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::Io, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatError::Kind::Io, "write failed: " + path.string());
}

RawArray read_array(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::Io, "cannot open: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

RawArray to_raw(const ImageSequence& seq) {
    RawArray a;
    a.is_complex = true;
    a.dims = {seq.nt(), seq.ny(), seq.nx()};
    a.payload.reserve(2 * seq.values().size());
    for (const auto& z : seq.values()) {
        a.payload.push_back(static_cast<float>(z.real()));
        a.payload.push_back(static_cast<float>(z.imag()));
    }
    return a;
}

ImageSequence sequence_from_raw(const RawArray& a) {
    if (!a.is_complex || a.dims.size() != 3)
        throw FormatError(FormatError::Kind::Syntax, "expected a 3-D complex array (nt, ny, nx)");
    std::vector<Complex> v(a.elements());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = {a.payload[2 * i], a.payload[2 * i + 1]};
    return ImageSequence({a.dims[2], a.dims[1], a.dims[0]}, std::move(v));
}

RawArray real_array(std::vector<std::uint64_t> dims, const std::vector<double>& values) {
    RawArray a;
    a.is_complex = false;
    a.dims = std::move(dims);
    if (a.elements() != values.size()) throw UsageError("real_array: size mismatch");
    a.payload.assign(values.begin(), values.end());
    return a;
}

std::vector<double> real_values(const RawArray& a) {
    if (a.is_complex) throw FormatError(FormatError::Kind::Syntax, "expected a real (RSEQ) array");
    return {a.payload.begin(), a.payload.end()};
}

void write_sequence(const std::filesystem::path& path, const ImageSequence& seq) {
    write_array(path, to_raw(seq));
}

ImageSequence read_sequence(const std::filesystem::path& path) {
    return sequence_from_raw(read_array(path));
}

void write_dataset(const std::filesystem::path& dir, const KSpaceDataset& data,
                   const CoilSensitivities& sens) {
    std::filesystem::create_directories(dir);
    RawArray k;
    k.dims = {data.ncoils(), data.nspokes(), data.nread()};
    for (const auto& z : data.samples()) {
        k.payload.push_back(static_cast<float>(z.real()));
        k.payload.push_back(static_cast<float>(z.imag()));
    }
    write_array(dir / "kspace.cseq", k);

    std::vector<double> traj;
    traj.reserve(2 * data.traj().size());
    for (const auto& p : data.traj()) {
        traj.push_back(p.kx);
        traj.push_back(p.ky);
    }
    write_array(dir / "traj.rseq", real_array({data.nspokes(), data.nread(), 2}, traj));

    std::vector<double> bins(data.binning().begin(), data.binning().end());
    write_array(dir / "bins.rseq", real_array({data.nspokes()}, bins));

    RawArray s;
    s.dims = {sens.ncoils(), sens.ny(), sens.nx()};
    for (std::size_t c = 0; c < sens.ncoils(); ++c)
        for (Eigen::Index p = 0; p < sens.map(c).size(); ++p) {
            s.payload.push_back(static_cast<float>(sens.map(c)(p).real()));
            s.payload.push_back(static_cast<float>(sens.map(c)(p).imag()));
        }
    write_array(dir / "sens.cseq", s);
}

std::pair<KSpaceDataset, CoilSensitivities> read_dataset(const std::filesystem::path& dir) {
    const auto k = read_array(dir / "kspace.cseq");
    const auto t = read_array(dir / "traj.rseq");
    const auto b = read_array(dir / "bins.rseq");
    const auto s = read_array(dir / "sens.cseq");
    if (!k.is_complex || k.dims.size() != 3 || t.is_complex || t.dims.size() != 3 || t.dims[2] != 2 ||
        b.is_complex || b.dims.size() != 1 || !s.is_complex || s.dims.size() != 3)
        throw FormatError(FormatError::Kind::Syntax, "inconsistent dataset bundle in " + dir.string());
    if (t.dims[0] != k.dims[1] || t.dims[1] != k.dims[2] || b.dims[0] != k.dims[1] || s.dims[0] != k.dims[0])
        throw FormatError(FormatError::Kind::Syntax, "dataset bundle dimensions disagree");

    std::vector<Complex> samples(k.elements());
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = {k.payload[2 * i], k.payload[2 * i + 1]};
    std::vector<KPoint> traj(t.dims[0] * t.dims[1]);
    for (std::size_t i = 0; i < traj.size(); ++i) traj[i] = {t.payload[2 * i], t.payload[2 * i + 1]};
    std::vector<std::size_t> bins(b.dims[0]);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const float f = b.payload[i];
        if (!(f >= 0) || f != std::floor(f)) throw FormatError(FormatError::Kind::Syntax, "bad frame index");
        bins[i] = static_cast<std::size_t>(f);
    }
    const std::size_t npix = s.dims[1] * s.dims[2];
    std::vector<Eigen::VectorXcd> maps;
    for (std::size_t c = 0; c < s.dims[0]; ++c) {
        Eigen::VectorXcd m(static_cast<Eigen::Index>(npix));
        for (std::size_t p = 0; p < npix; ++p) {
            const std::size_t i = c * npix + p;
            m(static_cast<Eigen::Index>(p)) = {s.payload[2 * i], s.payload[2 * i + 1]};
        }
        maps.push_back(std::move(m));
    }
    return {KSpaceDataset(k.dims[0], k.dims[1], k.dims[2], std::move(samples), std::move(traj), std::move(bins)),
            CoilSensitivities(s.dims[2], s.dims[1], std::move(maps))};
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::Io, "cannot open for writing: " + path.string());
    for (const auto& [k, v] : m) out << k << " = " << v << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(FormatError::Kind::Io, "cannot open: " + path.string());
    Manifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw FormatError(FormatError::Kind::Syntax, "bad manifest line: " + line);
        m.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    return m;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace lps::io
