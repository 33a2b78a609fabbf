#pragma once

// CSEQ/RSEQ array files.
//
//   magic   4 bytes  "CSEQ" (complex) or "RSEQ" (real)
//   version u16      = 1
//   ndim    u16
//   dims    u64 x ndim
//   payload binary32, row-major with the last dimension fastest;
//           complex payloads interleave (re, im)
//
// All integers and floats are little-endian.

#include "lps/core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace lps::io {

inline constexpr std::uint16_t kFormatVersion = 1;

/// Exact in-memory image of a file: dims and binary32 payload.
struct RawArray {
    bool is_complex = true;
    std::vector<std::uint64_t> dims;
    std::vector<float> payload; // 2 floats per element when complex

    std::uint64_t elements() const;
};

void write_array(const std::filesystem::path& path, const RawArray& a);
RawArray read_array(const std::filesystem::path& path);

std::vector<std::uint8_t> encode(const RawArray& a);
RawArray decode(const std::vector<std::uint8_t>& bytes);

/// Stored with dims (nt, ny, nx).
RawArray to_raw(const ImageSequence& seq);
ImageSequence sequence_from_raw(const RawArray& a);

RawArray real_array(std::vector<std::uint64_t> dims, const std::vector<double>& values);
std::vector<double> real_values(const RawArray& a);

void write_sequence(const std::filesystem::path& path, const ImageSequence& seq);
ImageSequence read_sequence(const std::filesystem::path& path);

/// Dataset bundle directory: kspace.cseq (coil, spoke, read), traj.rseq (spoke, read, 2),
/// bins.rseq (spoke), sens.cseq (coil, ny, nx).
void write_dataset(const std::filesystem::path& dir, const KSpaceDataset& data,
                   const CoilSensitivities& sens);
std::pair<KSpaceDataset, CoilSensitivities> read_dataset(const std::filesystem::path& dir);

/// Plain-text `key = value` lines in insertion order.
using Manifest = std::vector<std::pair<std::string, std::string>>;
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

/// Shortest round-tripping decimal form (17 significant digits).
std::string format_double(double v);

} // namespace lps::io
