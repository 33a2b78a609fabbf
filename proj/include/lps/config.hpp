#pragma once

// Run settings: built-in defaults, overridden by a `key = value` config file
// ([section] headers prefix keys as section.key, # starts a comment), overridden by
// command-line flags.

#include "lps/io.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lps {

enum class Source { Default, Env, Config, Cli };
std::string_view to_string(Source s);

/// Flattened `section.key -> value` pairs in file order. Throws FormatError(Syntax) with the
/// line number on malformed lines.
io::Manifest parse_config(std::string_view text);
io::Manifest read_config(const std::filesystem::path& path);

class Settings {
public:
    /// All known keys at their defaults.
    Settings();

    /// Applies a config file. Unknown keys are usage errors, except `run.*` and `source.*`
    /// entries so that manifests can be fed back in.
    void load(const io::Manifest& entries, Source src = Source::Config);
    void set(const std::string& key, const std::string& value, Source src);

    const std::string& get(const std::string& key) const;
    double number(const std::string& key) const;
    std::size_t count(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> list(const std::string& key) const;
    Source source(const std::string& key) const;

    /// Every setting, then `source.<key>` for those not at their default.
    io::Manifest manifest() const;

private:
    struct Entry {
        std::string value;
        Source source = Source::Default;
    };
    std::vector<std::string> order_;
    std::map<std::string, Entry> values_;
};

} // namespace lps
