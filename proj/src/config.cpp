#include "lps/config.hpp"

#include "lps/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace lps {

namespace {

struct Default {
    const char* key;
    const char* value;
};

// clang-format off
constexpr Default kDefaults[] = {
    {"seed", "0"},
    {"threads", "0"},
    {"phantom.nx", "32"},
    {"phantom.ny", "32"},
    {"phantom.nt", "64"},
    {"phantom.intensity_scale", "0.01"},
    {"phantom.signal", "linear"},
    {"acquisition.ncoils", "4"},
    {"acquisition.nread", "0"},
    {"acquisition.spokes_per_frame", "8"},
    {"acquisition.decimation", "16"},
    {"acquisition.tr", "0.0075"},
    {"acquisition.flip_deg", "20"},
    {"acquisition.te", "0.0016"},
    {"acquisition.noise_sigma", "0.001"},
    {"acquisition.truth_iterations", "300"},
    {"acquisition.count", "1"},
    {"solver.lambda_l", "0.0234"},
    {"solver.lambda_s", "1.6e-05"},
    {"solver.iterations", "100"},
    {"solver.stop_tol", "0"},
    {"grid.lambda_l", "0.01,0.0316,0.1,0.316,1"},
    {"grid.lambda_s", "0.0001,0.001,0.01,0.1"},
    {"train.activation", "simple"},
    {"train.tied", "true"},
    {"train.layers", "100"},
    {"train.epochs", "200"},
    {"train.learning_rate", "0.0002"},
    {"train.loss_fraction", "0.15"},
    {"train.batch_size", "1"},
    {"train.backend", "exact"},
    {"perfusion.max_iter", "200"},
    {"perfusion.step_tol", "1e-08"},
    {"perfusion.retry", "true"},
};
// clang-format on

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool ignorable(const std::string& key) { return key.starts_with("run.") || key.starts_with("source."); }

} // namespace

std::string_view to_string(Source s) {
    switch (s) {
    case Source::Default: return "default";
    case Source::Env: return "env";
    case Source::Config: return "config";
    case Source::Cli: return "cli";
    }
    return "?";
}

io::Manifest parse_config(std::string_view text) {
    io::Manifest out;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw FormatError(FormatError::Kind::Syntax, "config line " + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(FormatError::Kind::Syntax, "config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw FormatError(FormatError::Kind::Syntax, "config line " + std::to_string(lineno) + ": empty key");
        out.emplace_back(section.empty() ? key : section + "." + key, trim(line.substr(eq + 1)));
    }
    return out;
}

io::Manifest read_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw FormatError(FormatError::Kind::Io, "cannot open config: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

Settings::Settings() {
    for (const auto& d : kDefaults) {
        order_.emplace_back(d.key);
        values_[d.key] = {d.value, Source::Default};
    }
}

void Settings::load(const io::Manifest& entries, Source src) {
    for (const auto& [k, v] : entries) {
        if (ignorable(k)) continue;
        set(k, v, src);
    }
}

void Settings::set(const std::string& key, const std::string& value, Source src) {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown setting '" + key + "'");
    if (src < it->second.source) return;
    it->second = {value, src};
}

const std::string& Settings::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown setting '" + key + "'");
    return it->second.value;
}

double Settings::number(const std::string& key) const {
    const std::string& s = get(key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("setting '" + key + "' is not a number: '" + s + "'");
    }
}

std::uint64_t Settings::u64(const std::string& key) const {
    const std::string& s = get(key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw UsageError("setting '" + key + "' is not a non-negative integer: '" + s + "'");
    return v;
}

std::size_t Settings::count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

bool Settings::flag(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw UsageError("setting '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<double> Settings::list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(trim(item)));
        } catch (const std::exception&) {
            throw UsageError("setting '" + key + "' has a bad list entry: '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError("setting '" + key + "' is an empty list");
    return out;
}

Source Settings::source(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown setting '" + key + "'");
    return it->second.source;
}

io::Manifest Settings::manifest() const {
    io::Manifest m;
    for (const auto& k : order_) m.emplace_back(k, values_.at(k).value);
    for (const auto& k : order_)
        if (values_.at(k).source != Source::Default) m.emplace_back("source." + k, std::string(to_string(values_.at(k).source)));
    return m;
}

} // namespace lps
