#include "gpas/kv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gpas/errors.hpp"

namespace gpas::kv {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace

Pairs parse(std::istream &in) {
    Pairs out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
        std::string key = trim(std::string_view(t).substr(0, eq));
        if (key.empty()) throw ParseError("empty key", lineno);
        out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
    }
    return out;
}

Pairs parse_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file " + path);
    return parse(in);
}

std::string format(const Pairs &pairs) {
    std::string out;
    for (const auto &[k, v] : pairs) out += k + " = " + v + "\n";
    return out;
}

std::string to_text(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string to_text(bool v) { return v ? "true" : "false"; }

std::string to_text(std::size_t v) { return std::to_string(v); }

double to_double(std::string_view key, std::string_view text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(std::string(text), &used);
        if (used == text.size()) return v;
    } catch (const std::exception &) {
    }
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(text) + "'");
}

std::uint64_t to_u64(std::string_view key, std::string_view text) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        throw ConfigError("'" + std::string(key) + "' expects a nonnegative integer, got '" + std::string(text) + "'");
    }
    return v;
}

std::size_t to_size(std::string_view key, std::string_view text) { return static_cast<std::size_t>(to_u64(key, text)); }

bool to_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError("'" + std::string(key) + "' expects true/false, got '" + std::string(text) + "'");
}

} // namespace gpas::kv
