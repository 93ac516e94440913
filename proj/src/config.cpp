#include "lcgan/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lcgan/errors.hpp"

namespace lcgan {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Splits a bracketed array body on commas, respecting quoted strings.
std::vector<std::string> split_array(const std::string& body, const std::string& where) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : body) {
        if (c == '"') {
            quoted = !quoted;
            cur += c;
        } else if (c == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw ValueError("unterminated string in " + where);
    const std::string last = trim(cur);
    if (!last.empty()) out.push_back(last);
    return out;
}

std::string unquote(const std::string& tok, const std::string& where) {
    if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') return tok.substr(1, tok.size() - 2);
    if (!tok.empty() && tok.front() == '"') throw ValueError("unterminated string in " + where);
    return tok;
}

}  // namespace

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path);
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
    ConfigFile cf;
    cf.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        // strip comments outside quotes
        std::string stripped;
        bool quoted = false;
        for (char c : line) {
            if (c == '"') quoted = !quoted;
            if (c == '#' && !quoted) break;
            stripped += c;
        }
        stripped = trim(stripped);
        if (stripped.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno);
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos) throw ValueError("expected 'key = value' at " + where);
        const std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw ValueError("empty key at " + where);
        if (value.empty()) throw ValueError("empty value at " + where);
        if (value.front() == '[') {
            if (value.back() != ']') throw ValueError("unterminated array at " + where);
            cf.values_[key] = split_array(value.substr(1, value.size() - 2), where);
            cf.is_array_[key] = true;
        } else {
            cf.values_[key] = {value};
            cf.is_array_[key] = false;
        }
    }
    return cf;
}

std::vector<std::string> ConfigFile::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

const std::vector<std::string>& ConfigFile::raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValueError("missing config key '" + key + "' in " + origin_);
    return it->second;
}

std::string ConfigFile::str(const std::string& key) const {
    const auto& v = raw(key);
    return unquote(v.at(0), origin_);
}

double ConfigFile::number(const std::string& key) const {
    const auto& v = raw(key);
    char* end = nullptr;
    const double d = std::strtod(v.at(0).c_str(), &end);
    if (end == v.at(0).c_str() || *end != '\0')
        throw ValueError("config key '" + key + "' is not a number: " + v.at(0));
    return d;
}

int64_t ConfigFile::integer(const std::string& key) const { return static_cast<int64_t>(number(key)); }

bool ConfigFile::boolean(const std::string& key) const {
    const std::string& v = raw(key).at(0);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ValueError("config key '" + key + "' is not a boolean: " + v);
}

std::vector<std::string> ConfigFile::str_list(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& t : raw(key)) out.push_back(unquote(t, origin_));
    return out;
}

std::vector<double> ConfigFile::number_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& t : raw(key)) {
        char* end = nullptr;
        const double d = std::strtod(t.c_str(), &end);
        if (end == t.c_str() || *end != '\0')
            throw ValueError("config key '" + key + "' has a non-numeric element: " + t);
        out.push_back(d);
    }
    return out;
}

std::vector<int> ConfigFile::int_list(const std::string& key) const {
    std::vector<int> out;
    for (double d : number_list(key)) out.push_back(static_cast<int>(d));
    return out;
}

std::vector<uint64_t> ConfigFile::uint_list(const std::string& key) const {
    std::vector<uint64_t> out;
    for (double d : number_list(key)) out.push_back(static_cast<uint64_t>(d));
    return out;
}

}  // namespace lcgan
