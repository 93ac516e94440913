#ifndef LCGAN_CONFIG_HPP
#define LCGAN_CONFIG_HPP

#include <map>
#include <string>
#include <vector>

namespace lcgan {

// Flat key/value config files: `key = value` lines, `#` comments, values
// are quoted strings, numbers, booleans or bracketed arrays of those.
class ConfigFile {
public:
    static ConfigFile load(const std::string& path);
    static ConfigFile parse(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::vector<std::string> keys() const;

    std::string str(const std::string& key) const;
    double number(const std::string& key) const;
    int64_t integer(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<std::string> str_list(const std::string& key) const;
    std::vector<double> number_list(const std::string& key) const;
    std::vector<int> int_list(const std::string& key) const;
    std::vector<uint64_t> uint_list(const std::string& key) const;

private:
    const std::vector<std::string>& raw(const std::string& key) const;
    // each key maps to its raw value tokens (one entry for scalars)
    std::map<std::string, std::vector<std::string>> values_;
    std::map<std::string, bool> is_array_;
    std::string origin_;
};

}  // namespace lcgan

#endif
