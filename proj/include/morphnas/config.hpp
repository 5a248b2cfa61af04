// Line-based "key = value" configuration files with a closed key set.
#pragma once

#include <map>
#include <set>
#include <string>

namespace morphnas {

class RunConfig {
public:
    // Parses the file, rejecting keys outside `allowed`. '#' starts a comment.
    static RunConfig from_file(const std::string& path, const std::set<std::string>& allowed);
    static RunConfig from_string(const std::string& text, const std::set<std::string>& allowed);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;

    // Fully resolved "key = value" lines, sorted, for run logs.
    std::string resolved() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace morphnas
