#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace spyflow {

inline constexpr const char* kToolVersion = "1.0.0";

/// Exit codes: 0 success, 1 usage error, 2 data or format error.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Resolved configuration for one invocation; written next to its outputs.
struct RunManifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> entries;  // option name -> value, in order

    void add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }
    /// key=value lines; readable back through --config.
    std::string to_string() const;
    void write(const std::filesystem::path& path) const;
};

}  // namespace spyflow
