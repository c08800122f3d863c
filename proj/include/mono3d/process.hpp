#pragma once

#include <map>
#include <string>
#include <vector>

namespace mono3d {

struct ProcessResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr, interleaved
};

/// Runs `command` through /bin/sh and captures its combined output.
ProcessResult run_command(const std::string& command);

/// Single-quotes `s` for /bin/sh.
std::string shell_quote(const std::string& s);

/// Replaces every `{key}` in `pattern`; an unknown `{...}` placeholder throws.
std::string substitute(const std::string& pattern, const std::map<std::string, std::string>& values);

void require_placeholders(const std::string& pattern, const std::vector<std::string>& keys);

}  // namespace mono3d
