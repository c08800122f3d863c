#include "mono3d/process.hpp"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace mono3d {

ProcessResult run_command(const std::string& command) {
  ProcessResult r;
  const std::string full = command + " 2>&1";
  FILE* pipe = ::popen(full.c_str(), "r");
  if (!pipe) throw std::runtime_error("cannot start process: " + command);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  if (status == -1) throw std::runtime_error("cannot reap process: " + command);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return r;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string substitute(const std::string& pattern,
                       const std::map<std::string, std::string>& values) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size();) {
    if (pattern[i] == '{') {
      const auto close = pattern.find('}', i);
      if (close != std::string::npos) {
        const std::string key = pattern.substr(i + 1, close - i - 1);
        auto it = values.find(key);
        if (it == values.end())
          throw std::invalid_argument("unknown placeholder {" + key + "} in: " + pattern);
        out += it->second;
        i = close + 1;
        continue;
      }
    }
    out += pattern[i++];
  }
  return out;
}

void require_placeholders(const std::string& pattern, const std::vector<std::string>& keys) {
  for (const auto& key : keys)
    if (pattern.find("{" + key + "}") == std::string::npos)
      throw std::invalid_argument("missing placeholder {" + key + "} in: " + pattern);
}

}  // namespace mono3d
