#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scenario.hpp"

namespace hylb::cli {

struct Options {
  std::filesystem::path scenario;
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::vector<std::string> overrides;
};

/// Exit status and the single stdout summary line.
struct Outcome {
  int exit_code = 0;
  std::string summary;
};

inline constexpr int kExitError = 4;

Outcome run_simulate(const Options& opt);
Outcome run_check(const Options& opt);
Outcome run_falsify(const Options& opt);
Outcome run_example(const std::string& name, const Options& opt);

/// Writes through a sibling temp file and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Exit code of an error raised by a command.
int exit_code_for(ErrorCode code);

/// {"error": code, "message": what} for stderr.
std::string error_json(const std::string& code, const std::string& message);

}  // namespace hylb::cli
