#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

namespace fastprio::cli {

struct Globals {
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
  std::string manifest;
  std::vector<std::string> argv;  // effective arguments after manifest expansion
};

using Action = std::function<void(const Globals&)>;

// Registers every subcommand on `app`; the action of the parsed one is
// looked up by name in `actions`.
void add_commands(CLI::App& app, std::map<std::string, Action>& actions);

// Options whose values are file paths (resolved against the manifest's directory).
bool is_path_option(std::string_view name);

}  // namespace fastprio::cli
