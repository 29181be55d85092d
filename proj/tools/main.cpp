// fastprio command-line entry point.
//
//   fastprio [--seed N] [--jobs N] [--manifest FILE] <command> [options]
//
// A manifest is a JSON object whose keys are option names without the
// leading dashes. Top-level keys apply to every command; an object stored
// under a command's name overrides them for that command. Options given on
// the command line win over the manifest.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "fastprio/errors.hpp"
#include "fastprio/tensor_io.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using fastprio::cli::Globals;

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

bool mentions(const std::vector<std::string>& args, const CLI::Option* opt) {
  for (const auto& a : args) {
    for (const auto& l : opt->get_lnames()) {
      if (a == "--" + l || a.rfind("--" + l + "=", 0) == 0) return true;
    }
    for (const auto& s : opt->get_snames()) {
      if (a == "-" + s || (a.size() > 2 && a.rfind("-" + s, 0) == 0 && a[1] != '-')) return true;
    }
  }
  return false;
}

std::string scalar_text(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned() || v.is_number_float()) return v.dump();
  throw fastprio::FormatError("manifest key '" + key + "' must be a string, number or boolean");
}

// Turns manifest entries into "--key=value" tokens for options the user did
// not pass explicitly.
void expand_manifest(const fs::path& path, const CLI::App& app, std::vector<std::string>& args) {
  json manifest;
  try {
    manifest = json::parse(fastprio::read_file_bytes(path));
  } catch (const json::exception& e) {
    throw fastprio::FormatError(path.string() + ": " + e.what());
  }
  if (!manifest.is_object()) throw fastprio::FormatError(path.string() + ": manifest must be a JSON object");

  std::size_t cmd_pos = args.size();
  const CLI::App* cmd = nullptr;
  for (std::size_t i = 0; i < args.size(); ++i) {
    for (const auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
      if (sub->get_name() == args[i]) {
        cmd = sub;
        cmd_pos = i;
        break;
      }
    }
    if (cmd) break;
  }

  std::map<std::string, json> entries;
  for (const auto& [k, v] : manifest.items()) {
    if (!v.is_object()) entries[k] = v;
  }
  if (cmd && manifest.contains(cmd->get_name()) && manifest[cmd->get_name()].is_object()) {
    for (const auto& [k, v] : manifest[cmd->get_name()].items()) entries[k] = v;
  }
  const fs::path base = path.parent_path();

  std::vector<std::string> global_tokens, command_tokens;
  for (const auto& [key, value] : entries) {
    if (key == "manifest") continue;
    const std::string flag = key.size() == 1 ? "-" + key : "--" + key;
    const CLI::Option* opt = nullptr;
    bool global = false;
    if (cmd) opt = cmd->get_option_no_throw(flag);
    if (!opt) {
      opt = app.get_option_no_throw(flag);
      global = opt != nullptr;
    }
    if (!opt || mentions(args, opt)) continue;
    auto& out = global ? global_tokens : command_tokens;
    const std::string name = opt->get_lnames().empty() ? key : opt->get_lnames().front();
    auto resolve = [&](std::string text) {
      if (fastprio::cli::is_path_option(name) && fs::path(text).is_relative() && !base.empty()) {
        text = (base / text).lexically_normal().generic_string();
      }
      return text;
    };
    const std::string spelled = "--" + name;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(spelled);
    } else if (value.is_array()) {
      for (const auto& item : value) out.push_back(spelled + "=" + resolve(scalar_text(item, key)));
    } else if (!value.is_null()) {
      out.push_back(spelled + "=" + resolve(scalar_text(value, key)));
    }
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(std::min(cmd_pos, args.size())), global_tokens.begin(),
              global_tokens.end());
  if (cmd) {
    const std::size_t after_cmd = cmd_pos + global_tokens.size() + 1;
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(after_cmd), command_tokens.begin(), command_tokens.end());
  }
}

std::string find_manifest(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--manifest" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--manifest=", 0) == 0) return args[i].substr(11);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FAST test-input prioritization toolkit"};
  app.set_version_flag("--version", FASTPRIO_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  Globals globals;
  app.add_option("--seed", globals.seed, "Global seed")->capture_default_str();
  app.add_option("--jobs", globals.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--manifest", globals.manifest, "JSON manifest supplying option values");
  std::map<std::string, fastprio::cli::Action> actions;
  fastprio::cli::add_commands(app, actions);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    const std::string manifest = find_manifest(args);
    if (!manifest.empty()) expand_manifest(manifest, app, args);
  } catch (const fastprio::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  globals.argv = args;
  try {
    for (const auto* sub : app.get_subcommands()) actions.at(sub->get_name())(globals);
  } catch (const fastprio::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
