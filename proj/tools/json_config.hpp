#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace lidarsdf::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigArguments {
  std::vector<std::string> options;
  std::vector<std::string> positionals;
};

/// Expands a flat JSON object into command-line arguments for `sub`.
/// Keys are long option names ('_' or '-'); keys whose flag already appears in
/// `given` are skipped so explicit flags win.
ConfigArguments config_arguments(const CLI::App& sub, const std::string& text,
                                          const std::vector<std::string>& given);

/// Every option of `app` (defaults included) plus format_version and command.
nlohmann::json resolved_config(const CLI::App& app);

}  // namespace lidarsdf::cli
