#include "json_config.hpp"

#include <algorithm>
#include <charconv>

#include "lidarsdf/io.hpp"

namespace lidarsdf::cli {

namespace {

nlohmann::json typed(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (!s.empty() && res.ec == std::errc() && res.ptr == end) {
    long long i = 0;
    const auto ri = std::from_chars(s.data(), end, i);
    if (ri.ec == std::errc() && ri.ptr == end) return i;
    return v;
  }
  return s;
}

std::string scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

}  // namespace

ConfigArguments config_arguments(const CLI::App& sub, const std::string& text,
                                          const std::vector<std::string>& given) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
  if (doc.contains("command") && doc["command"] != sub.get_name()) {
    throw ConfigError("config file is for command " + doc["command"].dump());
  }
  ConfigArguments out;
  auto& options = out.options;
  auto& positionals = out.positionals;
  for (const auto& [raw_key, value] : doc.items()) {
    if (raw_key == "format_version" || raw_key == "command" || raw_key == "config") continue;
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    const CLI::Option* opt = nullptr;
    for (const CLI::Option* o : sub.get_options()) {
      const auto& names = o->get_lnames();
      if (std::find(names.begin(), names.end(), key) != names.end() ||
          (o->get_positional() && o->get_single_name() == key)) {
        opt = o;
      }
    }
    if (opt == nullptr || key == "help") throw ConfigError("unknown config key: " + raw_key);
    std::vector<std::string> values;
    if (value.is_array()) {
      for (const auto& v : value) values.push_back(scalar_text(v));
    } else if (!value.is_null()) {
      values.push_back(scalar_text(value));
    }
    if (opt->get_positional()) {
      positionals.insert(positionals.end(), values.begin(), values.end());
      continue;
    }
    const std::string flag = "--" + key;
    const bool present = std::any_of(given.begin(), given.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (present || values.empty()) continue;
    if (opt->get_type_size_max() == 0) {
      if (values.size() != 1 || (values[0] != "true" && values[0] != "false")) {
        throw ConfigError("config key " + raw_key + " must be a boolean");
      }
      if (values[0] == "true") options.push_back(flag);
      continue;
    }
    options.push_back(flag);
    options.insert(options.end(), values.begin(), values.end());
  }
  return out;
}

nlohmann::json resolved_config(const CLI::App& app) {
  nlohmann::json doc = nlohmann::json::object();
  doc["format_version"] = kFormatVersion;
  doc["command"] = app.get_name();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string& name = opt->get_single_name();
    if (opt->get_lnames().empty() && opt->get_positional() == false) continue;
    if (name == "help" || name == "config") continue;
    std::vector<std::string> values;
    if (opt->count() > 0) {
      values = opt->results();
    } else {
      const std::string d = opt->get_default_str();
      if (d == "{}" || d == "[]") {
        // empty container default
      } else if (!d.empty() && opt->get_expected_max() > 1 && d.front() == '[' && d.back() == ']') {
        std::string inner = d.substr(1, d.size() - 2);
        std::size_t pos = 0;
        while (!inner.empty() && pos != std::string::npos) {
          const std::size_t comma = inner.find(',', pos);
          values.push_back(inner.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
          pos = comma == std::string::npos ? comma : comma + 1;
        }
      } else if (!d.empty()) {
        values.push_back(d);
      }
    }
    if (opt->get_type_size_max() == 0 && values.empty()) values.push_back("false");
    if (opt->get_expected_max() > 1 || values.size() > 1) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& v : values) arr.push_back(typed(v));
      doc[name] = arr;
    } else {
      doc[name] = values.empty() ? nlohmann::json("") : typed(values.front());
    }
  }
  return doc;
}

}  // namespace lidarsdf::cli
