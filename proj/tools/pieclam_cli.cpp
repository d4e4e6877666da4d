#include <charconv>
#include <iostream>
#include <map>
#include <memory>

#include "CLI11.hpp"
#include "cli_common.hpp"
#include "pieclam/errors.hpp"
#include "pieclam/io.hpp"

namespace {

using pieclam::InputError;
using pieclam::cli::CommandSpec;
using pieclam::cli::Json;

struct Registered {
  CommandSpec spec;
  CLI::App* app = nullptr;
  std::map<std::string, std::string> raw;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
};

std::string option_text(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

// Converts a flag value to the JSON type of the setting's default.
Json convert(const std::string& key, const std::string& text, const Json& def) {
  auto fail = [&] { return InputError("--" + key + ": cannot interpret '" + text + "'"); };
  if (def.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw fail();
  }
  if (def.is_number_integer() || def.is_number_unsigned()) {
    long long v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) throw fail();
    if (def.is_number_unsigned() && v < 0) throw fail();
    return v;
  }
  if (def.is_number_float()) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) throw fail();
    return v;
  }
  if (def.is_string()) return text;
  try {
    Json parsed = Json::parse(text);
    if (parsed.type() != def.type()) throw fail();
    return parsed;
  } catch (const nlohmann::json::exception&) {
    throw fail();
  }
}

// Config-file values must have the default's type; integers are accepted
// where a real number is expected.
Json coerce(const std::string& key, const Json& value, const Json& def) {
  if (def.is_number_float() && value.is_number()) return value.get<double>();
  if ((def.is_number_integer() || def.is_number_unsigned()) && value.is_number_integer()) return value;
  if (def.is_number_unsigned() && value.is_number_unsigned()) return value;
  if (value.type() != def.type()) throw InputError("config: '" + key + "' has the wrong type");
  return value;
}

Json resolve(const Registered& r) {
  Json cfg = r.spec.defaults;
  if (!r.config_path.empty()) {
    Json file;
    try {
      file = Json::parse(pieclam::read_text_file(r.config_path));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("config " + r.config_path + ": " + e.what());
    }
    if (!file.is_object()) throw InputError("config " + r.config_path + ": expected a JSON object");
    for (const auto& [k, v] : file.items()) {
      if (k == "command") {
        if (v != r.spec.name) throw InputError("config was written by command '" + option_text(v) + "'");
        continue;
      }
      if (!cfg.contains(k)) throw InputError("config: unknown setting '" + k + "'");
      cfg[k] = coerce(k, v, cfg[k]);
    }
  }
  for (const auto& [k, opt] : r.options) {
    if (opt->count() > 0) cfg[k] = convert(k, r.raw.at(k), r.spec.defaults.at(k));
  }
  return cfg;
}

void attach(CLI::App* parent, std::vector<std::unique_ptr<Registered>>& all, const std::vector<CommandSpec>& specs) {
  for (const CommandSpec& spec : specs) {
    auto reg = std::make_unique<Registered>();
    reg->spec = spec;
    reg->app = parent->add_subcommand(spec.name, spec.description);
    reg->app->add_option("--config", reg->config_path, "JSON file of settings (flags override it)");
    for (const auto& [k, v] : spec.defaults.items()) {
      reg->raw[k] = "";
      reg->options[k] = reg->app->add_option("--" + k, reg->raw[k], "default: " + option_text(v));
    }
    all.push_back(std::move(reg));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lorentz and Euclidean affiliation graph models with flow priors"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Registered>> commands;
  attach(&app, commands, pieclam::cli::top_level_commands());
  CLI::App* experiment = app.add_subcommand("experiment", "Run a named end-to-end experiment");
  experiment->require_subcommand(1);
  attach(experiment, commands, pieclam::cli::experiment_commands());

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const auto& reg : commands) {
      if (!reg->app->parsed()) continue;
      const pieclam::cli::Context ctx(reg->spec.name, resolve(*reg));
      const Json summary = reg->spec.run(ctx);
      std::cout << summary.dump(2) << "\n";
      return 0;
    }
    std::cerr << "no command given\n";
    return 2;
  } catch (const pieclam::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const pieclam::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const pieclam::ContractError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
