#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oed/oed.h"

namespace {

using Json = nlohmann::json;

Json overrides_from(const std::vector<std::string>& sets, const std::string& out_dir) {
  Json root = Json::object();
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key.path=value, got " + s);
    Json value;
    try {
      value = Json::parse(s.substr(eq + 1));
    } catch (const Json::exception&) {
      value = s.substr(eq + 1);
    }
    std::stringstream path(s.substr(0, eq));
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(path, part, '.')) parts.push_back(part);
    Json* node = &root;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) (*node)[parts[i]] = Json::object();
      node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = value;
  }
  if (!out_dir.empty()) root["output_dir"] = out_dir;
  return root;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian optimal sensor placement: offline low-rank builds, online greedy selection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(oed_version()));

  std::string config;
  std::string out_dir;
  std::vector<std::string> sets;
  bool quiet = false;

  struct Command {
    const char* name;
    const char* help;
    oed_status (*fn)(const char*, const char*, char**);
  };
  const Command commands[] = {
      {"offline", "Draw samples, solve MAP points if requested, build and persist low-rank Hessians", &oed_run_offline},
      {"online", "Select sensors from persisted low-rank data (no PDE solves)", &oed_run_online},
      {"evaluate", "Evaluate criteria over a list of designs into a CSV table", &oed_run_evaluate},
      {"report", "Summarize the online report and evaluation table", &oed_run_report},
  };
  std::vector<CLI::App*> subs;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("-c,--config", config, "JSON config file")->required();
    sub->add_option("-o,--out", out_dir, "Output directory (overrides output_dir)");
    sub->add_option("-s,--set", sets, "Override a config key, e.g. --set lowrank.k=20")->take_all();
    sub->add_flag("-q,--quiet", quiet, "Do not print the JSON result");
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  std::string overrides;
  try {
    overrides = overrides_from(sets, out_dir).dump();
  } catch (const CLI::Error& e) {
    return app.exit(e);
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    char* out = nullptr;
    const oed_status status = commands[i].fn(config.c_str(), overrides.c_str(), &out);
    if (out) {
      if (!quiet) std::cout << out << '\n';
      oed_string_free(out);
    }
    if (status != OED_OK) {
      std::cerr << "oed-cli " << commands[i].name << ": " << oed_status_string(status) << ": " << oed_last_error()
                << '\n';
    }
    return int(status);
  }
  return 0;
}
