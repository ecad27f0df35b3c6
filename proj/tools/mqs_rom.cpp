// mqs-rom: generate | simulate | reduce | verify | report.

#include <CLI11.hpp>

#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "mqsrom/pipeline.hpp"

namespace pl = mqsrom::pipeline;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerification = 4;

std::set<std::string> parse_which(const std::string& which) {
  if (which == "all") return {"full", "regularized", "ode"};
  std::set<std::string> out;
  std::size_t start = 0;
  while (start <= which.size()) {
    const auto comma = which.find(',', start);
    const std::string item = which.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (item != "full" && item != "regularized" && item != "ode") {
      throw pl::ConfigError("--which expects full, regularized, ode or all");
    }
    out.insert(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Passivity-preserving reduced models of magnetoquasistatic field-circuit systems"};
  app.set_version_flag("--version", pl::kVersion);
  std::string config_path, which = "all";
  std::vector<std::string> overrides;
  bool dump = false;
  app.require_subcommand(1, 1);
  std::vector<CLI::App*> subs;
  for (const char* name : {"generate", "simulate", "reduce", "verify", "report"}) {
    CLI::App* s = app.add_subcommand(name);
    s->add_option("--config", config_path, "configuration file")->required();
    s->add_option("--set", overrides, "override a key, section.key=value");
    subs.push_back(s);
  }
  subs[1]->add_flag("--dump-transforms", dump, "write W, Y_hat C2 and C_r as Matrix Market files");
  subs[1]->add_option("--which", which, "full, regularized, ode (comma separated) or all");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version exit 0; usage errors count as configuration errors.
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    pl::Config raw = pl::Config::load(config_path);
    for (const auto& o : overrides) raw.set(o);
    const pl::PipelineConfig cfg = pl::make_config(raw);
    const std::string stage = app.get_subcommands().front()->get_name();
    if (stage == "generate") {
      pl::cmd_generate(cfg);
    } else if (stage == "simulate") {
      pl::cmd_simulate(cfg, parse_which(which), dump);
    } else if (stage == "reduce") {
      pl::cmd_reduce(cfg);
    } else if (stage == "verify") {
      if (!pl::cmd_verify(cfg).all_passed()) {
        std::cerr << "verification failed\n";
        return kExitVerification;
      }
    } else {
      pl::cmd_report(cfg);
    }
  } catch (const pl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const pl::StageDependencyError& e) {
    std::cerr << "stage dependency error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mqsrom::IngestionError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mqsrom::GeometryError& e) {
    std::cerr << "geometry error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mqsrom::Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
