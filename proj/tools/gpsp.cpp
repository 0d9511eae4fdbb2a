/*
 Copyright 2026 The gpsp Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <gpsp/cli.hpp>

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<long> m;
  std::optional<std::string> delta_bar_override;
  std::optional<std::string> compensator;
  std::optional<std::string> field_mode;
  std::vector<std::string> set;
  gpsp::Paths paths;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Run configuration (sectioned key = value)");
  cmd->add_option("--seed", o.seed, "Root seed (overrides run.seed)");
  cmd->add_option("--out", o.paths.out, "Output path");
  cmd->add_option("--set", o.set, "Override a config entry, section.key=value (repeatable)");
  cmd->add_option("--data", o.paths.data, "Training CSV")->capture_default_str();
  cmd->add_option("--model", o.paths.model, "GP model file")->capture_default_str();
  cmd->add_option("--bound", o.paths.bound, "Error-bound report")->capture_default_str();
  cmd->add_option("--gains", o.paths.gains, "Gains report from synth-gains (default: gains from config)");
  cmd->add_option("--cert", o.paths.cert, "Certificate")->capture_default_str();
}

std::vector<std::string> overrides(const Options& o) {
  std::vector<std::string> out = o.set;
  if (o.seed) out.push_back("run.seed=" + std::to_string(*o.seed));
  if (o.m) out.push_back("gp.m=" + std::to_string(*o.m));
  if (o.delta_bar_override) out.push_back("bound.delta_bar_override=" + *o.delta_bar_override);
  if (o.compensator) out.push_back("sim.compensator=" + *o.compensator);
  if (o.field_mode) out.push_back("field.mode=" + *o.field_mode);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GP-compensated PD control: training, error bound, semi-passivity certificate and audit"};
  app.require_subcommand(1);
  Options opt;
  using Command = std::function<int(const gpsp::RunConfig&, const gpsp::Paths&, std::ostream&)>;
  const std::vector<std::tuple<const char*, const char*, Command>> commands{
      {"gen-data", "Generate the noisy training set", gpsp::cmd_gen_data},
      {"train", "Fit GP hyperparameters and write the model", gpsp::cmd_train},
      {"bound", "Compute the model-error bound", gpsp::cmd_bound},
      {"synth-gains", "Synthesize gains for a target lambda_min", gpsp::cmd_synth_gains},
      {"certify", "Check the semi-passivity conditions and write a certificate", gpsp::cmd_certify},
      {"simulate", "Simulate closed-loop trajectories to CSV", gpsp::cmd_simulate},
      {"verify", "Audit the dissipation inequality on trajectories and a state grid", gpsp::cmd_verify},
      {"field", "Export the open- or closed-loop vector field", gpsp::cmd_field},
  };
  std::map<CLI::App*, Command> dispatch;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, opt);
    dispatch[cmd] = fn;
  }
  app.get_subcommand("gen-data")->add_option("--m", opt.m, "Training set size (overrides gp.m)");
  app.get_subcommand("certify")
      ->add_option("--delta-bar-override", opt.delta_bar_override, "Use this Delta_bar, or 'none' for the computed bound");
  for (const char* name : {"simulate", "verify", "field"})
    app.get_subcommand(name)->add_option("--compensator", opt.compensator, "gp, perfect or adversarial");
  app.get_subcommand("field")->add_option("--mode", opt.field_mode, "open or closed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? gpsp::kExitOk : gpsp::kExitConfig;
  }

  try {
    const gpsp::RunConfig cfg = gpsp::load_config(opt.config, overrides(opt));
    for (const auto& [cmd, fn] : dispatch)
      if (cmd->parsed()) return fn(cfg, opt.paths, std::cout);
  } catch (const gpsp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return gpsp::kExitConfig;
  } catch (const gpsp::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return gpsp::kExitMissingArtifact;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return gpsp::kExitConfig;
  }
  return gpsp::kExitConfig;
}
