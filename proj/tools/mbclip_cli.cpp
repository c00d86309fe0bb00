// mbclip: run, sweep, verify and bounds subcommands over a JSON config.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mbclip/harness/commands.hpp"

namespace h = mbclip::harness;

int main(int argc, char** argv) {
  CLI::App app{"Micro-batch clipping laboratory"};
  app.require_subcommand(1);

  h::CliOptions opt;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const h::CliOptions&, std::ostream&, std::ostream&);
  };
  const Sub subs[] = {
      {"run", "Plain and/or micro-batch clipped SGD, one CSV per (run, seed)", h::cmd_run},
      {"sweep", "Clipped SGD over the micro-batch grid with bound columns", h::cmd_sweep},
      {"verify", "Monte-Carlo lemma and structure checks", h::cmd_verify},
      {"bounds", "Tabulate convergence rates and constants", h::cmd_bounds},
  };
  std::vector<CLI::App*> handles;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", opt.config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    sub->add_option("--seeds", seeds, "Comma-separated seeds (override the config)")
        ->delimiter(',');
    sub->add_option("--jobs", opt.jobs, "Maximum concurrent runs")->check(CLI::PositiveNumber);
    handles.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : h::kExitConfigError;
  }
  if (!out_dir.empty()) opt.out_dir = out_dir;
  if (!seeds.empty()) opt.seeds = seeds;

  for (std::size_t i = 0; i < handles.size(); ++i) {
    if (handles[i]->parsed()) return subs[i].fn(opt, std::cout, std::cerr);
  }
  return h::kExitFailure;
}
