// SPDX-License-Identifier: Apache-2.0
//
// hsm solve <config.json> [--out DIR] [--threads N]
// hsm verify <config.json> [--out DIR] [--threads N]

#include <iostream>

#include <CLI11.hpp>

#include "hsm/cli.hpp"

int main(int argc, char **argv)
{
  CLI::App app{"Half-space matching solver for 2D Helmholtz scattering"};
  app.require_subcommand(1);

  std::string config;
  std::string out = ".";
  int threads = 0;
  for (const char *name : {"solve", "verify"})
  {
    auto *sub = app.add_subcommand(name, name[0] == 's' ? "solve a polygon-dirichlet or general-coupled problem"
                                                        : "run a verify-battery configuration");
    sub->add_option("config", config, "JSON configuration file")->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--threads", threads, "worker threads (overrides the config)")
        ->check(CLI::PositiveNumber);
  }

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError &e)
  {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : hsm::cli::Exit::config_error;
  }

  hsm::cli::RunOptions opt;
  opt.out = out;
  if (threads > 0)
  {
    opt.threads = threads;
  }
  const std::string command = app.got_subcommand("solve") ? "solve" : "verify";
  return hsm::cli::run(command, config, opt, std::cerr);
}
