/*
 * Copyright 2026 The FedOA Simulator Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: run experiments and sweeps, run the verification
// suite, and print step-size bounds.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <span>
#include <string>

#include "CLI11.hpp"
#include "fedoa/errors.h"
#include "fedoa/fed_protocol.h"
#include "fedoa/metrics.h"
#include "fedoa/runner.h"
#include "fedoa/self_check.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitParse = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

std::size_t thread_count() {
  const char* env = std::getenv("FEDOA_THREADS");
  if (env == nullptr) return 1;
  try {
    const long n = std::stol(env);
    return n > 0 ? static_cast<std::size_t>(n) : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

int cmd_run(const std::string& config_path, const std::string& out_override) {
  try {
    fedoa::ExperimentFile file = fedoa::load_experiment(config_path);
    const std::filesystem::path out =
        out_override.empty() ? std::filesystem::path(file.output_dir)
                             : std::filesystem::path(out_override);
    const auto results = fedoa::run_sweep(file, out, thread_count(), std::cout);
    std::cout << "wrote " << results.size() << " report(s) under "
              << out.string() << '\n';
    return kExitOk;
  } catch (const fedoa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitParse;
  } catch (const fedoa::DivergenceError& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const fedoa::NumericError& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const fedoa::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
}

int cmd_check(const std::string& fault) {
  fedoa::CheckHooks hooks;
  if (fault == "l2sq-grad-sign") {
    hooks.distance_grad = [](std::span<const double> a,
                             std::span<const double> b, fedoa::DistanceKind k) {
      fedoa::Vector g = fedoa::distance_grad(a, b, k);
      if (k == fedoa::DistanceKind::kL2Sq) {
        for (double& v : g) v = -v;
      }
      return g;
    };
  } else if (!fault.empty()) {
    std::cerr << "unknown fault '" << fault << "'\n";
    return kExitParse;
  }
  const auto start = std::chrono::steady_clock::now();
  const auto results = fedoa::run_self_checks(hooks);
  const bool ok = fedoa::print_check_table(results, std::cout);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  std::cout << (ok ? "all checks passed" : "some checks FAILED") << " ("
            << secs << " s)\n";
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_bounds(double L, double sigma, double lambda, std::size_t K,
               std::size_t T) {
  try {
    const auto b = fedoa::theorem4_stepsizes(L, sigma, lambda, K, T);
    std::cout << "eta_l_max = " << fedoa::format_double(b.eta_l_max) << '\n'
              << "eta_g_max = " << fedoa::format_double(b.eta_g_max) << '\n';
    return kExitOk;
  } catch (const fedoa::ConfigError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitParse;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated low-rank adapter tuning simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* run = app.add_subcommand("run", "Run an experiment file (all sweep points)");
  run->add_option("--config", config_path, "Experiment file")->required();
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");

  std::string fault;
  auto* check = app.add_subcommand("check", "Run the fast verification suite");
  check->add_option("--inject-fault", fault, "Testing aid: l2sq-grad-sign")
      ->group("");

  double L = 0, sigma = 0, lambda = 0;
  std::size_t K = 0, T = 0;
  auto* bounds = app.add_subcommand("bounds", "Print the step-size bounds");
  bounds->add_option("--L", L, "Smoothness constant")->required();
  bounds->add_option("--sigma", sigma, "Gradient norm bound")->required();
  bounds->add_option("--lambda", lambda, "Regularization strength")->required();
  bounds->add_option("--K", K, "Local steps")->required();
  bounds->add_option("--T", T, "Communication rounds")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitParse;
  }

  if (*run) return cmd_run(config_path, out_dir);
  if (*check) return cmd_check(fault);
  if (*bounds) return cmd_bounds(L, sigma, lambda, K, T);
  return kExitParse;
}
