// Copyright (c) 2026 The disn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// disn command-line tool: synth, train, eval, gradcheck, report.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "disn/commands.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool out_required) {
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--set", f.overrides, "Override a config key, e.g. train.epochs=5")
      ->take_all();
  auto* out = cmd->add_option("--out", f.out, "Output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", f.seed, "Run seed (overrides the config's seed)");
}

disn::RunConfig resolve(const CommonFlags& f) {
  return disn::resolve_config(f.config, f.overrides, f.seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker/environment disentanglement of speaker embeddings"};
  app.require_subcommand(1);

  CommonFlags synth_f, train_f, eval_f, grad_f;
  bool no_create = false;
  bool inject_bug = false;
  std::size_t repeats = 1;
  std::string report_dir;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic factor-world dataset");
  add_common(synth, synth_f, true);
  synth->add_flag("--no-create", no_create, "Fail instead of creating a missing --out directory");

  auto* train = app.add_subcommand("train", "Train the disentangler on paths.dataset");
  add_common(train, train_f, true);

  auto* eval = app.add_subcommand("eval", "Score raw and disentangled embeddings");
  add_common(eval, eval_f, true);

  auto* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  add_common(grad, grad_f, false);
  grad->add_option("--repeats", repeats, "Random instances per component")
      ->check(CLI::PositiveNumber);
  grad->add_flag("--inject-bug", inject_bug, "Negate analytic gradients (checker self-test)");

  auto* report = app.add_subcommand("report", "Summarize an output directory");
  report->add_option("--out", report_dir, "Directory to summarize")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      const auto rc = resolve(synth_f);
      const auto data = disn::cmd_synth(rc, synth_f.out, !no_create);
      std::cout << "wrote " << data.dataset.meta.size() << " utterances to " << synth_f.out << "\n";
    } else if (*train) {
      const auto rc = resolve(train_f);
      const auto res = disn::cmd_train(rc, train_f.out, &std::cerr);
      std::cout << "trained " << res.epochs_done << " epochs; artifacts in " << train_f.out << "\n";
    } else if (*eval) {
      const auto rc = resolve(eval_f);
      const auto rep = disn::cmd_eval(rc, eval_f.out);
      std::cout << rep.dump(2) << "\n";
    } else if (*grad) {
      const auto rc = resolve(grad_f);
      disn::GradSuiteOptions opt;
      opt.inject_sign_flip = inject_bug;
      std::optional<std::filesystem::path> out;
      if (!grad_f.out.empty()) out = grad_f.out;
      if (!disn::cmd_gradcheck(rc.seed, out, opt, std::cout, repeats)) {
        std::cerr << "gradcheck: one or more checks failed\n";
        return 2;
      }
    } else if (*report) {
      std::cout << disn::cmd_report(report_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return disn::exit_code_for(e);
  }
  return 0;
}
