#include <cstdint>
#include <string>

#include "CLI11.hpp"

#include "dacount/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain crowd counting: adversarial adaptation and map refinement"};
  app.require_subcommand(1);

  dacount::CliOptions opt;
  uint64_t seed = 0;
  int toy_n = 0;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opt.config_path, "experiment config file (INI)")->required();
    cmd->add_option("--out", opt.out_dir, "exact experiment directory (default: stamped name)");
    cmd->add_flag("--force", opt.force, "reuse a non-empty experiment directory");
    cmd->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { opt.seed = seed; });
    return cmd;
  };

  CLI::App* gen = add_common(app.add_subcommand("gen-toy", "generate the two-domain toy dataset"));
  gen->add_option("--n", toy_n, "number of images per domain")
      ->each([&](const std::string&) { opt.toy_n = toy_n; });

  add_common(app.add_subcommand("train", "supervised counter training on labeled source data"));
  add_common(app.add_subcommand("adapt", "adversarial adaptation to unlabeled target data"));

  CLI::App* rt = add_common(
      app.add_subcommand("refine-train", "fit the map refiner on counter predictions"));
  rt->add_option("--counter", opt.counter_ckpt, "trained counter checkpoint")->required();

  CLI::App* rf = add_common(app.add_subcommand("refine", "apply counter + refiner to a dataset"));
  rf->add_option("--counter", opt.counter_ckpt, "trained counter checkpoint")->required();
  rf->add_option("--refiner", opt.refiner_ckpt, "trained refiner checkpoint")->required();
  rf->add_option("--data", opt.data_root, "dataset root (default: target from the config)");

  CLI::App* ev = add_common(app.add_subcommand("evaluate", "evaluate a counter on a dataset"));
  ev->add_option("--counter", opt.counter_ckpt, "trained counter checkpoint")->required();
  ev->add_option("--refiner", opt.refiner_ckpt, "optional refiner applied after the counter");
  ev->add_option("--data", opt.data_root, "dataset root (default: target from the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return dacount::kExitUsage;
  }

  if (app.got_subcommand("gen-toy")) return dacount::cmd_gen_toy(opt);
  if (app.got_subcommand("train")) return dacount::cmd_train(opt);
  if (app.got_subcommand("adapt")) return dacount::cmd_adapt(opt);
  if (app.got_subcommand("refine-train")) return dacount::cmd_refine_train(opt);
  if (app.got_subcommand("refine")) return dacount::cmd_refine(opt);
  if (app.got_subcommand("evaluate")) return dacount::cmd_evaluate(opt);
  return dacount::kExitUsage;
}
