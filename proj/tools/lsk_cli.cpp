#include <lsk/pipeline.hpp>

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct Verb {
  const char* name;
  const char* help;
  std::function<void(const lsk::Config&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Super-resolution with two-stage 1-D convolution kernels"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "List every subcommand and option");

  std::string config_path;
  std::vector<std::string> overrides;

  const std::vector<Verb> verbs = {
      {"analyze", "Parameter and FLOP table for (normal, separable) model pairs",
       [](const lsk::Config& c) { lsk::cmd_analyze(c, std::cout); }},
      {"synth", "Write synthetic grayscale scenes", [](const lsk::Config& c) { lsk::cmd_synth(c, std::cout); }},
      {"degrade", "Build HR/LR/bicubic triplets from a directory of PNGs",
       [](const lsk::Config& c) { lsk::cmd_degrade(c, std::cout); }},
      {"train", "Train a model on a degraded dataset",
       [](const lsk::Config& c) { lsk::cmd_train(c, std::cout, std::cerr); }},
      {"eval", "PSNR/SSIM of a checkpoint and of bicubic on a degraded dataset",
       [](const lsk::Config& c) { lsk::cmd_eval(c, std::cout); }},
      {"convert", "Merge separable layers or decompose square layers",
       [](const lsk::Config& c) { lsk::cmd_convert(c, std::cout, std::cerr); }},
      {"dump-features", "Write one layer's feature maps as PNGs",
       [](const lsk::Config& c) { lsk::cmd_dump_features(c, std::cout); }},
  };

  std::string keys = "Settings (key=value):\n";
  for (const auto& k : lsk::config_schema()) {
    keys += "  " + std::string(k.name);
    if (!k.fallback.empty()) keys += " [" + std::string(k.fallback) + "]";
    keys += "  " + std::string(k.help) + "\n";
  }

  std::vector<CLI::App*> subs;
  for (const Verb& v : verbs) {
    CLI::App* sub = app.add_subcommand(v.name, v.help);
    sub->add_option("--config,-c", config_path, "key=value config file");
    sub->add_option("--set,-s", overrides, "override a setting, key=value (repeatable)");
    sub->footer(keys);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lsk::exit_usage;
  }

  for (std::size_t i = 0; i < verbs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    return lsk::run_guarded(std::cerr, [&] {
      lsk::Config cfg = config_path.empty() ? lsk::Config{} : lsk::Config::load(config_path);
      for (const std::string& kv : overrides) cfg.apply_override(kv);
      verbs[i].run(cfg);
    });
  }
  return lsk::exit_usage;
}
