// anchored: command-line front end for the anchored-ensemble library.
//
//   anchored oracle-check [--pairs N] [--anchors N] [--inject-prior-anchor]
//   anchored toy          [--activation relu|erf|rbf] [-H N] [-m N] [--curves F]
//   anchored benchmark    --dataset NAME [--manifest F] [--splits N]
//   anchored gradcheck    [--instances N]
//   anchored theorem1     [--widths 10,100,1000] [--seeds N]
//
// Settings resolve as subcommand defaults, then --config, then flags.

#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "anchored/commands.hpp"

namespace {

using anchored::RunConfig;

// Collects flag bindings; each one is applied only if the flag was given.
class Overrides {
 public:
  template <typename T, typename Setter>
  void add(CLI::App* app, const std::string& name, const std::string& help,
           Setter setter) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    entries_.push_back({opt, [value, setter](RunConfig& c) { setter(c, *value); }});
  }

  void flag(CLI::App* app, const std::string& name, const std::string& help,
            std::function<void(RunConfig&)> setter) {
    CLI::Option* opt = app->add_flag(name, help);
    entries_.push_back({opt, std::move(setter)});
  }

  void apply(RunConfig& c) const {
    for (const auto& e : entries_)
      if (e.option->count() > 0) e.set(c);
  }

 private:
  struct Entry {
    CLI::Option* option;
    std::function<void(RunConfig&)> set;
  };
  std::vector<Entry> entries_;
};

void add_model_flags(CLI::App* app, Overrides& o) {
  o.add<std::string>(app, "--activation", "relu | erf | rbf",
                     [](RunConfig& c, const std::string& v) { c.activation = v; });
  o.add<long>(app, "-H,--hidden-width", "hidden units per network",
              [](RunConfig& c, long v) { c.hidden_width = v; });
  o.add<long>(app, "-m,--members", "ensemble size",
              [](RunConfig& c, long v) { c.members = v; });
  o.add<double>(app, "--first-layer-var", "prior variance of first-layer weights",
                [](RunConfig& c, double v) { c.prior.first_layer_var = v; });
  o.add<double>(app, "--bias-var", "prior variance of biases",
                [](RunConfig& c, double v) { c.prior.bias_var = v; });
  o.add<double>(app, "--output-var-base", "output-weight prior variance times H",
                [](RunConfig& c, double v) { c.prior.output_layer_var_base = v; });
  o.add<double>(app, "--center-var", "prior variance of rbf centres",
                [](RunConfig& c, double v) { c.prior.center_var = v; });
  o.add<double>(app, "--rbf-width", "rbf bump variance",
                [](RunConfig& c, double v) { c.rbf_width = v; });
  o.add<double>(app, "--noise-var", "observation noise variance",
                [](RunConfig& c, double v) { c.sigma_eps_sq = v; });
  o.add<int>(app, "--epochs", "training epochs",
             [](RunConfig& c, int v) { c.epochs = v; });
  o.add<double>(app, "--lr", "learning rate",
                [](RunConfig& c, double v) { c.learning_rate = v; });
  o.add<std::string>(app, "--optimizer", "adam | gd",
                     [](RunConfig& c, const std::string& v) { c.optimizer = v; });
  o.add<double>(app, "--early-stop-tol", "relative improvement over 50 epochs",
                [](RunConfig& c, double v) { c.early_stop_tol = v; });
}

int run(const std::string& name, const RunConfig& c) {
  if (name == "oracle-check") return anchored::cmd_oracle_check(c, std::cout);
  if (name == "toy") return anchored::cmd_toy(c, std::cout);
  if (name == "benchmark") return anchored::cmd_benchmark(c, std::cout);
  if (name == "gradcheck") return anchored::cmd_gradcheck(c, std::cout);
  return anchored::cmd_theorem1(c, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchored ensembles: oracles, toy curves, benchmarks"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides global;
  app.add_option("--config", config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  global.add<std::uint64_t>(&app, "--seed", "random seed",
                            [](RunConfig& c, std::uint64_t v) { c.seed = v; });
  global.add<std::string>(&app, "--out", "report path",
                          [](RunConfig& c, const std::string& v) { c.out = v; });
  global.add<int>(&app, "--threads", "worker threads for ensemble training",
                  [](RunConfig& c, int v) { c.threads = v; });

  Overrides local;
  auto* oracle = app.add_subcommand("oracle-check", "Gaussian consistency oracles");
  local.add<int>(oracle, "--pairs", "random prior/likelihood pairs",
                 [](RunConfig& c, int v) { c.pairs = v; });
  local.add<long>(oracle, "--anchors", "Monte-Carlo anchors",
                  [](RunConfig& c, long v) { c.anchors = v; });
  local.flag(oracle, "--inject-prior-anchor",
             "draw anchors from the prior instead (negative test)",
             [](RunConfig& c) { c.inject_prior_anchor = true; });

  auto* toy = app.add_subcommand("toy", "1D toy curves against the GP");
  add_model_flags(toy, local);
  local.add<std::string>(toy, "--curves", "CSV output path",
                         [](RunConfig& c, const std::string& v) { c.curves = v; });
  local.add<int>(toy, "--grid-points", "query grid size",
                 [](RunConfig& c, int v) { c.grid_points = v; });
  local.add<double>(toy, "--grid-halfwidth", "query grid half-width",
                    [](RunConfig& c, double v) { c.grid_halfwidth = v; });

  auto* bench = app.add_subcommand("benchmark", "UCI-style regression benchmark");
  add_model_flags(bench, local);
  local.add<std::string>(bench, "--dataset", "dataset name in the manifest",
                         [](RunConfig& c, const std::string& v) { c.dataset = v; });
  local.add<std::string>(bench, "--manifest", "dataset manifest (JSON)",
                         [](RunConfig& c, const std::string& v) { c.manifest = v; });
  local.add<int>(bench, "--splits", "random train/test splits",
                 [](RunConfig& c, int v) { c.splits = v; });
  local.add<double>(bench, "--train-fraction", "train share of each split",
                    [](RunConfig& c, double v) { c.train_fraction = v; });

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient check");
  local.add<int>(grad, "--instances", "random instances per activation",
                 [](RunConfig& c, int v) { c.instances = v; });

  auto* theorem = app.add_subcommand("theorem1", "prior-dominance trend with width");
  local.add<std::vector<long>>(
      theorem, "--widths", "hidden widths",
      [](RunConfig& c, const std::vector<long>& v) {
        c.h_values.assign(v.begin(), v.end());
      });
  local.add<int>(theorem, "--seeds", "seeds per activation",
                 [](RunConfig& c, int v) { c.seeds = v; });
  local.add<double>(theorem, "--first-layer-var", "prior variance of first-layer weights",
                    [](RunConfig& c, double v) { c.prior.first_layer_var = v; });
  local.add<double>(theorem, "--noise-var", "observation noise variance",
                    [](RunConfig& c, double v) { c.sigma_eps_sq = v; });
  for (auto* sub : {oracle, toy, bench, grad, theorem}) sub->fallthrough();
  theorem->get_option("--widths")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    RunConfig c = anchored::defaults_for(name);
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      anchored::merge_config(c, nlohmann::json::parse(is));
    }
    global.apply(c);
    local.apply(c);
    return run(name, c);
  } catch (const std::exception& e) {
    std::cerr << "anchored " << name << ": " << e.what() << "\n";
    return 2;
  }
}
