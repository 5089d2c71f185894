#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "aeflow/harness.hpp"
#include "aeflow/kernels.hpp"
#include "aeflow/presets.hpp"

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<int> workers;
  std::optional<std::uint64_t> seed_override;
};

int run_pipeline(const std::string& pipeline, const Common& c) {
  try {
    auto cfg = aeflow::load_config(c.config);
    if (c.workers) {
      if (*c.workers < 0) throw aeflow::ValidationError("--workers", "must be >= 0");
      cfg.workers = *c.workers;
    }
    if (c.seed_override) cfg.seeds = {*c.seed_override};
    const auto res = aeflow::run(pipeline, cfg, c.out, std::cout);
    if (res.status != aeflow::kExitOk) std::cerr << "aeflow: " << res.message << '\n';
    return res.status;
  } catch (const aeflow::ValidationError& e) {
    std::cerr << "aeflow: invalid config: " << e.what() << '\n';
    return aeflow::kExitValidation;
  } catch (const aeflow::CheckFailed& e) {
    std::cerr << "aeflow: " << e.what() << '\n';
    return aeflow::kExitAssertion;
  } catch (const std::exception& e) {
    std::cerr << "aeflow: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aeflow: almost-everywhere stochastic flows with irregular coefficients"};
  app.require_subcommand(1);
  app.set_version_flag("--version", AEFLOW_VERSION);

  Common common;
  std::string selected;
  for (const auto& name : aeflow::pipelines()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", common.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    sub->add_option("--workers", common.workers, "worker threads (0: hardware concurrency)");
    sub->add_option("--seed-override", common.seed_override, "replace the seed list by a single seed");
    sub->callback([&selected, name] { selected = name; });
  }
  auto* list = app.add_subcommand("list-presets", "list coefficient presets");
  list->callback([&selected] { selected = "list-presets"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : aeflow::kExitValidation;
  }

  if (selected == "list-presets") {
    for (const auto& p : aeflow::list_presets()) std::cout << p.name << "\t" << p.description << '\n';
    std::cout << "kernels\t" << aeflow::kernels::isa_name(aeflow::kernels::active_isa()) << '\n';
    return 0;
  }
  return run_pipeline(selected, common);
}
