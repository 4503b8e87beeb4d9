#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "fairsynth/cli.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "engine configuration JSON")->required();
    cmd->add_option("--seed", args.seed, "override the config seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_option("--out", args.out, "override the config output directory");
}

fairsynth::EngineConfig load_with_overrides(const CommonArgs& args) {
    fairsynth::EngineConfig cfg = fairsynth::load_engine_config(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.out.empty()) cfg.out_dir = args.out;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairsynth: fairness-constrained synthetic tabular data"};
    app.require_subcommand(1);

    CommonArgs gen_args;
    CLI::App* gen = app.add_subcommand("generate", "produce one synthetic batch");
    add_common(gen, gen_args);

    CommonArgs eval_args;
    std::string synthetic_path;
    CLI::App* eval = app.add_subcommand("evaluate", "score a synthetic CSV against the reference");
    add_common(eval, eval_args);
    eval->add_option("--synthetic", synthetic_path, "synthetic CSV to evaluate")->required();

    CommonArgs run_args;
    CLI::App* run = app.add_subcommand("run", "iterate generate/evaluate/refine to convergence");
    add_common(run, run_args);

    CommonArgs mit_args;
    fairsynth::MitigateParams mit_params;
    CLI::App* mitigate = app.add_subcommand("mitigate", "apply a bias mitigation method");
    add_common(mitigate, mit_args);
    mitigate->add_option("--method", mit_params.method, "one of: sup, cor, dir, rw")->required();
    mitigate->add_option("--alpha", mit_params.alpha, "correlation remover strength in [0,1]");
    mitigate->add_option("--lambda", mit_params.repair_level, "repair level in [0,1]");
    mitigate->add_option("--corr-threshold", mit_params.corr_threshold,
                         "suppression association threshold in (0,1]");
    mitigate->add_flag("--evaluate", mit_params.evaluate,
                       "retrain on the transformed data and report dp/ftu/utility");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return fairsynth::cmd_generate(load_with_overrides(gen_args));
        if (eval->parsed())
            return fairsynth::cmd_evaluate(load_with_overrides(eval_args), synthetic_path);
        if (run->parsed()) return fairsynth::cmd_run(load_with_overrides(run_args));
        if (mitigate->parsed())
            return fairsynth::cmd_mitigate(load_with_overrides(mit_args), mit_params);
    } catch (const std::runtime_error& e) {
        std::cerr << "fairsynth: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
