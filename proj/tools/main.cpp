#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "certmpc/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    certmpc::CliOverrides overrides;
    std::string out_dir;
    long long seed = -1;
    long m_bar = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("config", args.config_path, "experiment configuration file")->required();
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", args.seed, "sampling seed (overrides config)");
    cmd->add_option("--override-m-bar", args.m_bar, "iteration count override for both methods");
    cmd->add_flag("--warm-start", args.overrides.warm_start, "carry shifted solutions across steps");
    cmd->add_option("--threads", args.overrides.threads, "sweep worker pool size");
}

certmpc::ExperimentConfig load_with_overrides(CommonArgs& args) {
    if (!args.out_dir.empty()) args.overrides.out_dir = args.out_dir;
    if (args.seed >= 0) args.overrides.seed = static_cast<std::uint64_t>(args.seed);
    if (args.m_bar > 0) args.overrides.m_bar_override = args.m_bar;
    return certmpc::apply_overrides(certmpc::ExperimentConfig::load(args.config_path), args.overrides);
}

void report_written(const std::vector<std::filesystem::path>& files) {
    for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"condensed linear-quadratic MPC with certified fixed-iteration solvers"};
    app.require_subcommand(1);

    CommonArgs certify_args, run_args, sweep_args;
    CLI::App* certify = app.add_subcommand("certify", "compute the stopping certificates");
    add_common(certify, certify_args);
    CLI::App* run = app.add_subcommand("run", "closed-loop runs from the configured initial state");
    add_common(run, run_args);
    CLI::App* sweep = app.add_subcommand("sweep", "closed-loop statistics over the initial-condition grid");
    add_common(sweep, sweep_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (certify->parsed()) {
            report_written(certmpc::cmd_certify(load_with_overrides(certify_args)));
        } else if (run->parsed()) {
            report_written(certmpc::cmd_run(load_with_overrides(run_args)));
        } else if (sweep->parsed()) {
            report_written(certmpc::cmd_sweep(load_with_overrides(sweep_args),
                                              sweep_args.overrides.threads));
        }
        return 0;
    } catch (const certmpc::ConfigParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const certmpc::DimensionMismatch& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const certmpc::InvalidSpec& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const certmpc::EmptyGrid& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const certmpc::KappaNotContractive& e) {
        std::cerr << "certification failure: " << e.what() << "\n";
        return 4;
    } catch (const certmpc::Error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
