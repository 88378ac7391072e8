// argus-gate: run audited agent scenarios, validate scenario packs, and
// replay recorded transcripts. See include/argus/cli.hpp for the command
// implementations and exit-code contract.
#include <iostream>

#include <CLI11.hpp>

#include "argus/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"argus-gate: runtime decision auditor for tool-using agents"};
    app.require_subcommand(1);

    argus::cli::RunCmd run;
    CLI::App* run_cmd = app.add_subcommand("run", "run scenarios and write transcripts");
    run_cmd->add_option("--scenarios", run.scenarios_dir, "scenario directory")->required();
    run_cmd->add_option("--mode", run.mode, "argus | no_defense | both");
    run_cmd->add_option("--oracle", run.oracle, "scripted | http");
    run_cmd->add_option("--oracle-rules", run.rules_path, "rules file for the scripted oracle");
    run_cmd->add_option("--agent", run.agent, "scripted | llm");
    run_cmd->add_option("--out", run.out_dir, "output directory")->required();
    run_cmd->add_option("--jobs", run.jobs, "parallel workers");
    run_cmd->add_option("--seed", run.seed, "seed recorded in the report");

    argus::cli::ValidateCmd validate;
    CLI::App* validate_cmd = app.add_subcommand("validate", "validate a scenario directory");
    validate_cmd->add_option("--scenarios", validate.scenarios_dir, "scenario directory")
        ->required();

    argus::cli::ReplayCmd replay;
    CLI::App* replay_cmd =
        app.add_subcommand("replay", "re-run scripted transcripts and compare bytes");
    replay_cmd->add_option("paths", replay.paths, "transcript files or directories")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? argus::cli::exit_ok : argus::cli::exit_config;
    }

    if (run_cmd->parsed()) return argus::cli::cmd_run(run, std::cout, std::cerr);
    if (validate_cmd->parsed()) return argus::cli::cmd_validate(validate, std::cout, std::cerr);
    if (replay_cmd->parsed()) return argus::cli::cmd_replay(replay, std::cout, std::cerr);
    return argus::cli::exit_config;
}
