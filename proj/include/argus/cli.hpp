#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "argus/harness.hpp"
#include "argus/http_provider.hpp"
#include "argus/metrics.hpp"

namespace argus {

// Command implementations behind the argus-gate binary, kept as library
// functions so tests drive them directly. Exit codes are a contract:
// 0 success, 1 unusable configuration, 2 scenario or runtime failure,
// 3 replay divergence.
namespace cli {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_runtime = 2;
constexpr int exit_divergence = 3;

struct RunCmd {
    std::string scenarios_dir;
    std::string mode = "argus"; // argus | no_defense | both
    std::string oracle = "scripted";
    std::string rules_path;
    std::string agent = "scripted";
    std::string out_dir;
    int jobs = 1;
    unsigned seed = 0;
};

struct ValidateCmd {
    std::string scenarios_dir;
};

struct ReplayCmd {
    std::vector<std::string> paths; // transcript files or directories of them
};

namespace detail {

inline std::string transcript_name(const std::string& scenario_id, Mode mode) {
    return scenario_id + "." + to_string(mode) + ".jsonl";
}

inline std::optional<std::vector<Mode>> parse_modes(const std::string& mode) {
    if (mode == "argus") return std::vector<Mode>{Mode::argus};
    if (mode == "no_defense") return std::vector<Mode>{Mode::no_defense};
    if (mode == "both") return std::vector<Mode>{Mode::argus, Mode::no_defense};
    return std::nullopt;
}

struct Task {
    const Scenario* scenario = nullptr;
    Mode mode = Mode::argus;
    std::string scenario_path;
};

// Bounded pool over a shared index; results land by task slot so output
// order never depends on scheduling.
template <typename Fn>
inline void parallel_for(std::size_t count, int jobs, Fn&& fn) {
    int workers = std::max(1, std::min<int>(jobs, 64));
    workers = static_cast<int>(std::min<std::size_t>(workers, count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < count;) fn(i);
        });
    for (std::thread& t : pool) t.join();
}

inline json run_row(const RunResult& r) {
    json row = r.outcome.to_json();
    row.erase("event");
    row["scenario"] = r.scenario_id;
    row["mode"] = to_string(r.mode);
    row["vector"] = r.vector;
    row["clean"] = r.clean;
    return row;
}

inline std::optional<MetricReport> metrics_for(const std::vector<RunResult>& results, Mode mode,
                                               std::optional<std::int64_t> baseline_tokens,
                                               std::optional<double> baseline_asr) {
    std::vector<RunStats> attacked, clean;
    for (const RunResult& r : results) {
        if (r.mode != mode) continue;
        (r.clean ? clean : attacked).push_back(stats(r));
    }
    if (attacked.empty() || clean.empty()) return std::nullopt;
    return compute(attacked, clean, baseline_tokens, baseline_asr);
}

inline std::string runs_markdown(const std::vector<RunResult>& results) {
    std::string md =
        "| scenario | mode | vector | attack | utility | refused | blocks | tokens |\n"
        "|---|---|---|---|---|---|---|---|\n";
    for (const RunResult& r : results) {
        const Outcome& o = r.outcome;
        md += "| " + r.scenario_id + " | " + to_string(r.mode) + " | " + r.vector + " | " +
              (o.attack_succeeded ? "yes" : "no") + " | " + (o.utility_met ? "yes" : "no") +
              " | " + (o.refused ? "yes" : "no") + " | " + std::to_string(o.blocks) + " | " +
              std::to_string(o.tokens) + " |\n";
    }
    return md;
}

} // namespace detail

inline int cmd_validate(const ValidateCmd& cmd, std::ostream& out, std::ostream& err) {
    if (cmd.scenarios_dir.empty()) {
        err << "validate: --scenarios is required\n";
        return exit_config;
    }
    try {
        std::vector<Scenario> all = load_dir(cmd.scenarios_dir);
        int attacked = 0;
        for (const Scenario& sc : all)
            if (!sc.clean()) ++attacked;
        out << all.size() << " scenarios ok (" << attacked << " attacked, "
            << (all.size() - static_cast<std::size_t>(attacked)) << " clean)\n";
        return exit_ok;
    } catch (const Error& e) {
        err << "validate: " << e.what() << "\n";
        return e.kind() == ErrorKind::io_error ? exit_config : exit_runtime;
    }
}

inline int cmd_run(const RunCmd& cmd, std::ostream& out, std::ostream& err) {
    auto modes = detail::parse_modes(cmd.mode);
    if (!modes) {
        err << "run: unknown mode " << cmd.mode << " (argus, no_defense, both)\n";
        return exit_config;
    }
    if (cmd.scenarios_dir.empty() || cmd.out_dir.empty()) {
        err << "run: --scenarios and --out are required\n";
        return exit_config;
    }
    if (cmd.oracle != "scripted" && cmd.oracle != "http") {
        err << "run: unknown oracle " << cmd.oracle << " (scripted, http)\n";
        return exit_config;
    }
    if (cmd.agent != "scripted" && cmd.agent != "llm") {
        err << "run: unknown agent " << cmd.agent << " (scripted, llm)\n";
        return exit_config;
    }
    bool wants_argus = false;
    for (Mode m : *modes) wants_argus |= m == Mode::argus;
    bool needs_oracle = wants_argus || cmd.agent == "llm";

    std::unique_ptr<Provider> provider;
    std::string rules_abs;
    try {
        if (cmd.oracle == "scripted") {
            if (!cmd.rules_path.empty()) {
                rules_abs = std::filesystem::absolute(cmd.rules_path).string();
                provider = std::make_unique<ScriptedProvider>(
                    ScriptedProvider::from_file(rules_abs));
            } else if (needs_oracle) {
                err << "run: the scripted oracle needs --oracle-rules\n";
                return exit_config;
            } else {
                provider = std::make_unique<ScriptedProvider>(
                    std::vector<ScriptedProvider::Rule>{});
            }
        } else {
            HttpConfig cfg = HttpConfig::from_env();
            if (cfg.url.empty() || cfg.model.empty()) {
                err << "run: the http oracle needs ARGUS_ORACLE_URL and "
                       "ARGUS_ORACLE_MODEL\n";
                return exit_config;
            }
            provider = std::make_unique<HttpProvider>(cfg);
        }
        std::filesystem::create_directories(cmd.out_dir);
    } catch (const std::exception& e) {
        err << "run: " << e.what() << "\n";
        return exit_config;
    }

    std::vector<Scenario> scenarios;
    try {
        scenarios = load_dir(cmd.scenarios_dir);
    } catch (const Error& e) {
        err << "run: " << e.what() << "\n";
        return e.kind() == ErrorKind::io_error ? exit_config : exit_runtime;
    }

    std::vector<detail::Task> tasks;
    for (const Scenario& sc : scenarios)
        for (Mode m : *modes) tasks.push_back({&sc, m, sc.source_path});

    std::vector<std::optional<RunResult>> results(tasks.size());
    std::vector<std::string> failures(tasks.size());
    detail::parallel_for(tasks.size(), cmd.jobs, [&](std::size_t i) {
        const detail::Task& task = tasks[i];
        try {
            RunOptions opt;
            opt.mode = task.mode;
            opt.scenario_path = task.scenario_path;
            opt.rules_path = rules_abs;
            std::unique_ptr<Agent> agent;
            if (cmd.agent == "scripted")
                agent = std::make_unique<ScriptedAgent>(*task.scenario);
            else
                agent = std::make_unique<LlmAgent>(*provider, *task.scenario);
            RunResult r = run_session(*task.scenario, *agent, *provider, opt);
            std::filesystem::path file =
                std::filesystem::path(cmd.out_dir) /
                detail::transcript_name(r.scenario_id, r.mode);
            std::ofstream f(file);
            f << r.jsonl();
            results[i] = std::move(r);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });

    bool failed = false;
    for (std::size_t i = 0; i < tasks.size(); ++i)
        if (!failures[i].empty()) {
            err << "run: " << tasks[i].scenario->id << " (" << to_string(tasks[i].mode)
                << "): " << failures[i] << "\n";
            failed = true;
        }
    if (failed) return exit_runtime;

    std::vector<RunResult> ordered;
    for (std::optional<RunResult>& r : results) ordered.push_back(std::move(*r));

    // Baselines only exist when both modes ran in this invocation.
    std::optional<std::int64_t> baseline_tokens;
    std::optional<double> baseline_asr;
    std::optional<MetricReport> nodef =
        detail::metrics_for(ordered, Mode::no_defense, std::nullopt, std::nullopt);
    if (wants_argus && nodef) {
        if (nodef->tokens_total > 0) baseline_tokens = nodef->tokens_total;
        baseline_asr = nodef->asr;
    }
    std::optional<MetricReport> argus_rep =
        detail::metrics_for(ordered, Mode::argus, baseline_tokens, baseline_asr);

    json report = {{"scenarios_dir", std::filesystem::absolute(cmd.scenarios_dir).string()},
                   {"mode", cmd.mode},
                   {"agent", cmd.agent},
                   {"oracle", cmd.oracle},
                   {"rules", rules_abs},
                   {"seed", cmd.seed},
                   {"runs", json::array()},
                   {"metrics", json::object()}};
    for (const RunResult& r : ordered) report["runs"].push_back(detail::run_row(r));
    if (argus_rep) report["metrics"]["argus"] = argus_rep->to_json();
    if (nodef) report["metrics"]["no_defense"] = nodef->to_json();

    std::string md = "# argus-gate report\n\n";
    if (argus_rep)
        md += "## argus\n\n" + render_table(*argus_rep, TableFormat::markdown) + "\n";
    if (nodef)
        md += "## no_defense\n\n" + render_table(*nodef, TableFormat::markdown) + "\n";
    md += "## runs\n\n" + detail::runs_markdown(ordered);

    try {
        std::ofstream(std::filesystem::path(cmd.out_dir) / "report.json")
            << report.dump(2) << "\n";
        std::ofstream(std::filesystem::path(cmd.out_dir) / "report.md") << md;
    } catch (const std::exception& e) {
        err << "run: writing report: " << e.what() << "\n";
        return exit_config;
    }

    for (const RunResult& r : ordered) {
        const Outcome& o = r.outcome;
        out << r.scenario_id << " [" << to_string(r.mode) << "] "
            << (o.attack_succeeded ? "ATTACK-SUCCEEDED" : "no-attack") << " "
            << (o.utility_met ? "utility-met" : "utility-missed") << " blocks=" << o.blocks
            << " tokens=" << o.tokens << "\n";
    }
    if (argus_rep) out << "\nargus\n" << render_table(*argus_rep, TableFormat::tty);
    if (nodef) out << "\nno_defense\n" << render_table(*nodef, TableFormat::tty);
    return exit_ok;
}

// Re-runs scripted transcripts from their recorded inputs and byte-compares.
// Only scripted oracles replay: a live model cannot be pinned to its earlier
// replies, so http transcripts are refused as a configuration error.
inline int cmd_replay(const ReplayCmd& cmd, std::ostream& out, std::ostream& err) {
    namespace fs = std::filesystem;
    if (cmd.paths.empty()) {
        err << "replay: no transcript paths given\n";
        return exit_config;
    }
    std::vector<std::string> files;
    for (const std::string& p : cmd.paths) {
        if (fs::is_directory(p)) {
            std::vector<std::string> found;
            for (const auto& entry : fs::directory_iterator(p))
                if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
                    found.push_back(entry.path().string());
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else if (fs::is_regular_file(p)) {
            files.push_back(p);
        } else {
            err << "replay: no such transcript: " << p << "\n";
            return exit_config;
        }
    }
    if (files.empty()) {
        err << "replay: no transcripts found\n";
        return exit_config;
    }

    int worst = exit_ok;
    for (const std::string& path : files) {
        std::ifstream in(path);
        std::string stored((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
        std::size_t eol = stored.find('\n');
        json head(json::value_t::discarded);
        if (eol != std::string::npos)
            head = json::parse(stored.substr(0, eol), nullptr, false);
        if (head.is_discarded() || !head.is_object() || head.value("event", "") != "session_start") {
            err << "replay: " << path << ": first line is not a session_start event\n";
            return exit_config;
        }
        std::string oracle = head.value("oracle", "");
        std::string mode_name = head.value("mode", "");
        std::string agent_name = head.value("agent", "");
        if (oracle != "scripted" && oracle != "none") {
            err << "replay: " << path << ": transcript used oracle '" << oracle
                << "'; only scripted-oracle transcripts replay\n";
            return exit_config;
        }

        try {
            Mode mode = mode_from_string(mode_name);
            Scenario sc = load_scenario(head.value("scenario_path", ""));
            std::string rules = head.value("rules_path", "");
            std::unique_ptr<Provider> provider;
            if (!rules.empty())
                provider = std::make_unique<ScriptedProvider>(ScriptedProvider::from_file(rules));
            else
                provider = std::make_unique<ScriptedProvider>(
                    std::vector<ScriptedProvider::Rule>{});
            std::unique_ptr<Agent> agent;
            if (agent_name == "scripted")
                agent = std::make_unique<ScriptedAgent>(sc);
            else if (agent_name == "llm")
                agent = std::make_unique<LlmAgent>(*provider, sc);
            else {
                err << "replay: " << path << ": unknown agent '" << agent_name << "'\n";
                return exit_config;
            }
            RunOptions opt;
            opt.mode = mode;
            opt.scenario_path = head.value("scenario_path", "");
            opt.rules_path = rules;
            opt.max_steps_cap = head.value("max_steps", 15);
            RunResult r = run_session(sc, *agent, *provider, opt);
            std::string fresh = r.jsonl();
            if (fresh == stored) {
                out << "ok " << path << "\n";
            } else {
                // Point at the first diverging line to make drift debuggable.
                std::istringstream a(stored), b(fresh);
                std::string la, lb;
                std::size_t line = 0;
                while (true) {
                    bool ga = static_cast<bool>(std::getline(a, la));
                    bool gb = static_cast<bool>(std::getline(b, lb));
                    ++line;
                    if (!ga && !gb) break;
                    if (!ga || !gb || la != lb) {
                        err << "replay: " << path << ": diverges at line " << line << "\n";
                        break;
                    }
                }
                worst = exit_divergence;
            }
        } catch (const Error& e) {
            err << "replay: " << path << ": " << e.what() << "\n";
            return e.kind() == ErrorKind::io_error ? exit_config : exit_runtime;
        }
    }
    return worst;
}

} // namespace cli
} // namespace argus
