// blendgate: serve the blended gateway, simulate cohorts, analyze event logs.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error, 3 analysis degraded.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "blendgate/analytics.hpp"
#include "blendgate/experiment.hpp"
#include "blendgate/gateway.hpp"
#include "blendgate/simulator.hpp"

namespace fs = std::filesystem;
using namespace blendgate;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;
constexpr int kDegraded = 3;

struct ServeOptions {
    std::string config;
    int port = 8080;
    std::string log_dir = "logs";
};

struct SimulateOptions {
    std::string config;
    std::string out;
};

struct AnalyzeOptions {
    std::vector<std::string> logs;
    std::string config;
    std::string report;
    std::string series_csv;
};

struct RecoverOptions {
    std::string config;
    double tolerance = 0.1;
};

int serve(const ServeOptions& opts) {
    ExperimentConfig config;
    try {
        config = ExperimentConfig::load(opts.config);
    } catch (const ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return kUsage;
    }
    fs::path log_dir = opts.log_dir;
    if (const char* env = std::getenv("BLENDGATE_LOG_DIR"); env && *env) log_dir = env;

    // Signals go to a dedicated waiter thread; block them before any other thread exists.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    try {
        Gateway gateway(config, event_log_path(log_dir, config));
        HttpServer server(gateway);
        int port = 0;
        try {
            port = server.bind("0.0.0.0", opts.port);
        } catch (const Error& e) {
            std::cerr << e.what() << '\n';
            return kRuntime;
        }
        std::cout << "listening on http://0.0.0.0:" << port << "\n"
                  << "event log " << gateway.log_path().string() << std::endl;

        std::thread waiter([&server, signals] {
            int received = 0;
            sigwait(&signals, &received);
            server.stop();
        });
        server.listen();
        // listen() can only return early on failure; wake the waiter so it can be joined.
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
        std::cout << "shutdown, " << gateway.session_count() << " sessions served" << std::endl;
    } catch (const std::exception& e) {
        std::cerr << "serve failed: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}

int simulate_cmd(const SimulateOptions& opts) {
    SimulationConfig config;
    try {
        config = SimulationConfig::load(opts.config);
    } catch (const ConfigError& e) {
        std::cerr << "invalid simulation config: " << e.what() << '\n';
        return kUsage;
    }
    try {
        const auto events = simulate(config);
        write_event_log(opts.out, events);
        std::size_t joins = 0, turns = 0;
        for (const auto& e : events) {
            if (e.event == EventKind::user_joined) ++joins;
            if (e.event == EventKind::user_turn) ++turns;
        }
        std::cout << "wrote " << events.size() << " events to " << opts.out << ": " << joins << " user_joined, "
                  << turns << " user_turn" << std::endl;
    } catch (const std::exception& e) {
        std::cerr << "simulate failed: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}

fs::path engagement_csv_path(const fs::path& retention_path) {
    fs::path out = retention_path;
    out.replace_filename(retention_path.stem().string() + ".engagement" + retention_path.extension().string());
    return out;
}

int analyze(const AnalyzeOptions& opts) {
    std::vector<fs::path> logs;
    for (const auto& path : opts.logs) {
        if (!fs::is_regular_file(path)) {
            std::cerr << "log file not found: " << path << '\n';
            return kUsage;
        }
        logs.emplace_back(path);
    }
    ExperimentConfig config;
    try {
        config = ExperimentConfig::load(opts.config);
    } catch (const ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return kUsage;
    }
    try {
        const EventIndex index(read_log_files(logs));
        const ComparisonReport report = build_report(index, config);
        {
            std::ofstream out(opts.report, std::ios::binary | std::ios::trunc);
            if (!out) throw Error("cannot write " + opts.report);
            out << report_to_json(report).dump(2) << '\n';
        }
        if (!opts.series_csv.empty()) {
            std::ofstream retention(opts.series_csv, std::ios::binary | std::ios::trunc);
            std::ofstream engagement(engagement_csv_path(opts.series_csv), std::ios::binary | std::ios::trunc);
            if (!retention || !engagement) throw Error("cannot write series CSV next to " + opts.series_csv);
            write_retention_csv(retention, report);
            write_engagement_csv(engagement, report);
        }
        for (const auto& row : report.groups) std::cout << format_report_row(row) << '\n';
        return report.any_failed() ? kDegraded : kOk;
    } catch (const std::exception& e) {
        std::cerr << "analyze failed: " << e.what() << '\n';
        return kRuntime;
    }
}

int recover(const RecoverOptions& opts) {
    SimulationConfig config;
    try {
        config = SimulationConfig::load(opts.config);
    } catch (const ConfigError& e) {
        std::cerr << "invalid simulation config: " << e.what() << '\n';
        return kUsage;
    }
    try {
        const RecoveryReport report = recovery_check(config, opts.tolerance);
        std::cout << format_recovery(report);
        for (const auto& row : report.rows) {
            if (!row.estimate) return kDegraded;
        }
        return report.passed() ? kOk : kRuntime;
    } catch (const ConfigError& e) {
        std::cerr << "invalid simulation config: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "recover failed: " << e.what() << '\n';
        return kRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"blendgate: blended chat gateway and A/B analytics"};
    app.require_subcommand(1);

    ServeOptions serve_opts;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP gateway");
    serve_cmd->add_option("--config", serve_opts.config, "Experiment config JSON")->required();
    serve_cmd->add_option("--port", serve_opts.port, "Listen port (0 picks a free port)");
    serve_cmd->add_option("--log-dir", serve_opts.log_dir, "Event log directory (BLENDGATE_LOG_DIR overrides)");

    SimulateOptions sim_opts;
    auto* sim_cmd = app.add_subcommand("simulate", "Write a synthetic event log");
    sim_cmd->add_option("--config", sim_opts.config, "Simulation config JSON")->required();
    sim_cmd->add_option("--out", sim_opts.out, "Output event log")->required();

    AnalyzeOptions analyze_opts;
    auto* analyze_cmd = app.add_subcommand("analyze", "Compute the test-to-control report from event logs");
    analyze_cmd->add_option("--log", analyze_opts.logs, "Event log file(s), read in order")->required();
    analyze_cmd->add_option("--config", analyze_opts.config, "Experiment config JSON")->required();
    analyze_cmd->add_option("--report", analyze_opts.report, "Report JSON output")->required();
    analyze_cmd->add_option("--series-csv", analyze_opts.series_csv,
                            "Retention series CSV; engagement goes to <stem>.engagement<ext>");

    RecoverOptions recover_opts;
    auto* recover_cmd = app.add_subcommand("recover", "Simulate, analyze and check recovered deltas");
    recover_cmd->add_option("--config", recover_opts.config, "Simulation config JSON")->required();
    recover_cmd->add_option("--tolerance", recover_opts.tolerance, "Max |estimate - truth| per delta");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    if (*serve_cmd) return serve(serve_opts);
    if (*sim_cmd) return simulate_cmd(sim_opts);
    if (*analyze_cmd) return analyze(analyze_opts);
    if (*recover_cmd) return recover(recover_opts);
    return kUsage;
}
