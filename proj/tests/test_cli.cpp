#include <chrono>
#include <csignal>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <httplib.h>

#include "blendgate/events.hpp"
#include "test_support.hpp"

extern char** environ;

namespace blendgate {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

const std::string kCli = BLENDGATE_CLI_PATH;

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

/// Runs the CLI with `args`; stdout+stderr go to `output`. Returns the exit code.
int run_cli(const std::string& args, const fs::path& output) {
    const std::string command = "\"" + kCli + "\" " + args + " > \"" + output.string() + "\" 2>&1";
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Json mock_policy(const std::string& model, double cost = 1.0) {
    return Json{{"kind", "single"},
                {"models", Json::array({Json{{"model_id", model},
                                             {"backend", testing::discrete_mock(Json{{"ok", 1.0}})},
                                             {"cost_flops", cost}}})}};
}

Json experiment(double allocation_a = 0.5, double allocation_b = 0.5) {
    return Json{{"experiment_name", "cli"},
                {"seed", 3},
                {"groups", Json::array({Json{{"group_name", "control"}, {"allocation", allocation_a},
                                             {"policy", mock_policy("P")}},
                                        Json{{"group_name", "test"}, {"allocation", allocation_b},
                                             {"policy", mock_policy("Q", 2.2)}}})},
                {"control_group", "control"}};
}

Json simulation(int users = 400, std::uint64_t seed = 5) {
    return Json{{"seed", seed},
                {"horizon_days", 10},
                {"groups", Json::array({Json{{"name", "control"}, {"users", users}, {"R1", 0.5}, {"beta", -0.3},
                                             {"alpha_e", 0.6}, {"gamma_e", -0.3}},
                                        Json{{"name", "test"}, {"users", users}, {"R1", 0.6}, {"beta", -0.1},
                                             {"alpha_e", 0.7}, {"gamma_e", -0.2}, {"cost_flops", 2.2}}})}};
}

TEST(Cli, HelpAndUsage) {
    TempDir dir;
    EXPECT_EQ(run_cli("--help", dir / "out"), 0);
    EXPECT_NE(slurp(dir / "out").find("analyze"), std::string::npos);
    EXPECT_EQ(run_cli("", dir / "out"), 2);
    EXPECT_EQ(run_cli("analyze --log x", dir / "out"), 2);
}

TEST(Cli, ServeRejectsBadAllocation) {
    TempDir dir;
    write(dir / "bad.json", experiment(0.5, 0.4).dump());
    EXPECT_EQ(run_cli("serve --config \"" + (dir / "bad.json").string() + "\" --port 0 --log-dir \"" +
                          dir.path().string() + "\"",
                      dir / "out"),
              2);
    EXPECT_NE(slurp(dir / "out").find("groups.allocation"), std::string::npos);
}

TEST(Cli, ServeAnswersHealthzAndStopsOnSigint) {
    TempDir dir;
    write(dir / "exp.json", experiment().dump());
    const fs::path env_logs = dir / "env-logs";
    const std::string out_path = (dir / "serve.out").string();

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
    const std::string config = (dir / "exp.json").string();
    const std::string flag_logs = (dir / "flag-logs").string();
    std::vector<std::string> args{kCli, "serve", "--config", config, "--port", "0", "--log-dir", flag_logs};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);

    std::vector<std::string> env_strings{"BLENDGATE_LOG_DIR=" + env_logs.string()};
    for (char** e = environ; *e; ++e) env_strings.emplace_back(*e);
    std::vector<char*> envp;
    for (auto& e : env_strings) envp.push_back(e.data());
    envp.push_back(nullptr);

    pid_t pid = 0;
    ASSERT_EQ(posix_spawn(&pid, kCli.c_str(), &actions, nullptr, argv.data(), envp.data()), 0);
    posix_spawn_file_actions_destroy(&actions);

    int port = 0;
    const std::regex listening(R"(listening on http://0\.0\.0\.0:(\d+))");
    for (int i = 0; i < 500 && port == 0; ++i) {
        std::smatch m;
        const std::string text = slurp(out_path);
        if (std::regex_search(text, m, listening)) port = std::stoi(m[1]);
        else std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ASSERT_GT(port, 0) << slurp(out_path);

    httplib::Client client("127.0.0.1", port);
    auto health = client.Get("/v1/healthz");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    auto session = client.Post("/v1/sessions", R"({"user_id":"someone"})", "application/json");
    ASSERT_TRUE(session);
    EXPECT_EQ(session->status, 200);

    kill(pid, SIGINT);
    int status = 0;
    ASSERT_EQ(waitpid(pid, &status, 0), pid);
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 0);

    EXPECT_TRUE(fs::exists(env_logs / "cli.events.jsonl"));
    EXPECT_FALSE(fs::exists(dir / "flag-logs" / "cli.events.jsonl"));
    const auto events = read_log_files({env_logs / "cli.events.jsonl"});
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].user_id, "someone");
}

TEST(Cli, SimulateIsDeterministic) {
    TempDir dir;
    write(dir / "sim.json", simulation().dump());
    const std::string config = " --config \"" + (dir / "sim.json").string() + "\"";
    ASSERT_EQ(run_cli("simulate" + config + " --out \"" + (dir / "a.jsonl").string() + "\"", dir / "out"), 0);
    ASSERT_EQ(run_cli("simulate" + config + " --out \"" + (dir / "b.jsonl").string() + "\"", dir / "out"), 0);
    EXPECT_FALSE(slurp(dir / "a.jsonl").empty());
    EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));

    write(dir / "bad.json", R"({"seed":1,"groups":[]})");
    EXPECT_EQ(run_cli("simulate --config \"" + (dir / "bad.json").string() + "\" --out x", dir / "out"), 2);
}

TEST(Cli, AnalyzeMissingLogIsUsageError) {
    TempDir dir;
    write(dir / "exp.json", experiment().dump());
    EXPECT_EQ(run_cli("analyze --log \"" + (dir / "nope.jsonl").string() + "\" --config \"" +
                          (dir / "exp.json").string() + "\" --report \"" + (dir / "r.json").string() + "\"",
                      dir / "out"),
              2);
}

TEST(Cli, AnalyzeSplitLogsMatchSingleLog) {
    TempDir dir;
    write(dir / "sim.json", simulation().dump());
    write(dir / "exp.json", experiment().dump());
    ASSERT_EQ(run_cli("simulate --config \"" + (dir / "sim.json").string() + "\" --out \"" +
                          (dir / "all.jsonl").string() + "\"",
                      dir / "out"),
              0);
    const std::string all = slurp(dir / "all.jsonl");
    std::size_t cut = all.size() / 3;
    cut = all.find('\n', cut) + 1;
    write(dir / "part1.jsonl", all.substr(0, cut));
    write(dir / "part2.jsonl", all.substr(cut));

    const std::string config = " --config \"" + (dir / "exp.json").string() + "\"";
    ASSERT_EQ(run_cli("analyze --log \"" + (dir / "all.jsonl").string() + "\"" + config + " --report \"" +
                          (dir / "single.json").string() + "\" --series-csv \"" + (dir / "series.csv").string() +
                          "\"",
                      dir / "out"),
              0)
        << slurp(dir / "out");
    EXPECT_NE(slurp(dir / "out").find("test Δζ="), std::string::npos);
    ASSERT_EQ(run_cli("analyze --log \"" + (dir / "part1.jsonl").string() + "\" \"" +
                          (dir / "part2.jsonl").string() + "\"" + config + " --report \"" +
                          (dir / "split.json").string() + "\"",
                      dir / "out"),
              0);
    EXPECT_EQ(slurp(dir / "single.json"), slurp(dir / "split.json"));

    const Json report = Json::parse(slurp(dir / "single.json"));
    EXPECT_EQ(report["control"], "control");
    EXPECT_EQ(report["groups"][0]["flop_ratio"], 1.0);
    EXPECT_EQ(report["groups"][1]["flop_ratio"], 2.2);
    EXPECT_EQ(slurp(dir / "series.csv").rfind("group,k,q\n", 0), 0u);
    EXPECT_EQ(slurp(dir / "series.engagement.csv").rfind("group,t,r\n", 0), 0u);
}

TEST(Cli, AnalyzeDegradedExitsThree) {
    TempDir dir;
    write(dir / "exp.json", experiment().dump());
    // The control cohort never returns, so the retention ratio has no usable points.
    std::string log;
    log += serialize_event({0, "c", "control", std::nullopt, EventKind::user_joined, std::nullopt, std::nullopt}) + "\n";
    log += serialize_event({0, "t", "test", std::nullopt, EventKind::user_joined, std::nullopt, std::nullopt}) + "\n";
    log += serialize_event({90'000, "t", "test", "s", EventKind::user_turn, std::nullopt, 0}) + "\n";
    log += serialize_event({190'000, "t", "test", "s", EventKind::user_turn, std::nullopt, 1}) + "\n";
    write(dir / "log.jsonl", log);
    EXPECT_EQ(run_cli("analyze --log \"" + (dir / "log.jsonl").string() + "\" --config \"" +
                          (dir / "exp.json").string() + "\" --report \"" + (dir / "r.json").string() + "\"",
                      dir / "out"),
              3);
    EXPECT_TRUE(Json::parse(slurp(dir / "r.json"))["groups"][1].contains("error"));
}

TEST(Cli, RecoverExitCodes) {
    TempDir dir;
    write(dir / "sim.json", simulation(300).dump());
    const std::string config = "recover --config \"" + (dir / "sim.json").string() + "\"";
    EXPECT_EQ(run_cli(config + " --tolerance 1000", dir / "out"), 0) << slurp(dir / "out");
    EXPECT_NE(slurp(dir / "out").find("PASS"), std::string::npos);
    EXPECT_EQ(run_cli(config + " --tolerance 0", dir / "out"), 1);
    EXPECT_NE(slurp(dir / "out").find("FAIL"), std::string::npos);
}

}  // namespace
}  // namespace blendgate
