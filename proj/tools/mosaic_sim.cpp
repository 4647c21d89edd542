// Drives headless devices through a gesture script and checks the outcome.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "cli_support.hpp"
#include "mosaic/simclient.hpp"

using namespace mosaic;

int main(int argc, char** argv)
{
    CLI::App app{"Plays a gesture scenario against a running server."};
    std::string server;
    std::vector<DeviceId> devices;
    std::string gestures;
    std::string assertions;
    std::string tracking;
    std::string command_log;
    bool fast = false;
    app.add_option("--server", server, "server address, host:port")->required();
    app.add_option("--devices", devices, "device ids to simulate, e.g. 1,2,3")->required()->delimiter(',');
    app.add_option("--gestures", gestures, "scenario file (JSON)")->required();
    app.add_option("--assert", assertions, "assertions file (JSON)");
    app.add_option("--tracking", tracking, "serve the scenario's motion here instead of its own address");
    app.add_option("--command-log", command_log, "write every received command here (NDJSON)");
    app.add_flag("--fast", fast, "do not wait for gesture times in real time");
    CLI11_PARSE(app, argc, argv);

    cli::setup_logging("mosaic-sim");
    try {
        const auto scenario = sim::Scenario::load(gestures);
        const auto checks = assertions.empty() ? std::vector<sim::Assertion>{} : sim::Assertion::load(assertions);
        sim::RunOptions opt;
        opt.server = net::Endpoint::parse(server);
        opt.devices = devices;
        opt.fast = fast;
        if (!tracking.empty()) {
            opt.tracking_listen = net::Endpoint::parse(tracking);
        }
        const auto report = sim::run_scenario(scenario, opt, checks);
        if (!command_log.empty()) {
            std::ofstream(command_log) << report.command_log;
        }
        std::cout << (report.screens_match ? "PASS" : "FAIL") << "  device screens match the server\n";
        for (const auto& r : report.results) {
            std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.label << " (" << r.detail << ")\n";
        }
        std::cout << scenario.gestures.size() << " gestures in " << report.elapsed_s << " s\n";
        return report.ok() ? 0 : 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
}
