// Coordination server: device sessions, tracking ingest, persistence.

#include <CLI11.hpp>

#include <iostream>

#include "cli_support.hpp"
#include "mosaic/server.hpp"

using namespace mosaic;

int main(int argc, char** argv)
{
    CLI::App app{"Coordinates a set of tracked touch screens sharing one information space."};
    std::string config_path;
    std::string listen;
    std::string tracking;
    std::string mode;
    std::string db;
    std::string log;
    std::string seed;
    std::optional<std::uint16_t> web_bridge;
    app.add_option("--config", config_path, "device registry (JSON)")->required();
    app.add_option("--listen", listen, "device address, host:port (default 127.0.0.1:7300)");
    app.add_option("--tracking", tracking, "tracking source, host:port");
    app.add_option("--tracking-mode", mode, "poll or stream")->check(CLI::IsMember({"poll", "stream"}));
    app.add_option("--db", db, "SQLite database (default mosaic.db)");
    app.add_option("--log", log, "event log, NDJSON");
    app.add_option("--seed", seed, "replace the stored contents with this JSON file");
    app.add_option("--web-bridge", web_bridge, "WebSocket port for browser devices and tracking");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config_invalid;
    }

    cli::setup_logging("mosaicd");
    const sigset_t stop_signals = cli::block_stop_signals();

    std::string why;
    const int code = run_with_exit_codes(
        [&] {
            ServerConfig cfg = ServerConfig::load(config_path);
            try {
                if (!listen.empty()) cfg.listen = net::Endpoint::parse(listen);
                if (!tracking.empty()) cfg.tracking = net::Endpoint::parse(tracking);
            } catch (const std::invalid_argument& e) {
                throw ConfigInvalid(e.what());
            }
            if (!mode.empty()) cfg.tracking_mode = tracking::mode_from_string(mode);
            if (!db.empty()) cfg.db = db;
            if (!log.empty()) cfg.log = log;
            if (!seed.empty()) cfg.seed = seed;
            if (web_bridge) cfg.web_bridge = web_bridge;

            Server server(std::move(cfg));
            server.start();
            std::cout << "listening " << server.port();
            if (server.bridge_port()) {
                std::cout << " bridge " << *server.bridge_port();
            }
            std::cout << std::endl;
            const int sig = cli::wait_for_stop_signal(stop_signals);
            spdlog::info("signal {}, shutting down", sig);
            server.request_stop();
            server.wait();
        },
        &why);
    if (code != exit_ok) {
        spdlog::error("{}", why);
    }
    return code;
}
