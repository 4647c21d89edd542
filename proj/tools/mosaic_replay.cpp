// Rebuilds the final model state from an event log.

#include <CLI11.hpp>

#include <iostream>

#include "cli_support.hpp"
#include "mosaic/event_log.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Replays a server event log and prints the resulting state as JSON."};
    std::string path;
    app.add_option("log", path, "event log (NDJSON)")->required();
    CLI11_PARSE(app, argc, argv);
    cli::setup_logging("mosaic-replay");
    try {
        std::cout << mosaic::replay_event_log(path).to_json().dump(2) << '\n';
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
