// Scripted tracking source for running the server without motion capture.

#include <CLI11.hpp>

#include <iostream>

#include "cli_support.hpp"
#include "mosaic/tracking.hpp"

using namespace mosaic;

int main(int argc, char** argv)
{
    CLI::App app{"Serves tracking frames interpolated from a motion script."};
    std::string script_path;
    std::string listen;
    std::string mode = "poll";
    app.add_option("--script", script_path, "motion script (JSON)")->required();
    app.add_option("--listen", listen, "host:port to serve on")->required();
    app.add_option("--mode", mode, "poll or stream")->check(CLI::IsMember({"poll", "stream"}));
    CLI11_PARSE(app, argc, argv);

    cli::setup_logging("tracksim");
    const sigset_t stop_signals = cli::block_stop_signals();
    try {
        const auto script = tracking::MotionScript::load(script_path);
        tracking::TrackingSource source(net::Endpoint::parse(listen), tracking::mode_from_string(mode),
                                        script.rate_hz, tracking::script_clock(script));
        std::cout << "listening " << source.port() << std::endl;
        cli::wait_for_stop_signal(stop_signals);
        source.stop();
        spdlog::info("served {} frames", source.frames_sent());
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
