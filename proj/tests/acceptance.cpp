// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "mosaic/event_log.hpp"
#include "mosaic/server.hpp"
#include "mosaic/simclient.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/store_kill.hpp"
#include "support/table.hpp"
#include "support/tempdir.hpp"

using namespace mosaic;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kPi = std::numbers::pi;

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double max_abs_diff(const RotationMatrix& a, const RotationMatrix& b)
{
    double worst = 0;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            worst = std::max(worst, std::abs(a(r, c) - b(r, c)));
        }
    }
    return worst;
}

std::filesystem::path data(const std::string& rel)
{
    return std::filesystem::path(MOSAIC_TEST_DATA) / rel;
}

std::uint16_t free_port()
{
    return net::Listener::bind({"127.0.0.1", 0}).port();
}

// Rotation ----------------------------------------------------------------------------

Verdict rotation()
{
    std::mt19937_64 rng(20261019);
    std::uniform_real_distribution<double> angle(-kPi, kPi);
    double worst_expanded = 0, worst_product = 0;
    const auto t0 = Clock::now();
    for (int i = 0; i < 100'000; ++i) {
        const EulerAngles e(angle(rng), angle(rng), angle(rng));
        const RotationMatrix r = compose_rotation(e);
        worst_expanded = std::max(worst_expanded, max_abs_diff(r, oracle::expanded_rotation(e.alpha(), e.beta(), e.gamma())));
        worst_product = std::max(worst_product, max_abs_diff(r, rot_z(e.alpha()) * rot_y(e.beta()) * rot_x(e.gamma())));
    }
    const double took = seconds_since(t0);
    std::ostringstream d;
    d << "1e5 triples, worst " << worst_expanded << " vs expanded, " << worst_product << " vs product, " << took
      << " s";
    return {worst_expanded <= 1e-12 && worst_product <= 1e-12 && took < 5.0, d.str()};
}

// Transform roundtrip --------------------------------------------------------------

Verdict roundtrip()
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> angle(-kPi, kPi);
    std::uniform_real_distribution<double> coord(-5000, 5000);
    double worst = 0;
    for (int i = 0; i < 10'000; ++i) {
        const DevicePose pose{1, {coord(rng), coord(rng), coord(rng)}, EulerAngles(angle(rng), angle(rng), angle(rng)), 0};
        const Transform t = pose_to_transform(pose);
        const Vec3 p{coord(rng), coord(rng), coord(rng)};
        worst = std::max(worst, (global_to_local(t, local_to_global(t, p)) - p).norm());
        worst = std::max(worst, (local_to_global(t, global_to_local(t, p)) - p).norm());
    }
    std::ostringstream d;
    d << "1e4 poses and points, worst " << worst << " mm";
    return {worst <= 1e-9, d.str()};
}

// Timeline collinearity ----------------------------------------------------------

Verdict collinearity()
{
    using testtable::distance_to_line;
    using testtable::lift;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> coord(-1500, 1500);
    std::uniform_real_distribution<double> height(-200, 200);
    std::uniform_real_distribution<double> yaw(-kPi, kPi);
    std::uniform_real_distribution<double> unit(0, 1);
    double worst = 0;
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
        InteractionModel m;
        const ScreenSpec s1{1280, 800, 216.96, 135.6};
        const ScreenSpec s2{2048, 1536, 197.1, 147.8};
        m.add_device(1, s1);
        m.add_device(2, s2);
        // Devices share the table plane; heading and position are free.
        const double z = height(rng);
        m.on_pose_frame(std::vector{DevicePose{1, {coord(rng), coord(rng), z}, EulerAngles(yaw(rng), 0, 0), 0},
                                    DevicePose{2, {coord(rng), coord(rng), z}, EulerAngles(yaw(rng), 0, 0), 0}});
        m.add_resource(testtable::note(1, 1, {unit(rng) * s1.width_px, unit(rng) * s1.height_px}, 1));
        m.add_resource(testtable::note(2, 2, {unit(rng) * s2.width_px, unit(rng) * s2.height_px}, 2));
        const Vec3 ga = m.state().global_pos.at(1);
        const Vec3 gb = m.state().global_pos.at(2);
        for (const auto& c : m.on_long_clicked(1, 1)) {
            const auto* l = std::get_if<cmd::LineToPoint>(&c.command);
            if (!l) {
                return {false, "unexpected command " + encode(c.command)};
            }
            worst = std::max(worst, distance_to_line(lift(m, c.device_id, {l->x_px, l->y_px}), ga, gb));
            ++checked;
        }
    }
    std::ostringstream d;
    d << "1e3 configurations, " << checked << " segments, worst " << worst << " mm";
    return {checked == 2000 && worst <= 1e-6, d.str()};
}

// Throw routing ----------------------------------------------------------------------

Verdict throw_routing()
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> coord(-3000, 3000);
    std::uniform_real_distribution<double> angle(-kPi, kPi);
    std::uniform_real_distribution<double> tilt(-0.6, 0.6);
    std::uniform_real_distribution<double> speed(-5000, 5000);
    std::uniform_int_distribution<int> count(2, 8);
    const ScreenSpec screen{1280, 800, 216.96, 135.6};
    int agree = 0, none = 0;
    double worst_theta = 0;
    for (int i = 0; i < 10'000; ++i) {
        std::vector<DevicePose> devices;
        const int n = count(rng);
        for (int k = 0; k < n; ++k) {
            devices.push_back({100 + k * 7, {coord(rng), coord(rng), coord(rng) / 10},
                               EulerAngles(angle(rng), tilt(rng), tilt(rng)), 0});
        }
        std::shuffle(devices.begin(), devices.end(), rng);
        const DevicePose& source = devices.front();
        Vec2 v{speed(rng), speed(rng)};
        const double theta = throw_direction(source, v, screen);
        worst_theta = std::max(worst_theta, std::abs(wrap_angle(theta - oracle::throw_heading(source, v, screen))));
        const auto got = select_throw_target(source, devices, theta);
        if (got == oracle::throw_target(source, devices, theta)) {
            ++agree;
        }
        none += got ? 0 : 1;
    }
    // Devices exactly abeam of the throw are never chosen, in every heading.
    int perpendicular_ok = 0;
    const DevicePose src{1, {0, 0, 0}, EulerAngles(0, 0, 0), 0};
    const std::pair<double, Vec3> abeam[] = {
        {0, {0, 250, 0}}, {0, {0, -250, 0}}, {kPi / 2, {250, 0, 0}}, {kPi / 2, {-250, 0, 0}},
        {kPi, {0, 250, 0}}, {kPi, {0, -250, 0}}, {-kPi / 2, {250, 0, 0}}, {-kPi / 2, {-250, 0, 0}}};
    for (const auto& [theta, at] : abeam) {
        std::vector<DevicePose> one{src, {2, at, EulerAngles(0, 0, 0), 0}};
        perpendicular_ok += select_throw_target(src, one, theta) ? 0 : 1;
    }
    std::vector<DevicePose> just_inside{src, {2, {1e-6, 250, 0}, EulerAngles(0, 0, 0), 0}};
    const bool inside_ok = select_throw_target(src, just_inside, 0) == DeviceId{2};

    std::ostringstream d;
    d << agree << "/10000 agree with the brute-force oracle (" << none << " with no target), heading error "
      << worst_theta << " rad, " << perpendicular_ok << "/8 abeam cases return none";
    return {agree == 10'000 && worst_theta <= 1e-12 && perpendicular_ok == 8 && inside_ok, d.str()};
}

// Protocol fuzz ---------------------------------------------------------------------

Verdict protocol_fuzz()
{
    testgen::Rng rng(23);
    int other_errors = 0;
    for (int i = 0; i < 100'000; ++i) {
        const std::string line = testgen::random_fuzz_line(rng);
        for (const auto& decode : std::initializer_list<std::function<void()>>{
                 [&] { (void)decode_device_message(line); }, [&] { (void)decode_server_command(line); },
                 [&] { (void)decode_tracking_message(line); }}) {
            try {
                decode();
            } catch (const DecodeError&) {
            } catch (...) {
                ++other_errors;
            }
        }
    }
    int mismatches = 0;
    for (int i = 0; i < 10'000; ++i) {
        const auto m = testgen::random_device_message(rng);
        const auto c = testgen::random_server_command(rng);
        const auto t = testgen::random_tracking_message(rng);
        mismatches += decode_device_message(encode(m)) == m ? 0 : 1;
        mismatches += decode_server_command(encode(c)) == c ? 0 : 1;
        mismatches += decode_tracking_message(encode(t)) == t ? 0 : 1;
    }
    std::ostringstream d;
    d << "1e5 random lines x 3 decoders, " << other_errors << " non-decode errors; 1e4 roundtrips x 3 kinds, "
      << mismatches << " mismatches";
    return {other_errors == 0 && mismatches == 0, d.str()};
}

// Golden scenario ------------------------------------------------------------------

struct GoldenRun {
    sim::Report report;
    bool replay_matches = false;
};

GoldenRun golden_run()
{
    testtmp::TempDir dir;
    ServerConfig cfg = ServerConfig::load(data("mystery31/config.json"));
    cfg.listen = {"127.0.0.1", 0};
    cfg.db = dir / "mosaic.db";
    cfg.log = dir / "events.ndjson";
    cfg.seed = data("mystery31/seed.json");
    const net::Endpoint tracking{"127.0.0.1", free_port()};
    cfg.tracking = tracking;
    cfg.tracking_mode = tracking::Mode::poll;

    const auto scenario = sim::Scenario::load(data("mystery31/scenario.json"));
    const auto assertions = sim::Assertion::load(data("mystery31/assertions.json"));

    GoldenRun out;
    nlohmann::ordered_json final_state;
    {
        Server server(cfg);
        server.start();
        sim::RunOptions opt;
        opt.server = {"127.0.0.1", server.port()};
        opt.devices = {1, 2, 3};
        opt.fast = true;
        opt.tracking_listen = tracking;
        out.report = sim::run_scenario(scenario, opt, assertions);
        final_state = server.state_json();
        server.request_stop();
        server.wait();
    }
    out.replay_matches = replay_event_log(*cfg.log).to_json().dump() == final_state.dump();
    return out;
}

Verdict golden()
{
    std::vector<GoldenRun> runs;
    double slowest = 0;
    try {
        for (int i = 0; i < 5; ++i) {
            runs.push_back(golden_run());
            slowest = std::max(slowest, runs.back().report.elapsed_s);
        }
    } catch (const std::exception& e) {
        return {false, std::string("run failed: ") + e.what()};
    }
    bool identical = true, screens = true, assertions = true, replay = true;
    std::string first_failure;
    for (const auto& r : runs) {
        identical = identical && r.report.command_log == runs.front().report.command_log;
        screens = screens && r.report.screens_match;
        replay = replay && r.replay_matches;
        for (const auto& a : r.report.results) {
            if (!a.passed && first_failure.empty()) {
                first_failure = a.label + ": " + a.detail;
            }
            assertions = assertions && a.passed;
        }
    }
    const auto lines = std::count(runs.front().report.command_log.begin(), runs.front().report.command_log.end(), '\n');
    std::ostringstream d;
    d << "5 runs, " << lines << " commands, logs " << (identical ? "identical" : "DIFFER") << ", screens "
      << (screens ? "match dumps" : "DIFFER") << ", " << runs.front().report.results.size() << " assertions "
      << (assertions ? "hold" : "fail (" + first_failure + ")") << ", event log replay "
      << (replay ? "matches" : "DIFFERS") << ", slowest " << slowest << " s";
    return {identical && screens && assertions && replay && slowest < 10.0, d.str()};
}

// Fault tolerance ------------------------------------------------------------------

Verdict reconnect_replay()
{
    testtmp::TempDir dir;
    ServerConfig cfg = ServerConfig::load(data("mystery31/config.json"));
    cfg.listen = {"127.0.0.1", 0};
    cfg.db = dir / "mosaic.db";
    cfg.seed = data("mystery31/seed.json");
    Server server(cfg);
    server.start();
    const net::Endpoint at{"127.0.0.1", server.port()};
    const auto frame = [](std::int64_t t, double x2) {
        return TrackingFrame{t, {{101, 0, 0, 0, 0, 0, 0}, {102, x2, 0, 0, 0, 0, 0}, {103, 130, 200, 0, 0, 0, 0}}};
    };
    server.push_frame(frame(0, 260));

    const ScreenSpec tablet{1280, 800, 216.96, 135.6};
    sim::DeviceClient c1(at, 1, tablet), c2(at, 2, tablet);
    c1.connect();
    c2.connect();
    c1.dump();
    c2.dump();
    c1.long_click(4);  // timeline on: segments on every device
    c2.click(19);      // highlights across devices
    c1.dump();
    const auto before = c2.dump();

    // Drop device 2 without ceremony, then change what it should show.
    c2.disconnect();
    while (true) {
        const auto on = server.online_devices();
        if (std::find(on.begin(), on.end(), 2) == on.end()) {
            break;
        }
        std::this_thread::sleep_for(2ms);
    }
    c1.flick(7, {3000, 0});  // lands on 2
    c1.click(1);             // moves the highlight
    server.push_frame(frame(50, 300));
    c1.dump();

    sim::DeviceClient back(at, 2, tablet);
    back.connect();
    const auto after = back.dump();
    const bool restored = back.screen().view() == after.view;
    const bool changed = !(after.view == before.view) && back.screen().shows(7);
    server.request_stop();
    server.wait();
    std::ostringstream d;
    d << "reconnected screen " << (restored ? "equals" : "DIFFERS FROM") << " the server view ("
      << after.view.notes.size() << " notes, " << after.view.point_lines.size() << " segments)";
    return {restored && changed, d.str()};
}

Verdict store_kill()
{
    int violations = 0, killed = 0;
    std::string first;
    for (int round = 0; round < 5; ++round) {
        testtmp::TempDir dir;
        const auto out = storekill::kill_writer(dir / "kill.db", std::chrono::milliseconds(900 + 53 * round));
        killed += out.killed ? 1 : 0;
        violations += static_cast<int>(out.violations.size());
        if (first.empty() && !out.violations.empty()) {
            first = out.violations.front();
        }
    }
    std::ostringstream d;
    d << "5 SIGKILLs during write-behind, " << violations << " torn or lost placements" << (first.empty() ? "" : ": " + first);
    return {killed == 5 && violations == 0, d.str()};
}

}  // namespace

int main()
{
    spdlog::set_level(spdlog::level::err);
    // The store check forks, so it runs before any thread exists.
    const Verdict kill = store_kill();

    struct Criterion {
        const char* name;
        std::function<Verdict()> run;
    };
    const Criterion criteria[] = {
        {"rotation", rotation},
        {"transform roundtrip", roundtrip},
        {"cross-device line collinearity", collinearity},
        {"throw routing oracle", throw_routing},
        {"protocol fuzz", protocol_fuzz},
        {"golden scenario mystery-31", golden},
        {"fault tolerance", [&] {
             Verdict v = reconnect_replay();
             return Verdict{v.pass && kill.pass, v.detail + "; " + kill.detail};
         }},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failed += v.pass ? 0 : 1;
        std::cout << (v.pass ? "PASS" : "FAIL") << "  " << c.name << "  (" << v.detail << ")" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
