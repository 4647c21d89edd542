#include <doctest.h>

#include <atomic>
#include <thread>

#include "mosaic/tracking.hpp"

using namespace mosaic;
using namespace mosaic::tracking;
using namespace std::chrono_literals;

namespace {

MotionScript two_keyframes()
{
    return MotionScript::from_json(nlohmann::json::parse(R"({
        "rate_hz": 60, "loop": false,
        "devices": {
          "1": [{"t_ms": 0, "x_mm": 0, "y_mm": 0, "z_mm": 0, "roll_deg": 0, "pitch_deg": 0, "yaw_deg": 170},
                {"t_ms": 1000, "x_mm": 100, "y_mm": 0, "z_mm": 0, "roll_deg": 0, "pitch_deg": 0, "yaw_deg": -170}],
          "2": [{"t_ms": 0, "x_mm": 500, "y_mm": 0, "z_mm": 0, "roll_deg": 0, "pitch_deg": 0, "yaw_deg": 0}],
          "3": [{"t_ms": 0, "x_mm": 0, "y_mm": 400, "z_mm": 0, "roll_deg": 10, "pitch_deg": 0, "yaw_deg": 0}]
        }})"));
}

FrameProvider constant_frame(std::int64_t bodies)
{
    auto t = std::make_shared<std::atomic<std::int64_t>>(0);
    return [t, bodies] {
        TrackingFrame f{t->fetch_add(1), {}};
        for (std::int64_t i = 0; i < bodies; ++i) {
            f.bodies.push_back(TrackedBody{i, 10.0 * i, 0, 0, 0, 0, 0});
        }
        return f;
    };
}

IngestOptions options_for(std::uint16_t port, Mode mode)
{
    IngestOptions o;
    o.source = net::Endpoint{"127.0.0.1", port};
    o.mode = mode;
    o.poll_interval = 1ms;
    o.reconnect_backoff = 100ms;
    return o;
}

template <class Pred>
bool eventually(Pred pred, std::chrono::milliseconds limit = 3000ms)
{
    const auto until = std::chrono::steady_clock::now() + limit;
    while (std::chrono::steady_clock::now() < until) {
        if (pred()) {
            return true;
        }
        std::this_thread::sleep_for(5ms);
    }
    return pred();
}

}  // namespace

TEST_SUITE("tracking")
{
    TEST_CASE("interpolation hits keyframes exactly")
    {
        const auto s = two_keyframes();
        const auto at0 = interpolate(s, 0);
        REQUIRE(at0.size() == 3);
        CHECK(at0[0] == TrackedBody{1, 0, 0, 0, 0, 0, 170});
        const auto at1000 = interpolate(s, 1000);
        CHECK(at1000[0] == TrackedBody{1, 100, 0, 0, 0, 0, -170});
        CHECK(at1000[2].roll_deg == 10);
    }

    TEST_CASE("positions are linear between keyframes")
    {
        const auto mid = interpolate(two_keyframes(), 500);
        CHECK(mid[0].x_mm == 50.0);
        CHECK(mid[0].y_mm == 0.0);
        CHECK(interpolate(two_keyframes(), 250)[0].x_mm == doctest::Approx(25.0).epsilon(1e-15));
    }

    TEST_CASE("angles take the shortest arc")
    {
        CHECK(interpolate(two_keyframes(), 500)[0].yaw_deg == 180.0);
        CHECK(lerp_angle_deg(170, -170, 0.5) == 180.0);
        CHECK(lerp_angle_deg(-170, 170, 0.5) == 180.0);
        CHECK(lerp_angle_deg(10, 50, 0.25) == 20.0);
        CHECK(lerp_angle_deg(-10, 10, 0.5) == 0.0);
        CHECK(lerp_angle_deg(170, -170, 0.25) == 175.0);
        CHECK(lerp_angle_deg(170, -170, 0.75) == -175.0);
    }

    TEST_CASE("past the end a body holds, or the script wraps when looping")
    {
        auto s = two_keyframes();
        CHECK(interpolate(s, 5000)[0].x_mm == 100.0);
        s.loop = true;
        CHECK(interpolate(s, 1500)[0].x_mm == 50.0);
        CHECK(interpolate(s, 2250)[0].x_mm == doctest::Approx(25.0));
    }

    TEST_CASE("before the first keyframe a body holds its first pose")
    {
        CHECK(interpolate(two_keyframes(), -200)[0].x_mm == 0.0);
    }

    TEST_CASE("invalid scripts are refused")
    {
        using nlohmann::json;
        CHECK_THROWS_AS(MotionScript::from_json(json::parse(R"({"rate_hz": 0, "devices": {}})")), ScriptError);
        CHECK_THROWS_AS(MotionScript::from_json(json::parse(R"({"rate_hz": 500, "devices": {}})")), ScriptError);
        CHECK_THROWS_AS(MotionScript::from_json(json::parse(R"({"rate_hz": 30})")), ScriptError);
        CHECK_THROWS_AS(MotionScript::from_json(json::parse(R"({"devices": {"x": []}})")), ScriptError);
        CHECK_THROWS_AS(MotionScript::from_json(json::parse(R"({"devices": {"1": []}})")), ScriptError);
        CHECK_THROWS_AS(MotionScript::from_json(json::parse(R"({"devices": {"1": [
            {"t_ms": 5, "x_mm": 0, "y_mm": 0, "z_mm": 0, "roll_deg": 0, "pitch_deg": 0, "yaw_deg": 0},
            {"t_ms": 5, "x_mm": 0, "y_mm": 0, "z_mm": 0, "roll_deg": 0, "pitch_deg": 0, "yaw_deg": 0}]}})")),
                        ScriptError);
        CHECK_THROWS_AS(MotionScript::from_json(json::parse(R"({"devices": {"1": [
            {"t_ms": 5, "x_mm": 0, "y_mm": 0, "z_mm": 0, "roll_deg": 0, "pitch_deg": 0}]}})")),
                        ScriptError);
        CHECK_THROWS_AS(MotionScript::load("/nonexistent/script.json"), ScriptError);
    }

    TEST_CASE("body poses convert to radians")
    {
        const DevicePose p = pose_from_body(TrackedBody{4, 1, 2, 3, 90, 0, 180}, 7, 33);
        CHECK(p.device_id == 7);
        CHECK(p.frame_time_ms == 33);
        CHECK(p.center == Vec3{1, 2, 3});
        CHECK(p.angles.alpha() == doctest::Approx(std::numbers::pi));
        CHECK(p.angles.gamma() == doctest::Approx(std::numbers::pi / 2));
    }

    TEST_CASE("poll returns one frame with every body, in time order")
    {
        TrackingSource source({"127.0.0.1", 0}, Mode::poll, 60, constant_frame(3));
        TrackingClient client(options_for(source.port(), Mode::poll));
        client.start();
        std::vector<TrackingFrame> seen;
        REQUIRE(eventually([&] {
            while (auto f = client.frames().try_pop()) {
                seen.push_back(*f);
            }
            return seen.size() >= 2;
        }));
        client.stop();
        for (const auto& f : seen) {
            CHECK(f.bodies.size() == 3);
        }
        for (std::size_t i = 1; i < seen.size(); ++i) {
            CHECK(seen[i].t_ms >= seen[i - 1].t_ms);
        }
    }

    TEST_CASE("a constant source yields identical consecutive poses")
    {
        TrackingSource source({"127.0.0.1", 0}, Mode::poll, 60, [] {
            return TrackingFrame{0, {TrackedBody{1, 5, 6, 7, 1, 2, 3}}};
        });
        TrackingClient client(options_for(source.port(), Mode::poll));
        client.start();
        std::vector<TrackingFrame> seen;
        REQUIRE(eventually([&] {
            while (auto f = client.frames().try_pop()) {
                seen.push_back(*f);
            }
            return seen.size() >= 3;
        }));
        client.stop();
        CHECK(seen[0] == seen[1]);
        CHECK(seen[1] == seen[2]);
    }

    TEST_CASE("streaming at 60 Hz delivers about 60 frames a second")
    {
        TrackingSource source({"127.0.0.1", 0}, Mode::stream, 60, constant_frame(1));
        TrackingClient client(options_for(source.port(), Mode::stream));
        client.start();
        REQUIRE(eventually([&] { return client.frames_received() > 2; }));
        const auto t0 = std::chrono::steady_clock::now();
        const auto n0 = client.frames_received();
        std::this_thread::sleep_until(t0 + 1s);
        const auto n1 = client.frames_received();
        client.stop();
        const auto got = static_cast<long>(n1 - n0);
        CHECK(got >= 58);
        CHECK(got <= 62);
    }

    TEST_CASE("a slow consumer sees fresh frames and the queue stays bounded")
    {
        TrackingSource source({"127.0.0.1", 0}, Mode::stream, 120, constant_frame(1));
        auto opts = options_for(source.port(), Mode::stream);
        opts.queue_capacity = 4;
        TrackingClient client(opts);
        client.start();
        REQUIRE(eventually([&] { return client.frames_received() > 0; }));
        std::int64_t last_seen = -1;
        for (int i = 0; i < 8; ++i) {
            std::this_thread::sleep_for(100ms);
            const auto f = client.frames().pop_latest();
            REQUIRE(f.has_value());
            CHECK(f->t_ms > last_seen);
            // Counter source: t_ms equals frames sent so far, so the freshest
            // frame sits within a couple of periods of the producer.
            CHECK(static_cast<std::int64_t>(source.frames_sent()) - f->t_ms <= 3);
            last_seen = f->t_ms;
            CHECK(client.frames().size() == 0);
        }
        client.stop();
        CHECK(client.frames().high_water() <= 4);
        CHECK(client.frames().dropped() > 0);
    }

    TEST_CASE("losing the source is reported and the client reconnects after a restart")
    {
        std::mutex m;
        std::vector<IngestEvent> events;
        auto source = std::make_unique<TrackingSource>(net::Endpoint{"127.0.0.1", 0}, Mode::poll, 60,
                                                       constant_frame(2));
        const auto port = source->port();
        TrackingClient client(options_for(port, Mode::poll), [&](IngestEvent e, const std::string&) {
            std::lock_guard lock(m);
            events.push_back(e);
        });
        client.start();
        REQUIRE(eventually([&] { return client.frames_received() > 5; }));
        source.reset();
        REQUIRE(eventually([&] { return client.connection_losses() > 0; }));
        {
            std::lock_guard lock(m);
            CHECK(std::find(events.begin(), events.end(), IngestEvent::ConnectionLost) != events.end());
        }
        const auto before = client.frames_received();
        std::int64_t last = -1;
        while (auto f = client.frames().try_pop()) {
            last = f->t_ms;
        }
        // The restarted source's clock begins again at zero.
        source = std::make_unique<TrackingSource>(net::Endpoint{"127.0.0.1", port}, Mode::poll, 60, constant_frame(2));
        REQUIRE(eventually([&] { return client.frames_received() > before + 5; }));
        client.stop();
        CHECK(client.connects() >= 2);
        while (auto f = client.frames().try_pop()) {
            CHECK(f->t_ms >= last);
            last = f->t_ms;
        }
    }

    TEST_CASE("a silent source times out")
    {
        auto listener = net::Listener::bind({"127.0.0.1", 0});
        std::atomic<bool> done{false};
        std::thread mute([&] {
            std::vector<net::Socket> held;
            while (!done) {
                if (auto s = listener.accept(50ms)) {
                    held.push_back(std::move(*s));
                }
            }
        });
        auto opts = options_for(listener.port(), Mode::poll);
        opts.timeout = 100ms;
        std::atomic<int> timeouts{0};
        TrackingClient client(opts, [&](IngestEvent e, const std::string&) {
            timeouts += e == IngestEvent::Timeout ? 1 : 0;
        });
        client.start();
        CHECK(eventually([&] { return timeouts.load() > 0; }));
        client.stop();
        done = true;
        mute.join();
        CHECK(client.frames_received() == 0);
    }

    TEST_CASE("frames that go back in time on one connection are dropped")
    {
        auto n = std::make_shared<std::atomic<int>>(0);
        TrackingSource source({"127.0.0.1", 0}, Mode::poll, 60, [n] {
            const int k = n->fetch_add(1);
            return TrackingFrame{k % 2 == 0 ? 100 + k : 0, {}};
        });
        TrackingClient client(options_for(source.port(), Mode::poll));
        client.start();
        std::vector<std::int64_t> ts;
        REQUIRE(eventually([&] {
            while (auto f = client.frames().try_pop()) {
                ts.push_back(f->t_ms);
            }
            return ts.size() >= 4;
        }));
        client.stop();
        CHECK(std::is_sorted(ts.begin(), ts.end()));
        for (auto t : ts) {
            CHECK(t >= 100);
        }
    }

    TEST_CASE("update makes every later poll see the change")
    {
        auto value = std::make_shared<std::int64_t>(1);
        TrackingSource source({"127.0.0.1", 0}, Mode::poll, 60, [value] { return TrackingFrame{*value, {}}; });
        auto opts = options_for(source.port(), Mode::poll);
        opts.poll_interval = 0ms;
        TrackingClient client(opts);
        client.start();
        REQUIRE(eventually([&] { return client.frames_received() > 3; }));
        for (std::int64_t step = 2; step < 20; ++step) {
            const auto n = source.update([&] { *value = step; });
            // Poll n+1 was answered after the change; poll n+2 proves its frame was queued.
            REQUIRE(source.wait_for_polls(n + 2, 2s));
            const auto f = client.frames().pop_latest();
            REQUIRE(f.has_value());
            CHECK(f->t_ms == step);
        }
        client.stop();
    }
}
