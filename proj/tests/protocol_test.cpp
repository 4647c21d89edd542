#include <doctest.h>

#include <random>

#include "mosaic/protocol.hpp"
#include "support/generators.hpp"

using namespace mosaic;

TEST_SUITE("protocol")
{
    TEST_CASE("encode produces the documented lines")
    {
        CHECK(encode(DeviceMessage{msg::Clicked{7}}) == "{\"type\":\"clicked\",\"resource_id\":7}\n");
        CHECK(encode(ServerCommand{cmd::Highlight{3, true}}) == "{\"type\":\"highlight\",\"resource_id\":3,\"on\":true}\n");
        CHECK(encode(TrackingMessage{track::Poll{}}) == "{\"type\":\"poll\"}\n");
        CHECK(encode(DeviceMessage{msg::Moved{1, 10.5, 20}}) ==
              "{\"type\":\"moved\",\"resource_id\":1,\"x_px\":10.5,\"y_px\":20.0}\n");
        CHECK(encode(ServerCommand{cmd::LineLocal{4, 9, false}}) ==
              "{\"type\":\"line_local\",\"from_resource\":4,\"to_resource\":9,\"on\":false}\n");
    }

    TEST_CASE("decode accepts valid lines")
    {
        const auto m = decode_device_message(R"({"type":"moved","resource_id":1,"x_px":10,"y_px":20})");
        REQUIRE(std::holds_alternative<msg::Moved>(m));
        CHECK(std::get<msg::Moved>(m) == msg::Moved{1, 10.0, 20.0});

        const auto with_newline = decode_device_message("{\"type\":\"clicked\",\"resource_id\":2}\n");
        CHECK(std::get<msg::Clicked>(with_newline).resource_id == 2);

        // Unknown fields are ignored.
        const auto extra = decode_device_message(R"({"type":"clicked","resource_id":2,"pressure":0.4})");
        CHECK(std::get<msg::Clicked>(extra).resource_id == 2);

        const auto hello = decode_device_message(
            R"({"type":"hello","device_id":3,"screen":{"width_px":2048,"height_px":1536,"width_mm":204.8,"height_mm":153.6}})");
        CHECK(std::get<msg::Hello>(hello).screen == ScreenSpec{2048, 1536, 204.8, 153.6});
    }

    TEST_CASE("decode reports typed errors")
    {
        const auto code_of = [](auto&& fn) {
            try {
                fn();
            } catch (const DecodeError& e) {
                return std::optional<DecodeErrorCode>(e.code());
            }
            return std::optional<DecodeErrorCode>();
        };
        CHECK(code_of([] { decode_device_message(R"({"type":"warp"})"); }) == DecodeErrorCode::UnknownType);
        CHECK(code_of([] { decode_device_message(R"({"type":"clicked","resource_id":1)"); }) ==
              DecodeErrorCode::MalformedMessage);
        CHECK(code_of([] { decode_device_message(R"({"type":"clicked"})"); }) == DecodeErrorCode::MalformedMessage);
        CHECK(code_of([] { decode_device_message(R"({"type":"clicked","resource_id":-1})"); }) ==
              DecodeErrorCode::MalformedMessage);
        CHECK(code_of([] { decode_device_message(R"({"type":"clicked","resource_id":1.5})"); }) ==
              DecodeErrorCode::MalformedMessage);
        CHECK(code_of([] { decode_device_message(R"({"type":"moved","resource_id":1,"x_px":"a","y_px":2})"); }) ==
              DecodeErrorCode::MalformedMessage);
        CHECK(code_of([] { decode_device_message(R"([1,2])"); }) == DecodeErrorCode::MalformedMessage);
        CHECK(code_of([] { decode_device_message(""); }) == DecodeErrorCode::MalformedMessage);
        CHECK(code_of([] { decode_device_message("{\"type\":\"clicked\",\"resource_id\":1,\"x\":\"\xff\"}"); }) ==
              DecodeErrorCode::NonUTF8);
        CHECK(code_of([] { decode_server_command(R"({"type":"clicked","resource_id":1})"); }) ==
              DecodeErrorCode::UnknownType);
        CHECK(code_of([] {
                  decode_tracking_message(
                      R"({"type":"frame","t_ms":1,"bodies":[{"id":1,"x_mm":0,"y_mm":0,"z_mm":0,"roll_deg":0,"pitch_deg":0,"yaw_deg":0},{"id":1,"x_mm":0,"y_mm":0,"z_mm":0,"roll_deg":0,"pitch_deg":0,"yaw_deg":0}]})");
              }) == DecodeErrorCode::MalformedMessage);
    }

    TEST_CASE("utf8 validation")
    {
        CHECK(is_valid_utf8("plain"));
        CHECK(is_valid_utf8("caf\xc3\xa9 \xe2\x82\xac \xf0\x9f\x93\x8c"));
        CHECK_FALSE(is_valid_utf8("\xc3"));
        CHECK_FALSE(is_valid_utf8("\xc0\xaf"));          // overlong '/'
        CHECK_FALSE(is_valid_utf8("\xed\xa0\x80"));      // surrogate
        CHECK_FALSE(is_valid_utf8("\xf4\x90\x80\x80"));  // past U+10FFFF
    }

    TEST_CASE("roundtrip over random variants")
    {
        std::mt19937_64 rng(42);
        for (int i = 0; i < 2000; ++i) {
            const DeviceMessage m = testgen::random_device_message(rng);
            REQUIRE(decode_device_message(encode(m)) == m);
            const ServerCommand c = testgen::random_server_command(rng);
            REQUIRE(decode_server_command(encode(c)) == c);
            const TrackingMessage t = testgen::random_tracking_message(rng);
            REQUIRE(decode_tracking_message(encode(t)) == t);
        }
    }

    TEST_CASE("framing survives arbitrary chunk boundaries")
    {
        std::mt19937_64 rng(5);
        for (int round = 0; round < 200; ++round) {
            std::vector<ServerCommand> sent;
            std::string stream;
            const int n = std::uniform_int_distribution<int>(1, 30)(rng);
            for (int i = 0; i < n; ++i) {
                sent.push_back(testgen::random_server_command(rng));
                stream += encode(sent.back());
            }
            LineBuffer buf;
            std::vector<ServerCommand> got;
            std::size_t pos = 0;
            while (pos < stream.size()) {
                const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
                buf.feed(std::string_view(stream).substr(pos, len));
                pos += len;
                while (auto line = buf.next_line()) {
                    got.push_back(decode_server_command(*line));
                }
            }
            REQUIRE(got == sent);
            REQUIRE(buf.pending_bytes() == 0);
        }
    }

    TEST_CASE("line buffer rejects runaway lines")
    {
        LineBuffer buf(16);
        buf.feed("short\n");
        CHECK(buf.next_line() == std::string("short"));
        CHECK_THROWS_AS(buf.feed(std::string(40, 'x')), DecodeError);
    }

    TEST_CASE("random bytes never escape as anything but DecodeError")
    {
        std::mt19937_64 rng(9);
        int decoded = 0;
        for (int i = 0; i < 5000; ++i) {
            const std::string line = testgen::random_fuzz_line(rng);
            try {
                decode_device_message(line);
                ++decoded;
            } catch (const DecodeError&) {
            }
            try {
                decode_server_command(line);
            } catch (const DecodeError&) {
            }
            try {
                decode_tracking_message(line);
            } catch (const DecodeError&) {
            }
        }
        CHECK(decoded >= 0);
    }
}
