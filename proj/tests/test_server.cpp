#include <doctest.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <thread>

#include "conductor/server.hpp"
#include "json.hpp"

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

struct Running {
    conductor::Server server{"127.0.0.1", 0};
    std::thread thread{[this] { server.run(); }};
    ~Running() {
        server.stop();
        thread.join();
    }
};

http::response<http::string_body> request(std::uint16_t port, http::verb verb, const std::string& target,
                                          const std::string& body = {}) {
    net::io_context io;
    tcp::socket socket(io);
    socket.connect({net::ip::make_address("127.0.0.1"), port});
    http::request<http::string_body> req{verb, target, 11};
    req.set(http::field::host, "localhost");
    req.set(http::field::content_type, "application/json");
    req.body() = body;
    req.prepare_payload();
    http::write(socket, req);
    beast::flat_buffer buffer;
    http::response<http::string_body> res;
    http::read(socket, buffer, res);
    beast::error_code ec;
    socket.shutdown(tcp::socket::shutdown_both, ec);
    return res;
}

std::string command(const json& c) { return c.dump(); }

const json kLoad = {{"type", "loadDataset"}, {"synthetic", {{"preset", 16}}}, {"seed", 2},
                    {"camera", {{"width", 24}, {"height", 24}, {"eye", {8, -40, 8}}, {"target", {8, 8, 8}}, {"up", {0, 0, 1}}}}};

} // namespace

TEST_CASE("HTTP routes") {
    Running r;
    const std::uint16_t port = r.server.port();
    REQUIRE(port != 0);

    auto created = request(port, http::verb::post, "/session");
    CHECK(created.result() == http::status::created);
    const std::string id = json::parse(created.body())["id"];
    const std::string base = "/session/" + id;

    CHECK(request(port, http::verb::get, "/session/nope/state").result() == http::status::not_found);
    CHECK(request(port, http::verb::get, "/elsewhere").result() == http::status::not_found);
    CHECK(request(port, http::verb::get, base + "/frame.png").result() == http::status::conflict);

    auto loaded = request(port, http::verb::post, base + "/command", command(kLoad));
    CHECK(loaded.result() == http::status::ok);
    const json events = json::parse(loaded.body())["events"];
    REQUIRE(events.size() == 1);
    CHECK(events[0]["event"] == "state");
    CHECK(events[0]["epoch"] == 1);

    auto bad = request(port, http::verb::post, base + "/command", "{not json");
    CHECK(bad.result() == http::status::bad_request);
    auto unknown = request(port, http::verb::post, base + "/command", command({{"type", "bogus"}}));
    CHECK(unknown.result() == http::status::bad_request);
    CHECK(json::parse(unknown.body())["events"][0]["event"] == "error");

    auto state = request(port, http::verb::get, base + "/state");
    CHECK(state.result() == http::status::ok);
    CHECK(json::parse(state.body())["epoch"] == 1);

    auto png = request(port, http::verb::get, base + "/frame.png");
    CHECK(png.result() == http::status::ok);
    CHECK(png[http::field::content_type] == "image/png");
    CHECK(png["X-Epoch"] == "1");
    CHECK(png.body().substr(1, 3) == "PNG");
}

TEST_CASE("WebSocket stream carries commands, envelopes and frames") {
    Running r;
    const std::uint16_t port = r.server.port();
    const std::string id = json::parse(request(port, http::verb::post, "/session").body())["id"];

    net::io_context io;
    websocket::stream<tcp::socket> ws(io);
    ws.next_layer().connect({net::ip::make_address("127.0.0.1"), port});
    ws.handshake("localhost", "/session/" + id + "/stream");

    auto readText = [&] {
        beast::flat_buffer buffer;
        ws.read(buffer);
        REQUIRE(ws.got_text());
        return json::parse(beast::buffers_to_string(buffer.data()));
    };

    ws.text(true);
    ws.write(net::buffer(command(kLoad)));
    CHECK(readText()["event"] == "state");

    // Commands over HTTP are broadcast to stream subscribers too.
    request(port, http::verb::post, "/session/" + id + "/command",
            command({{"type", "setBlendWeights"}, {"weights", {{"wColor", 0.5}}}}));
    CHECK(readText()["event"] == "state");

    ws.text(true);
    ws.write(net::buffer(command({{"type", "requestFrame"}})));
    const json frame = readText();
    CHECK(frame["event"] == "frame");
    CHECK(frame["payload"]["width"] == 24);
    beast::flat_buffer binary;
    ws.read(binary);
    CHECK(!ws.got_text());
    CHECK(beast::buffers_to_string(binary.data()).substr(1, 3) == "PNG");
    const json report = readText();
    CHECK(report["event"] == "report");
    CHECK(report["epoch"] == 1);

    ws.text(true);
    ws.write(net::buffer(std::string("garbage")));
    CHECK(readText()["event"] == "error");
    ws.close(websocket::close_code::normal);
}
