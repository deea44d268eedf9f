#include "conductor/server.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <iostream>
#include <list>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <sys/socket.h>

#include "conductor/error.hpp"
#include "conductor/session.hpp"

namespace conductor {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

struct Subscriber {
    explicit Subscriber(tcp::socket socket) : ws(std::move(socket)) {}
    websocket::stream<tcp::socket> ws;
    std::mutex writeMutex;
    std::atomic<bool> alive{true};
};

struct SessionSlot {
    std::mutex mutex;
    Session session;
    std::mutex subscribersMutex;
    std::list<std::shared_ptr<Subscriber>> subscribers;
};

std::string_view targetOf(const http::request<http::string_body>& req) {
    return {req.target().data(), req.target().size()};
}

json envelope(const SessionEvent& e) { return {{"event", e.event}, {"epoch", e.epoch}, {"payload", e.payload}}; }

void send(Subscriber& sub, const std::vector<SessionEvent>& events) {
    if (!sub.alive) return;
    std::lock_guard lock(sub.writeMutex);
    beast::error_code ec;
    for (const SessionEvent& e : events) {
        sub.ws.text(true);
        sub.ws.write(net::buffer(envelope(e).dump()), ec);
        if (!ec && !e.binary.empty()) {
            sub.ws.binary(true);
            sub.ws.write(net::buffer(e.binary), ec);
        }
        if (ec) {
            sub.alive = false;
            return;
        }
    }
}

void broadcast(SessionSlot& slot, const std::vector<SessionEvent>& events) {
    std::vector<std::shared_ptr<Subscriber>> targets;
    {
        std::lock_guard lock(slot.subscribersMutex);
        slot.subscribers.remove_if([](const auto& s) { return !s->alive; });
        targets.assign(slot.subscribers.begin(), slot.subscribers.end());
    }
    for (const auto& sub : targets) send(*sub, events);
}

} // namespace

struct Server::Impl {
    net::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::atomic<bool> stopping{false};
    std::mutex sessionsMutex;
    std::map<std::string, std::shared_ptr<SessionSlot>> sessions;
    std::uint64_t nextId = 1;
    std::mutex threadsMutex;
    std::vector<std::jthread> threads;
    /// Descriptors of open connections, shut down on stop to wake blocked reads.
    std::mutex liveMutex;
    std::set<int> live;

    std::shared_ptr<SessionSlot> find(const std::string& id) {
        std::lock_guard lock(sessionsMutex);
        auto it = sessions.find(id);
        return it == sessions.end() ? nullptr : it->second;
    }

    http::response<http::string_body> respond(const http::request<http::string_body>& req, http::status status,
                                              std::string body, const std::string& type = "application/json") {
        http::response<http::string_body> res{status, req.version()};
        res.set(http::field::content_type, type);
        res.keep_alive(req.keep_alive());
        res.body() = std::move(body);
        res.prepare_payload();
        return res;
    }

    http::response<http::string_body> error(const http::request<http::string_body>& req, http::status status,
                                            const std::string& message) {
        return respond(req, status, json{{"error", message}}.dump());
    }

    /// Splits "/session/{id}/{rest}"; id and rest may be empty.
    static bool parseTarget(std::string_view target, std::string& id, std::string& rest) {
        constexpr std::string_view prefix = "/session";
        if (target.substr(0, prefix.size()) != prefix) return false;
        target.remove_prefix(prefix.size());
        id.clear();
        rest.clear();
        if (target.empty()) return true;
        if (target.front() != '/') return false;
        target.remove_prefix(1);
        const auto slash = target.find('/');
        id = std::string(target.substr(0, slash));
        if (slash != std::string_view::npos) rest = std::string(target.substr(slash + 1));
        return true;
    }

    http::response<http::string_body> route(const http::request<http::string_body>& req) {
        std::string id;
        std::string rest;
        if (!parseTarget(targetOf(req), id, rest)) return error(req, http::status::not_found, "unknown route");

        if (id.empty()) {
            if (req.method() != http::verb::post) return error(req, http::status::method_not_allowed, "use POST");
            std::lock_guard lock(sessionsMutex);
            const std::string newId = "s" + std::to_string(nextId++);
            sessions.emplace(newId, std::make_shared<SessionSlot>());
            return respond(req, http::status::created, json{{"id", newId}}.dump());
        }

        const auto slot = find(id);
        if (!slot) return error(req, http::status::not_found, "no session '" + id + "'");

        if (rest == "command") {
            if (req.method() != http::verb::post) return error(req, http::status::method_not_allowed, "use POST");
            json command;
            try {
                command = json::parse(req.body());
            } catch (const json::exception& e) {
                return error(req, http::status::bad_request, std::string("command: invalid JSON: ") + e.what());
            }
            std::vector<SessionEvent> events;
            {
                std::lock_guard lock(slot->mutex);
                events = slot->session.applyCommand(command);
            }
            broadcast(*slot, events);
            json out = json::array();
            for (const auto& e : events) out.push_back(envelope(e));
            const bool failed = events.size() == 1 && events.front().event == "error";
            return respond(req, failed ? http::status::bad_request : http::status::ok, json{{"events", out}}.dump());
        }
        if (rest == "state") {
            if (req.method() != http::verb::get) return error(req, http::status::method_not_allowed, "use GET");
            std::lock_guard lock(slot->mutex);
            return respond(req, http::status::ok, slot->session.stateJson().dump());
        }
        if (rest == "frame.png") {
            if (req.method() != http::verb::get) return error(req, http::status::method_not_allowed, "use GET");
            FrameResult frame;
            try {
                std::lock_guard lock(slot->mutex);
                frame = slot->session.renderFrame();
            } catch (const std::exception& e) {
                return error(req, http::status::conflict, e.what());
            }
            auto res = respond(req, http::status::ok, std::string(frame.png.begin(), frame.png.end()), "image/png");
            res.set("X-Epoch", std::to_string(frame.epoch));
            return res;
        }
        return error(req, http::status::not_found, "unknown route");
    }

    void serveStream(tcp::socket socket, const http::request<http::string_body>& req, std::shared_ptr<SessionSlot> slot) {
        auto sub = std::make_shared<Subscriber>(std::move(socket));
        beast::error_code ec;
        sub->ws.accept(req, ec);
        if (ec) return;
        {
            std::lock_guard lock(slot->subscribersMutex);
            slot->subscribers.push_back(sub);
        }
        for (;;) {
            beast::flat_buffer buffer;
            sub->ws.read(buffer, ec);
            if (ec) break;
            std::vector<SessionEvent> events;
            try {
                const json command = json::parse(beast::buffers_to_string(buffer.data()));
                std::lock_guard lock(slot->mutex);
                events = slot->session.applyCommand(command);
            } catch (const json::exception& e) {
                std::lock_guard lock(slot->mutex);
                events.push_back({"error", slot->session.epoch(), {{"message", std::string("command: invalid JSON: ") + e.what()}}, {}});
                send(*sub, events);
                continue;
            }
            broadcast(*slot, events);
        }
        sub->alive = false;
    }

    void serveConnection(tcp::socket socket) {
        const int fd = socket.native_handle();
        {
            std::lock_guard lock(liveMutex);
            if (stopping) return;
            live.insert(fd);
        }
        struct Unregister {
            Impl* impl;
            int fd;
            ~Unregister() {
                std::lock_guard lock(impl->liveMutex);
                impl->live.erase(fd);
            }
        } unregister{this, fd};
        beast::flat_buffer buffer;
        beast::error_code ec;
        for (;;) {
            http::request<http::string_body> req;
            http::read(socket, buffer, req, ec);
            if (ec) break;
            if (websocket::is_upgrade(req)) {
                std::string id;
                std::string rest;
                std::shared_ptr<SessionSlot> slot;
                if (parseTarget(targetOf(req), id, rest) && rest == "stream") slot = find(id);
                if (!slot) {
                    http::write(socket, error(req, http::status::not_found, "no stream for '" + std::string(req.target()) + "'"), ec);
                    break;
                }
                serveStream(std::move(socket), req, std::move(slot));
                return;
            }
            auto res = route(req);
            http::write(socket, res, ec);
            if (ec || !res.keep_alive()) break;
        }
        socket.shutdown(tcp::socket::shutdown_send, ec);
    }
};

Server::Server(const std::string& address, std::uint16_t port) : impl_(std::make_unique<Impl>()) {
    const tcp::endpoint endpoint{net::ip::make_address(address), port};
    impl_->acceptor.open(endpoint.protocol());
    impl_->acceptor.set_option(net::socket_base::reuse_address(true));
    impl_->acceptor.bind(endpoint);
    impl_->acceptor.listen();
}

Server::~Server() {
    stop();
    std::lock_guard lock(impl_->threadsMutex);
    impl_->threads.clear();
}

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
    while (!impl_->stopping) {
        tcp::socket socket{impl_->ioc};
        beast::error_code ec;
        impl_->acceptor.accept(socket, ec);
        if (impl_->stopping) break;
        if (ec) continue;
        std::lock_guard lock(impl_->threadsMutex);
        impl_->threads.emplace_back([impl = impl_.get(), s = std::move(socket)]() mutable { impl->serveConnection(std::move(s)); });
    }
}

void Server::stop() {
    if (impl_->stopping.exchange(true)) return;
    // Wake a blocking accept with a throwaway connection.
    beast::error_code ec;
    tcp::socket poke{impl_->ioc};
    poke.connect({net::ip::make_address("127.0.0.1"), port()}, ec);
    std::lock_guard lock(impl_->liveMutex);
    for (int fd : impl_->live) ::shutdown(fd, SHUT_RDWR);
}

} // namespace conductor
