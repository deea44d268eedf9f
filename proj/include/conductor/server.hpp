#pragma once

#include <cstdint>
#include <memory>
#include <string>

namespace conductor {

/// HTTP + WebSocket front end over a set of sessions.
///
///   POST /session                    -> {"id": "..."}
///   POST /session/{id}/command       -> {"events": [{event, epoch, payload}, ...]}
///   GET  /session/{id}/state         -> session state JSON
///   GET  /session/{id}/frame.png     -> PNG of the current epoch (X-Epoch header)
///   WS   /session/{id}/stream        -> envelopes {event, epoch, payload} as text;
///                                       a frame envelope is followed by its PNG
///                                       as one binary message. Text messages
///                                       sent by the client are run as commands.
class Server {
public:
    /// Binds immediately; port 0 picks a free port.
    Server(const std::string& address, std::uint16_t port);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    std::uint16_t port() const;
    /// Accepts connections until stop() is called.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace conductor
