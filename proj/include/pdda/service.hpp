#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pdda/harness.hpp"
#include "pdda/protocol.hpp"

namespace pdda::service {

inline constexpr int kFramesPerSecond = 60;
inline constexpr int kFramesPerState = 3;  // 20 Hz state broadcast
inline constexpr std::size_t kQueueBound = 4;

// Bounded outbound queue. When full, the oldest state message is dropped so a
// stalled client never stalls the simulation; other messages are kept ahead of
// states when possible.
class OutboundQueue {
public:
    explicit OutboundQueue(std::size_t bound = kQueueBound) : bound_(bound) {}

    void push(protocol::Message m);
    std::optional<protocol::Message> pop();
    std::size_t size() const { return items_.size(); }
    std::size_t dropped() const { return dropped_; }

private:
    std::size_t bound_;
    std::deque<protocol::Message> items_;
    std::size_t dropped_ = 0;
};

// Latest-wins single slot for the player's input.
class InputSlot {
public:
    void offer(ActionId a) { slot_.store(static_cast<int>(a), std::memory_order_release); }
    // The most recent offer since the last take, or Idle when there was none.
    ActionId take() {
        const int v = slot_.exchange(kEmpty, std::memory_order_acq_rel);
        return v == kEmpty ? ActionId::Idle : static_cast<ActionId>(v);
    }

private:
    static constexpr int kEmpty = -1;
    std::atomic<int> slot_{kEmpty};
};

struct RatingRow {
    std::string timestamp;  // UTC, ISO 8601
    std::string session;
    std::string opponent_kind;
    int value = 0;
    bool operator==(const RatingRow&) const = default;
};

// Append-only tab-separated ratings file.
class RatingsStore {
public:
    explicit RatingsStore(std::filesystem::path path) : path_(std::move(path)) {}

    void append(const RatingRow& row);  // throws std::runtime_error when unwritable
    static std::vector<RatingRow> read(const std::filesystem::path& path);
    const std::filesystem::path& path() const { return path_; }

private:
    std::mutex mu_;
    std::filesystem::path path_;
};

// One player's live match, independent of the transport. on_text() is called
// from the connection context and tick() from the match loop; the two only
// share the input slot and the rating bookkeeping.
class MatchSession {
public:
    MatchSession(const MatchConfig& config, std::uint64_t seed, std::string id, RatingsStore& ratings);

    // Handles one client text frame and returns the replies to send.
    std::vector<protocol::Message> on_text(std::string_view text);
    // Plays one frame with the latest input; returns the messages to broadcast.
    std::vector<protocol::Message> tick();

    bool started() const { return started_.load(); }
    bool close_requested() const { return close_.load(); }
    bool finished() const { return pdda_.finished(); }
    const std::string& id() const { return id_; }
    PddaSession& pdda() { return pdda_; }

private:
    std::string id_;
    RatingsStore& ratings_;
    PddaSession pdda_;
    InputSlot input_;
    std::atomic<bool> started_{false};
    std::atomic<bool> close_{false};
    std::mutex rating_mu_;
    std::deque<std::string> ratings_owed_;  // opponent kind per unrated round
};

// WebSocket game server: /play for the match, static files under `/`.
class Server {
public:
    // `out` (optional) receives session_<id>.jsonl logs.
    Server(harness::ExperimentConfig config, std::uint64_t seed, std::filesystem::path out = {});
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds to 127.0.0.1 / 0.0.0.0; port 0 picks a free port. Returns the bound port.
    unsigned short listen(unsigned short port, bool loopback_only = false);
    void run();   // serves until stop()
    void stop();  // callable from any thread

    std::int64_t overruns() const;
    int sessions_started() const;

    struct Impl;  // transport details, private to the implementation

private:
    std::shared_ptr<Impl> impl_;
};

}  // namespace pdda::service
