#include "pdda/service.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast.hpp>

namespace pdda::service {

namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using protocol::Message;

// ---------------------------------------------------------------- queue

void OutboundQueue::push(Message m) {
    if (bound_ == 0) {
        ++dropped_;
        return;
    }
    if (items_.size() >= bound_) {
        auto victim = std::find_if(items_.begin(), items_.end(),
                                   [](const Message& x) { return std::holds_alternative<protocol::State>(x); });
        if (victim == items_.end()) victim = items_.begin();
        items_.erase(victim);
        ++dropped_;
    }
    items_.push_back(std::move(m));
}

std::optional<Message> OutboundQueue::pop() {
    if (items_.empty()) return std::nullopt;
    Message m = std::move(items_.front());
    items_.pop_front();
    return m;
}

// ---------------------------------------------------------------- ratings

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

void RatingsStore::append(const RatingRow& row) {
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app);
    out << row.timestamp << '\t' << row.session << '\t' << row.opponent_kind << '\t' << row.value << '\n';
    out.flush();
    if (!out) throw std::runtime_error("cannot append to ratings file " + path_.string());
}

std::vector<RatingRow> RatingsStore::read(const fs::path& path) {
    std::vector<RatingRow> rows;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        RatingRow r;
        std::string value;
        if (!std::getline(fields, r.timestamp, '\t') || !std::getline(fields, r.session, '\t') ||
            !std::getline(fields, r.opponent_kind, '\t') || !std::getline(fields, value))
            throw std::runtime_error("malformed ratings row: " + line);
        r.value = std::stoi(value);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------- match session

MatchSession::MatchSession(const MatchConfig& config, std::uint64_t seed, std::string id, RatingsStore& ratings)
    : id_(std::move(id)), ratings_(ratings), pdda_(config, seed, false) {}

std::vector<Message> MatchSession::on_text(std::string_view text) {
    Message m;
    try {
        m = protocol::decode_message(text);
    } catch (const protocol::ParseError& e) {
        return {protocol::Error{e.code(), e.what()}};
    }
    if (const auto* h = std::get_if<protocol::Hello>(&m)) {
        if (started_) return {protocol::Error{"unexpected_hello", "handshake already completed"}};
        if (h->version != protocol::kVersion) {
            close_ = true;
            return {protocol::Error{"version_mismatch",
                                    "server speaks protocol version " + std::to_string(protocol::kVersion)}};
        }
        started_ = true;
        return {};
    }
    if (!started_) return {protocol::Error{"not_started", "send hello first"}};
    if (const auto* in = std::get_if<protocol::Input>(&m)) {
        input_.offer(in->action);
        return {};
    }
    if (const auto* r = std::get_if<protocol::Rating>(&m)) {
        std::string kind;
        {
            std::lock_guard lock(rating_mu_);
            if (ratings_owed_.empty()) return {protocol::Error{"unexpected_rating", "no round awaits a rating"}};
            kind = std::move(ratings_owed_.front());
            ratings_owed_.pop_front();
        }
        ratings_.append({utc_now(), id_, kind, r->value});
        return {};
    }
    return {protocol::Error{"unexpected_type", "clients may send hello, input and rating"}};
}

std::vector<Message> MatchSession::tick() {
    if (!started_ || pdda_.finished()) return {};
    pdda_.advance(input_.take());
    std::vector<Message> out;
    const StepOutcome& o = pdda_.last_outcome();
    if (o.round_over) {
        {
            std::lock_guard lock(rating_mu_);
            ratings_owed_.emplace_back(agent_kind_name(pdda_.opponent().kind));
        }
        out.push_back(protocol::RoundEnd{o.winner, {o.next.p1.hp, o.next.p2.hp}, o.next.frame});
    }
    if (pdda_.frame() % kFramesPerState == 0 || pdda_.finished())
        out.push_back(protocol::state_message(pdda_.state(), pdda_.opponent().version));
    return out;
}

// ---------------------------------------------------------------- live loop

namespace {

// Runs the 60 fps match loop and the trainer in their own threads.
class LiveLoop {
public:
    using Sink = std::function<void(std::vector<Message>)>;

    LiveLoop(std::shared_ptr<MatchSession> session, std::int64_t budget, Sink sink, std::atomic<std::int64_t>& overruns)
        : session_(std::move(session)), budget_(budget), sink_(std::move(sink)), overruns_(overruns) {
        match_ = std::thread([this] { match_loop(); });
        trainer_ = std::thread([this] { trainer_loop(); });
    }

    ~LiveLoop() {
        {
            std::lock_guard lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        match_.join();
        trainer_.join();
    }

private:
    void match_loop() {
        using clock = std::chrono::steady_clock;
        const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / kFramesPerSecond));
        auto next = clock::now();
        while (!session_->finished()) {
            const auto t0 = clock::now();
            auto msgs = session_->tick();
            const auto spent = clock::now() - t0;
            {
                std::lock_guard lock(mu_);
                ++live_frames_;
            }
            cv_.notify_all();
            if (!msgs.empty()) sink_(std::move(msgs));
            if (spent > period) {
                const auto n = ++overruns_;
                if (n == 1 || n % 600 == 0)
                    std::cerr << "service: frame overrun of "
                              << std::chrono::duration<double, std::milli>(spent).count() << " ms (" << n
                              << " so far)\n";
            }
            next += period;
            const auto now = clock::now();
            if (now > next + period) next = now;  // fell behind: do not burst to catch up
            std::unique_lock lock(mu_);
            if (cv_.wait_until(lock, next, [this] { return stop_; })) return;
        }
        {
            std::lock_guard lock(mu_);
            done_ = true;
        }
        cv_.notify_all();
    }

    void trainer_loop() {
        std::int64_t trained = 0;
        while (true) {
            std::int64_t owed = 0;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return stop_ || done_ || live_frames_ * budget_ > trained; });
                if (stop_ || done_) return;
                owed = live_frames_ * budget_ - trained;
            }
            const std::int64_t n = std::min(owed, budget_);
            session_->pdda().trainer().tick(n);
            trained += n;
        }
    }

    std::shared_ptr<MatchSession> session_;
    std::int64_t budget_;
    Sink sink_;
    std::atomic<std::int64_t>& overruns_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool stop_ = false;
    bool done_ = false;
    std::int64_t live_frames_ = 0;
    std::thread match_;
    std::thread trainer_;
};

class WsConnection;

}  // namespace

struct Server::Impl {
    harness::ExperimentConfig config;
    std::uint64_t seed;
    fs::path out;
    RatingsStore ratings;
    std::atomic<std::int64_t> overruns{0};
    std::atomic<int> sessions{0};
    std::weak_ptr<WsConnection> active;                  // io thread only
    std::vector<std::weak_ptr<WsConnection>> connections;  // io thread only
    net::io_context ioc{1};
    tcp::acceptor acceptor{ioc};

    Impl(harness::ExperimentConfig c, std::uint64_t s, fs::path o)
        : config(std::move(c)), seed(s), out(std::move(o)), ratings(config.service.ratings_file) {}

    void do_accept();
};

namespace {

class WsConnection : public std::enable_shared_from_this<WsConnection> {
public:
    WsConnection(tcp::socket&& socket, Server::Impl& server) : ws_(std::move(socket)), server_(server) {}
    ~WsConnection() { shutdown(); }

    void run(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
    }

    // Joins the loop threads, aborts an unfinished match and writes its log.
    void shutdown() {
        loop_.reset();
        if (!session_ || log_written_) return;
        log_written_ = true;
        if (!session_->finished()) session_->pdda().abort("player disconnected");
        if (!server_.out.empty()) {
            std::error_code ec;
            fs::create_directories(server_.out, ec);
            std::ofstream f(server_.out / (session_->id() + ".jsonl"));
            EpisodeLog log = session_->pdda().log();
            log.persona = "live";
            if (f) write_jsonl(f, log);
        }
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return;
        if (server_.active.lock()) {
            closing_ = true;
            enqueue(protocol::Error{"busy", "a match is already in progress"});
            return;
        }
        server_.active = weak_from_this();
        const int n = server_.sessions++;
        session_ = std::make_shared<MatchSession>(server_.config.match, server_.seed + static_cast<std::uint64_t>(n),
                                                  "session_" + std::to_string(n), server_.ratings);
        do_read();
    }

    void do_read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this())); }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            shutdown();
            return;
        }
        const std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        if (!ws_.got_text()) {
            enqueue(protocol::Error{"malformed", "binary frames are not supported"});
            do_read();
            return;
        }
        for (auto& reply : session_->on_text(text)) enqueue(std::move(reply));
        if (session_->close_requested()) {
            closing_ = true;
            if (!writing_) write_next();
            return;
        }
        if (session_->started() && !loop_) start_loop();
        do_read();
    }

    void start_loop() {
        std::weak_ptr<WsConnection> weak = weak_from_this();
        auto exec = ws_.get_executor();
        loop_ = std::make_unique<LiveLoop>(
            session_, server_.config.match.budget_frames,
            [weak, exec](std::vector<Message> msgs) {
                net::post(exec, [weak, msgs = std::move(msgs)]() mutable {
                    if (auto self = weak.lock())
                        for (auto& m : msgs) self->enqueue(std::move(m));
                });
            },
            server_.overruns);
    }

    void enqueue(Message m) {
        queue_.push(std::move(m));
        if (!writing_) write_next();
    }

    void write_next() {
        auto m = queue_.pop();
        if (!m) {
            writing_ = false;
            if (closing_ && !closed_) {
                closed_ = true;
                ws_.async_close(websocket::close_code::normal,
                                [self = shared_from_this()](beast::error_code) { self->shutdown(); });
            }
            return;
        }
        writing_ = true;
        out_ = protocol::encode_message(*m);
        ws_.text(true);
        ws_.async_write(net::buffer(out_), beast::bind_front_handler(&WsConnection::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        if (ec) {
            writing_ = false;
            shutdown();
            return;
        }
        write_next();
    }

    websocket::stream<beast::tcp_stream> ws_;
    Server::Impl& server_;
    beast::flat_buffer buffer_;
    std::shared_ptr<MatchSession> session_;
    std::unique_ptr<LiveLoop> loop_;
    OutboundQueue queue_;
    std::string out_;
    bool writing_ = false;
    bool closing_ = false;
    bool closed_ = false;
    bool log_written_ = false;
};

const char* mime_type(const fs::path& p) {
    const std::string ext = p.extension().string();
    if (ext == ".html") return "text/html";
    if (ext == ".js") return "application/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".png") return "image/png";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".wasm") return "application/wasm";
    return "application/octet-stream";
}

constexpr const char* kFallbackIndex =
    "<!doctype html><title>pdda</title><p>The browser client is not built. "
    "Connect a WebSocket client to <code>/play</code>.</p>\n";

http::response<http::string_body> static_response(const http::request<http::string_body>& req,
                                                  const fs::path& root) {
    auto reply = [&](http::status status, std::string body, const char* type) {
        http::response<http::string_body> res{status, req.version()};
        res.set(http::field::content_type, type);
        res.keep_alive(false);
        res.body() = req.method() == http::verb::head ? std::string() : std::move(body);
        res.prepare_payload();
        return res;
    };
    if (req.method() != http::verb::get && req.method() != http::verb::head)
        return reply(http::status::method_not_allowed, "method not allowed\n", "text/plain");
    std::string target(req.target());
    target = target.substr(0, target.find('?'));
    if (target.empty() || target[0] != '/' || target.find("..") != std::string::npos)
        return reply(http::status::bad_request, "bad path\n", "text/plain");
    if (target.back() == '/') target += "index.html";
    const fs::path file = root / target.substr(1);
    std::error_code ec;
    if (fs::is_regular_file(file, ec)) {
        std::ifstream in(file, std::ios::binary);
        std::ostringstream body;
        body << in.rdbuf();
        return reply(http::status::ok, body.str(), mime_type(file));
    }
    if (target == "/index.html") return reply(http::status::ok, kFallbackIndex, "text/html");
    return reply(http::status::not_found, "not found\n", "text/plain");
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    HttpConnection(tcp::socket&& socket, Server::Impl& server) : stream_(std::move(socket)), server_(server) {}

    void run() {
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
    }

private:
    void on_read(beast::error_code ec, std::size_t) {
        if (ec) return;
        if (websocket::is_upgrade(req_) && req_.target() == "/play") {
            stream_.expires_never();
            auto ws = std::make_shared<WsConnection>(stream_.release_socket(), server_);
            server_.connections.push_back(ws);
            ws->run(std::move(req_));
            return;
        }
        res_ = static_response(req_, server_.config.service.static_dir);
        http::async_write(stream_, res_, [self = shared_from_this()](beast::error_code, std::size_t) {
            beast::error_code ignored;
            self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        });
    }

    beast::tcp_stream stream_;
    Server::Impl& server_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
    http::response<http::string_body> res_;
};

}  // namespace

void Server::Impl::do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) return;  // acceptor closed
        std::erase_if(connections, [](const auto& w) { return w.expired(); });
        std::make_shared<HttpConnection>(std::move(socket), *this)->run();
        do_accept();
    });
}

Server::Server(harness::ExperimentConfig config, std::uint64_t seed, fs::path out)
    : impl_(std::make_shared<Impl>(std::move(config), seed, std::move(out))) {
    impl_->config.validate();
}

Server::~Server() {
    stop();
    // run() has returned; stop the loop threads before the handlers that own
    // the connections are destroyed with the io_context.
    for (auto& w : impl_->connections)
        if (auto c = w.lock()) c->shutdown();
}

unsigned short Server::listen(unsigned short port, bool loopback_only) {
    const tcp::endpoint endpoint(loopback_only ? net::ip::address_v4::loopback() : net::ip::address_v4::any(), port);
    try {
        impl_->acceptor.open(endpoint.protocol());
        impl_->acceptor.set_option(net::socket_base::reuse_address(true));
        impl_->acceptor.bind(endpoint);
        impl_->acceptor.listen(net::socket_base::max_listen_connections);
    } catch (const boost::system::system_error& e) {
        throw std::runtime_error("cannot listen on port " + std::to_string(port) + ": " + e.what());
    }
    impl_->do_accept();
    return impl_->acceptor.local_endpoint().port();
}

void Server::run() { impl_->ioc.run(); }

void Server::stop() { impl_->ioc.stop(); }

std::int64_t Server::overruns() const { return impl_->overruns.load(); }

int Server::sessions_started() const { return impl_->sessions.load(); }

}  // namespace pdda::service
