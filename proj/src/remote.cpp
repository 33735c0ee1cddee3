#include "edc/remote.hpp"

#include "edc/error.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

extern char** environ;

namespace edc {

namespace {

constexpr const char* kModule = "model_backend";

[[noreturn]] void io_fail(const std::string& what) {
    fail(Errc::IOError, kModule, what + ": " + std::strerror(errno));
}

[[noreturn]] void protocol_fail(const std::string& what) {
    fail(Errc::ProtocolError, kModule, what);
}

bool is_socket(int fd) {
    struct stat st {};
    return ::fstat(fd, &st) == 0 && S_ISSOCK(st.st_mode);
}

class SubprocessChannel final : public FdChannel {
public:
    SubprocessChannel(int read_fd, int write_fd, pid_t pid) : FdChannel(read_fd, write_fd), pid_(pid) {}

    ~SubprocessChannel() override {
        close_fds();
        using namespace std::chrono_literals;
        for (int i = 0; i < 200; ++i) {
            int status = 0;
            const pid_t r = ::waitpid(pid_, &status, WNOHANG);
            if (r == pid_ || r < 0) return;
            std::this_thread::sleep_for(10ms);
        }
        ::kill(pid_, SIGKILL);
        int status = 0;
        ::waitpid(pid_, &status, 0);
    }

private:
    pid_t pid_;
};

} // namespace

FdChannel::FdChannel(int read_fd, int write_fd)
    : read_fd_(read_fd), write_fd_(write_fd), socket_(is_socket(write_fd)) {}

FdChannel::~FdChannel() { close_fds(); }

void FdChannel::close_fds() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    read_fd_ = write_fd_ = -1;
}

void FdChannel::write_line(std::string_view line) {
    std::string data(line);
    data.push_back('\n');
    std::size_t done = 0;
    while (done < data.size()) {
        const ssize_t n = socket_ ? ::send(write_fd_, data.data() + done, data.size() - done, MSG_NOSIGNAL)
                                  : ::write(write_fd_, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            io_fail("write to remote channel failed");
        }
        done += static_cast<std::size_t>(n);
    }
}

bool FdChannel::fill(int timeout_ms) {
    if (eof_) return false;
    if (timeout_ms >= 0) {
        pollfd p{read_fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, timeout_ms);
        if (r <= 0) return false;
    }
    char chunk[65536];
    for (;;) {
        const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
        if (n < 0) {
            if (errno == EINTR) continue;
            io_fail("read from remote channel failed");
        }
        if (n == 0) {
            eof_ = true;
            return false;
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
        return true;
    }
}

std::optional<std::string> FdChannel::read_line() {
    for (;;) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        if (!fill(-1)) {
            if (buffer_.empty()) return std::nullopt;
            std::string line = std::move(buffer_);
            buffer_.clear();
            return line;
        }
    }
}

bool FdChannel::line_ready() {
    while (buffer_.find('\n') == std::string::npos) {
        if (!fill(0)) return eof_ && !buffer_.empty();
    }
    return true;
}

std::unique_ptr<LineChannel> connect_tcp(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port_text = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), port_text.c_str(), &hints, &res); rc != 0) {
        fail(Errc::IOError, kModule, "cannot resolve " + host + ": " + ::gai_strerror(rc));
    }
    int fd = -1;
    for (addrinfo* a = res; a != nullptr; a = a->ai_next) {
        fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) io_fail("cannot connect to " + host + ":" + port_text);
    return std::make_unique<FdChannel>(fd, fd);
}

std::unique_ptr<LineChannel> spawn_stdio(const std::string& command) {
    ::signal(SIGPIPE, SIG_IGN);

    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) io_fail("pipe");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        io_fail("pipe");
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

    std::string cmd = command;
    char sh[] = "/bin/sh";
    char dash_c[] = "-c";
    char* argv[] = {sh, dash_c, cmd.data(), nullptr};
    pid_t pid = 0;
    const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
        ::close(to_child[1]);
        ::close(from_child[0]);
        errno = rc;
        io_fail("cannot spawn '" + command + "'");
    }
    return std::make_unique<SubprocessChannel>(from_child[0], to_child[1], pid);
}

std::unique_ptr<LineChannel> open_channel(std::string_view address) {
    constexpr std::string_view kStdio = "stdio:";
    if (address.starts_with(kStdio)) {
        const std::string command(address.substr(kStdio.size()));
        if (command.empty()) fail(Errc::ConfigError, kModule, "empty stdio command");
        return spawn_stdio(command);
    }
    const auto colon = address.rfind(':');
    if (colon == std::string_view::npos || colon + 1 == address.size()) {
        fail(Errc::ConfigError, kModule, "address must be HOST:PORT or stdio:CMD, got '" + std::string(address) + "'");
    }
    std::string host(address.substr(0, colon));
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(std::string(address.substr(colon + 1)), &used);
        if (used != address.size() - colon - 1 || port == 0 || port > 65535) throw std::out_of_range("port");
    } catch (const std::exception&) {
        fail(Errc::ConfigError, kModule, "invalid port in address '" + std::string(address) + "'");
    }
    return connect_tcp(host, static_cast<std::uint16_t>(port));
}

RemoteBackend::RemoteBackend(std::unique_ptr<LineChannel> channel, std::string name)
    : channel_(std::move(channel)) {
    const auto line = channel_->read_line();
    if (!line) fail(Errc::BackendError, kModule, "server closed the connection before the handshake");
    nlohmann::json hello;
    try {
        hello = nlohmann::json::parse(*line);
        if (hello.at("type").get<std::string>() != "hello") protocol_fail("expected hello, got '" + *line + "'");
        desc_.vocab_size = hello.at("vocab_size").get<std::size_t>();
        desc_.context_limit = hello.value("context_limit", std::size_t{0});
        desc_.tokenizer_id = hello.value("tokenizer_id", std::string("unknown"));
        const std::string returns = hello.value("returns", std::string("logits"));
        if (returns != "logits" && returns != "probs") protocol_fail("hello 'returns' must be logits or probs");
        desc_.output = returns == "logits" ? OutputKind::Logits : OutputKind::Probs;
    } catch (const nlohmann::json::exception& e) {
        protocol_fail(std::string("malformed hello: ") + e.what());
    }
    if (desc_.vocab_size < 2) protocol_fail("hello advertises vocab_size below 2");
    desc_.name = std::move(name);
    desc_.kind = BackendKind::Remote;
}

std::unique_ptr<RemoteBackend> RemoteBackend::connect(std::string_view address) {
    return std::make_unique<RemoteBackend>(open_channel(address), "remote");
}

std::int64_t RemoteBackend::send_request(nlohmann::json request) const {
    const std::int64_t id = next_id_++;
    request["id"] = id;
    channel_->write_line(request.dump());
    outstanding_.insert(id);
    return id;
}

nlohmann::json RemoteBackend::await_response(std::int64_t id) const {
    for (;;) {
        if (auto it = stash_.find(id); it != stash_.end()) {
            nlohmann::json msg = std::move(it->second);
            stash_.erase(it);
            outstanding_.erase(id);
            return msg;
        }
        const auto line = channel_->read_line();
        if (!line) fail(Errc::BackendError, kModule, "server closed the connection");
        nlohmann::json msg;
        std::int64_t got = 0;
        try {
            msg = nlohmann::json::parse(*line);
            got = msg.at("id").get<std::int64_t>();
            msg.at("type").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            protocol_fail(std::string("malformed response: ") + e.what());
        }
        if (!outstanding_.contains(got) || stash_.contains(got)) {
            protocol_fail("response for unknown or duplicate id " + std::to_string(got));
        }
        stash_.emplace(got, std::move(msg));
    }
}

TokenSequence RemoteBackend::tokenize(std::string_view text) const {
    std::lock_guard lock(mutex_);
    const auto id = send_request({{"type", "tokenize"}, {"text", std::string(text)}});
    const auto msg = await_response(id);
    const std::string type = msg.at("type").get<std::string>();
    if (type == "error") {
        fail(Errc::BackendError, kModule, "server error: " + msg.value("message", std::string()));
    }
    if (type != "tokens") protocol_fail("expected tokens response, got '" + type + "'");
    TokenSequence tokens;
    try {
        for (const auto& t : msg.at("tokens")) {
            const auto v = t.get<std::int64_t>();
            if (v < 0 || static_cast<std::uint64_t>(v) >= desc_.vocab_size) {
                protocol_fail("server returned token id " + std::to_string(v) + " outside vocabulary");
            }
            tokens.push_back(static_cast<TokenId>(v));
        }
    } catch (const nlohmann::json::exception& e) {
        protocol_fail(std::string("malformed tokens response: ") + e.what());
    }
    return tokens;
}

void RemoteBackend::do_evaluate(std::span<const TokenId> context, LogitsVector& out) const {
    const std::span<const TokenId> one[] = {context};
    out = std::move(do_evaluate_batch(one).front());
}

std::vector<LogitsVector> RemoteBackend::do_evaluate_batch(
    std::span<const std::span<const TokenId>> contexts) const {
    std::lock_guard lock(mutex_);
    std::vector<std::int64_t> ids;
    ids.reserve(contexts.size());
    for (const auto& ctx : contexts) {
        ids.push_back(send_request({{"type", "evaluate"},
                                    {"tokens", std::vector<TokenId>(ctx.begin(), ctx.end())}}));
    }

    std::vector<LogitsVector> out(contexts.size());
    std::optional<Error> first_error;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto msg = await_response(ids[i]);
        const std::string type = msg.at("type").get<std::string>();
        if (type == "error") {
            if (!first_error) {
                first_error.emplace(Errc::BackendError, kModule,
                                    "server error: " + msg.value("message", std::string()));
            }
            continue;
        }
        if (type != "logits") {
            if (!first_error) first_error.emplace(Errc::ProtocolError, kModule, "expected logits, got '" + type + "'");
            continue;
        }
        try {
            out[i] = msg.at("values").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            if (!first_error) first_error.emplace(Errc::ProtocolError, kModule, std::string("malformed logits: ") + e.what());
        }
    }
    if (first_error) throw *first_error;
    return out;
}

void serve(const Backend& backend, LineChannel& channel, const ServeOptions& options) {
    const auto& d = backend.descriptor();
    const std::size_t limit = options.context_limit != 0 ? options.context_limit : d.context_limit;
    channel.write_line(nlohmann::json{{"type", "hello"},
                                      {"vocab_size", d.vocab_size},
                                      {"context_limit", limit},
                                      {"returns", d.output == OutputKind::Logits ? "logits" : "probs"},
                                      {"tokenizer_id", d.tokenizer_id}}
                           .dump());

    auto handle = [&](const std::string& line) -> nlohmann::json {
        std::int64_t id = -1;
        try {
            const auto req = nlohmann::json::parse(line);
            id = req.at("id").get<std::int64_t>();
            const std::string type = req.at("type").get<std::string>();
            if (type == "tokenize") {
                const auto tokens = backend.tokenize(req.at("text").get<std::string>());
                return {{"type", "tokens"}, {"id", id}, {"tokens", tokens}};
            }
            if (type == "evaluate") {
                const auto tokens = req.at("tokens").get<TokenSequence>();
                if (limit != 0 && tokens.size() > limit) {
                    return {{"type", "error"}, {"id", id}, {"message", "context exceeds context_limit"}};
                }
                LogitsVector values = backend.evaluate(tokens);
                if (options.float32_wire) {
                    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
                }
                return {{"type", "logits"}, {"id", id}, {"values", std::move(values)}};
            }
            return {{"type", "error"}, {"id", id}, {"message", "unknown request type '" + type + "'"}};
        } catch (const std::exception& e) {
            return {{"type", "error"}, {"id", id}, {"message", e.what()}};
        }
    };

    while (auto first = channel.read_line()) {
        std::vector<std::string> batch{std::move(*first)};
        if (options.reverse_batches) {
            while (channel.line_ready()) {
                auto next = channel.read_line();
                if (!next) break;
                batch.push_back(std::move(*next));
            }
            std::reverse(batch.begin(), batch.end());
        }
        for (const auto& line : batch) {
            if (line.empty()) continue;
            channel.write_line(handle(line).dump());
        }
    }
}

TcpListener::TcpListener(std::uint16_t port, const std::string& host) {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) io_fail("socket");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        fail(Errc::ConfigError, kModule, "listen host must be an IPv4 address, got '" + host + "'");
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 8) != 0) {
        const int saved = errno;
        ::close(fd_);
        errno = saved;
        io_fail("cannot listen on " + host + ":" + std::to_string(port));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<LineChannel> TcpListener::accept() {
    for (;;) {
        const int c = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (c >= 0) return std::make_unique<FdChannel>(c, c);
        if (errno != EINTR) io_fail("accept");
    }
}

} // namespace edc
