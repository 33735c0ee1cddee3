#pragma once

#include "edc/backend.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>

namespace edc {

// Newline-delimited JSON protocol.
//
//   server -> {"type":"hello","vocab_size":V,"context_limit":L,"returns":"logits"|"probs","tokenizer_id":S}
//   client -> {"type":"tokenize","id":I,"text":S}      server -> {"type":"tokens","id":I,"tokens":[...]}
//   client -> {"type":"evaluate","id":I,"tokens":[...]} server -> {"type":"logits","id":I,"values":[...]}
//   server -> {"type":"error","id":I,"message":S}
//
// Ids are chosen by the client and echoed verbatim; responses may arrive in
// any order.

class LineChannel {
public:
    virtual ~LineChannel() = default;
    /// Sends line followed by '\n'. Throws IOError.
    virtual void write_line(std::string_view line) = 0;
    /// Next line without its terminator; nullopt at end of stream.
    virtual std::optional<std::string> read_line() = 0;
    /// True when read_line() can return without blocking.
    virtual bool line_ready() { return false; }
};

/// Buffered channel over file descriptors (a socket, or a pipe pair).
class FdChannel : public LineChannel {
public:
    FdChannel(int read_fd, int write_fd);
    ~FdChannel() override;

    FdChannel(const FdChannel&) = delete;
    FdChannel& operator=(const FdChannel&) = delete;

    void write_line(std::string_view line) override;
    std::optional<std::string> read_line() override;
    bool line_ready() override;

protected:
    void close_fds();

private:
    bool fill(int timeout_ms);

    int read_fd_;
    int write_fd_;
    bool socket_;
    std::string buffer_;
    bool eof_ = false;
};

std::unique_ptr<LineChannel> connect_tcp(const std::string& host, std::uint16_t port);

/// Runs `/bin/sh -c command` with its stdin/stdout as the channel.
/// The child is reaped when the channel is destroyed.
std::unique_ptr<LineChannel> spawn_stdio(const std::string& command);

/// "HOST:PORT" or "stdio:COMMAND".
std::unique_ptr<LineChannel> open_channel(std::string_view address);

class RemoteBackend final : public Backend {
public:
    static constexpr std::size_t kPipelineDepth = 16;

    /// Reads the hello handshake. Throws ProtocolError or BackendError.
    explicit RemoteBackend(std::unique_ptr<LineChannel> channel, std::string name = "remote");

    static std::unique_ptr<RemoteBackend> connect(std::string_view address);

    const BackendDescriptor& descriptor() const override { return desc_; }
    BackendTraits traits() const override { return {false, kPipelineDepth}; }
    TokenSequence tokenize(std::string_view text) const override;

protected:
    void do_evaluate(std::span<const TokenId> context, LogitsVector& out) const override;
    std::vector<LogitsVector> do_evaluate_batch(
        std::span<const std::span<const TokenId>> contexts) const override;

private:
    std::int64_t send_request(nlohmann::json request) const;
    nlohmann::json await_response(std::int64_t id) const;

    std::unique_ptr<LineChannel> channel_;
    BackendDescriptor desc_;

    mutable std::mutex mutex_;
    mutable std::int64_t next_id_ = 1;
    mutable std::set<std::int64_t> outstanding_;
    mutable std::unordered_map<std::int64_t, nlohmann::json> stash_;
};

struct ServeOptions {
    /// Answer each group of already-buffered requests in reverse order.
    bool reverse_batches = false;
    /// Round values to float32 before sending, as an LLM server would.
    bool float32_wire = true;
    /// Advertised context limit; 0 uses the backend descriptor's.
    std::size_t context_limit = 0;
};

/// Serves backend over channel until end of stream.
void serve(const Backend& backend, LineChannel& channel, const ServeOptions& options = {});

class TcpListener {
public:
    /// port 0 picks an ephemeral port.
    explicit TcpListener(std::uint16_t port, const std::string& host = "127.0.0.1");
    ~TcpListener();

    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::uint16_t port() const { return port_; }
    std::unique_ptr<LineChannel> accept();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

} // namespace edc
