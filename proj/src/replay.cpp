#include "edc/replay.hpp"

#include "edc/error.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <ostream>

namespace edc {

namespace {

constexpr const char* kModule = "model_backend";

void put_u32(std::string& buf, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) buf.push_back(static_cast<char>((v >> shift) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_all(std::ostream& sink, const std::string& buf) {
    sink.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!sink) fail(Errc::IOError, kModule, "write to replay sink failed");
}

[[noreturn]] void corrupt(const std::string& what) {
    fail(Errc::ReplayCorrupt, kModule, what);
}

// Reads exactly n bytes at offset or reports truncation.
void read_exact(int fd, std::uint64_t offset, void* dst, std::size_t n, const char* what) {
    auto* out = static_cast<unsigned char*>(dst);
    std::size_t done = 0;
    while (done < n) {
        const ssize_t got = ::pread(fd, out + done, n - done, static_cast<off_t>(offset + done));
        if (got < 0) {
            if (errno == EINTR) continue;
            fail(Errc::IOError, kModule, std::string("read error in replay file: ") + std::strerror(errno));
        }
        if (got == 0) corrupt(std::string("replay file truncated inside ") + what);
        done += static_cast<std::size_t>(got);
    }
}

} // namespace

void record_session(const Backend& backend, std::span<const std::span<const TokenId>> windows,
                    std::ostream& sink, const nlohmann::json& metadata) {
    const BackendDescriptor source = backend.provenance();
    const std::size_t vocab = backend.descriptor().vocab_size;

    nlohmann::json header = {
        {"descriptor", to_json(source)},
        {"record_count", windows.size()},
        {"metadata", metadata.is_null() ? nlohmann::json::object() : metadata},
    };
    const std::string header_text = header.dump();

    std::string buf(kReplayMagic, sizeof(kReplayMagic));
    put_u32(buf, kReplayVersion);
    put_u32(buf, static_cast<std::uint32_t>(header_text.size()));
    buf += header_text;
    write_all(sink, buf);

    const std::size_t batch = std::max<std::size_t>(1, backend.traits().preferred_batch);
    for (std::size_t start = 0; start < windows.size(); start += batch) {
        const auto chunk = windows.subspan(start, std::min(batch, windows.size() - start));
        const std::vector<LogitsVector> values = backend.evaluate_batch(chunk);
        for (std::size_t w = 0; w < chunk.size(); ++w) {
            buf.clear();
            put_u32(buf, static_cast<std::uint32_t>(chunk[w].size()));
            for (TokenId t : chunk[w]) put_u32(buf, t);
            for (std::size_t i = 0; i < vocab; ++i) {
                const float f = static_cast<float>(values[w][i]);
                if (!std::isfinite(f)) {
                    fail(Errc::BackendError, kModule, "value not representable as float32");
                }
                put_u32(buf, std::bit_cast<std::uint32_t>(f));
            }
            write_all(sink, buf);
        }
    }
    sink.flush();
    if (!sink) fail(Errc::IOError, kModule, "flush of replay sink failed");
}

ReplayBackend::ReplayBackend(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd_ < 0) fail(Errc::IOError, kModule, "cannot open replay file " + path.string());
    try {
        struct stat st {};
        if (::fstat(fd_, &st) != 0) fail(Errc::IOError, kModule, "cannot stat " + path.string());
        const auto file_size = static_cast<std::uint64_t>(st.st_size);

        std::array<unsigned char, 12> head{};
        read_exact(fd_, 0, head.data(), head.size(), "file header");
        if (std::memcmp(head.data(), kReplayMagic, 4) != 0) corrupt("bad magic, not a replay file");
        if (get_u32(head.data() + 4) != kReplayVersion) {
            corrupt("unsupported replay format version " + std::to_string(get_u32(head.data() + 4)));
        }
        const std::uint32_t header_len = get_u32(head.data() + 8);
        std::string header_text(header_len, '\0');
        read_exact(fd_, 12, header_text.data(), header_len, "descriptor block");
        try {
            const auto j = nlohmann::json::parse(header_text);
            header_.source = descriptor_from_json(j.at("descriptor"));
            header_.record_count = j.at("record_count").get<std::uint64_t>();
            header_.metadata = j.value("metadata", nlohmann::json::object());
        } catch (const nlohmann::json::exception& e) {
            corrupt(std::string("malformed descriptor block: ") + e.what());
        } catch (const Error& e) {
            corrupt("invalid descriptor block: " + e.message());
        }

        const std::uint64_t value_bytes = 4ull * header_.source.vocab_size;
        std::uint64_t offset = 12ull + header_len;
        for (std::uint64_t r = 0; r < header_.record_count; ++r) {
            const std::string which = "record " + std::to_string(r);
            if (offset == file_size) {
                corrupt("replay file ends after " + std::to_string(r) + " of " +
                        std::to_string(header_.record_count) + " records");
            }
            unsigned char len_bytes[4];
            read_exact(fd_, offset, len_bytes, 4, which.c_str());
            const std::uint32_t window_len = get_u32(len_bytes);
            if (window_len == 0) corrupt(which + " has an empty window");
            std::vector<unsigned char> raw(4ull * window_len);
            read_exact(fd_, offset + 4, raw.data(), raw.size(), which.c_str());
            TokenSequence window(window_len);
            for (std::uint32_t i = 0; i < window_len; ++i) window[i] = get_u32(raw.data() + 4ull * i);
            const std::uint64_t values_at = offset + 4 + raw.size();
            if (values_at + value_bytes > file_size) corrupt("replay file truncated inside " + which);
            index_.emplace(std::move(window), values_at);
            offset = values_at + value_bytes;
        }
        if (offset != file_size) corrupt("trailing bytes after the last replay record");
    } catch (...) {
        ::close(fd_);
        throw;
    }

    desc_ = header_.source;
    desc_.name = "replay:" + header_.source.name;
    desc_.kind = BackendKind::Replay;
}

ReplayBackend::~ReplayBackend() {
    if (fd_ >= 0) ::close(fd_);
}

bool ReplayBackend::contains(std::span<const TokenId> window) const {
    return index_.find(window) != index_.end();
}

void ReplayBackend::do_evaluate(std::span<const TokenId> context, LogitsVector& out) const {
    auto it = index_.find(context);
    if (it == index_.end()) {
        fail(Errc::BackendError, kModule,
             "window of length " + std::to_string(context.size()) + " was not recorded");
    }
    std::vector<unsigned char> raw(4 * out.size());
    read_exact(fd_, it->second, raw.data(), raw.size(), "record values");
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<double>(std::bit_cast<float>(get_u32(raw.data() + 4 * i)));
    }
}

} // namespace edc
