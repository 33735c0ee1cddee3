#include "logging.hpp"

#include "edc/error.hpp"
#include "edc/ngram.hpp"
#include "edc/remote.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <unistd.h>

#include <cstdio>

int main(int argc, char** argv) {
    CLI::App app{"Serves an n-gram or uniform model over the edc JSON-lines protocol"};
    std::string model_path;
    std::size_t uniform_vocab = 0;
    bool use_stdio = false;
    int port = -1;
    std::string host = "127.0.0.1";
    bool reverse = false;
    bool exact = false;
    bool once = false;
    std::size_t context_limit = 0;

    auto* model_opt = app.add_option("--model", model_path, "n-gram model file")->check(CLI::ExistingFile);
    app.add_option("--uniform", uniform_vocab, "serve a uniform model with this vocabulary")->excludes(model_opt);
    auto* stdio_opt = app.add_flag("--stdio", use_stdio, "speak the protocol on stdin/stdout");
    app.add_option("--port", port, "listen on TCP port (0 picks one)")->excludes(stdio_opt);
    app.add_option("--host", host, "listen address");
    app.add_flag("--reverse", reverse, "answer buffered requests in reverse order");
    app.add_flag("--exact", exact, "send full double precision instead of float32-rounded values");
    app.add_flag("--once", once, "exit after the first TCP connection closes");
    app.add_option("--context-limit", context_limit, "advertised context limit");
    CLI11_PARSE(app, argc, argv);

    edc::tools::init_logging(false);
    try {
        std::unique_ptr<edc::Backend> backend;
        if (!model_path.empty()) {
            backend = std::make_unique<edc::NGramBackend>(
                std::make_shared<const edc::NGramModel>(edc::NGramModel::load(model_path)));
        } else {
            backend = std::make_unique<edc::UniformBackend>(uniform_vocab ? uniform_vocab : 256);
        }
        const edc::ServeOptions options{reverse, !exact, context_limit};

        if (use_stdio || port < 0) {
            edc::FdChannel channel(STDIN_FILENO, STDOUT_FILENO);
            edc::serve(*backend, channel, options);
            return 0;
        }
        edc::TcpListener listener(static_cast<std::uint16_t>(port), host);
        std::printf("listening %u\n", static_cast<unsigned>(listener.port()));
        std::fflush(stdout);
        do {
            auto channel = listener.accept();
            spdlog::info("client connected");
            edc::serve(*backend, *channel, options);
            spdlog::info("client disconnected");
        } while (!once);
    } catch (const edc::Error& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
