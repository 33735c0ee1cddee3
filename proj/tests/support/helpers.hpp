#pragma once

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        std::string pattern = (fs::temp_directory_path() / "edc-test-XXXXXX").string();
        if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

struct CommandResult {
    int exit_code = -1;
    std::string out;
};

/// Runs a shell command; stdout is captured, stderr is discarded unless keep_stderr.
inline CommandResult run(const std::string& command, bool keep_stderr = false) {
    const std::string full = command + (keep_stderr ? " 2>&1" : " 2>/dev/null");
    CommandResult r;
    FILE* pipe = ::popen(full.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t got = 0;
    while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out.push_back(c);
    }
    return out + "'";
}

inline std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void spit(const fs::path& p, const std::string& contents) {
    std::ofstream f(p, std::ios::binary);
    f << contents;
}

inline std::vector<std::uint32_t> byte_tokens(const std::string& text) {
    std::vector<std::uint32_t> out;
    for (unsigned char c : text) out.push_back(c);
    return out;
}

inline fs::path data_dir() { return EDC_TEST_DATA_DIR; }
inline fs::path alice_path() { return data_dir() / "alice_excerpt.txt"; }
inline const char* kAliceMarker = "CHAPTER I.";

} // namespace testing_support
