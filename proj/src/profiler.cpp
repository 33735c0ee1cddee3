#include "edc/profiler.hpp"

#include "edc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace edc {

namespace {

constexpr const char* kModule = "profiler";

std::size_t window_start(std::size_t i, std::size_t k, Alignment alignment, std::size_t max_k) {
    return alignment == Alignment::Start ? i : max_k + i - k;
}

std::size_t tokens_needed(std::size_t k, std::size_t n, Alignment alignment, std::size_t max_k) {
    return (alignment == Alignment::Start ? k : max_k) + n - 1;
}

struct Shard {
    explicit Shard(std::size_t vocab) : acc(vocab) {}
    MeanDistributionAccumulator acc;
    double h_sum = 0.0;
    std::exception_ptr error;
};

std::string where(std::size_t k, std::size_t i, std::size_t n) {
    return "k=" + std::to_string(k) + ", window " + std::to_string(i + 1) + " of " + std::to_string(n);
}

void absorb(Shard& shard, OutputKind output, std::vector<double>& values) {
    to_distribution_inplace(output, values);
    shard.h_sum += entropy_bits(values);
    shard.acc.add(values);
}

void run_shard(const Backend& backend, std::span<const TokenId> tokens, std::size_t k, std::size_t n,
               Alignment alignment, std::size_t max_k, std::size_t lo, std::size_t hi, Shard& shard) {
    const auto& d = backend.descriptor();
    const std::size_t batch = std::max<std::size_t>(1, backend.traits().preferred_batch);
    if (batch == 1) {
        LogitsVector buffer;
        for (std::size_t i = lo; i < hi; ++i) {
            try {
                backend.evaluate_into(tokens.subspan(window_start(i, k, alignment, max_k), k), buffer);
                absorb(shard, d.output, buffer);
            } catch (const Error& e) {
                throw e.annotated(where(k, i, n));
            }
        }
        return;
    }
    std::vector<std::span<const TokenId>> chunk;
    for (std::size_t start = lo; start < hi; start += batch) {
        const std::size_t end = std::min(hi, start + batch);
        chunk.clear();
        for (std::size_t i = start; i < end; ++i) {
            chunk.push_back(tokens.subspan(window_start(i, k, alignment, max_k), k));
        }
        std::vector<LogitsVector> values;
        try {
            values = backend.evaluate_batch(chunk);
        } catch (const Error& e) {
            throw e.annotated("k=" + std::to_string(k) + ", windows " + std::to_string(start + 1) + "-" +
                              std::to_string(end) + " of " + std::to_string(n));
        }
        for (std::size_t j = 0; j < values.size(); ++j) {
            try {
                absorb(shard, d.output, values[j]);
            } catch (const Error& e) {
                throw e.annotated(where(k, start + j, n));
            }
        }
    }
}

} // namespace

std::string_view to_string(Alignment a) { return a == Alignment::Start ? "start" : "end"; }

Alignment alignment_from_string(std::string_view name) {
    if (name == "start") return Alignment::Start;
    if (name == "end") return Alignment::End;
    fail(Errc::ConfigError, kModule, "alignment must be start or end, got '" + std::string(name) + "'");
}

void ProfileConfig::validate() const {
    if (k_grid.empty()) fail(Errc::ConfigError, kModule, "k grid is empty");
    for (std::size_t i = 0; i < k_grid.size(); ++i) {
        if (k_grid[i] == 0) fail(Errc::ConfigError, kModule, "window lengths must be positive");
        if (i > 0 && k_grid[i] <= k_grid[i - 1]) {
            fail(Errc::ConfigError, kModule, "k grid must be strictly increasing");
        }
    }
    if (n_windows == 0) fail(Errc::ConfigError, kModule, "n_windows must be positive");
    if (!(collapse_threshold > 0.0 && collapse_threshold < 1.0)) {
        fail(Errc::ConfigError, kModule, "collapse threshold must lie in (0, 1)");
    }
    if (collapse_k_min == 0 || collapse_k_min > max_k()) {
        fail(Errc::ConfigError, kModule,
             "collapse k_min " + std::to_string(collapse_k_min) + " must lie in [1, " +
                 std::to_string(max_k()) + "]");
    }
    auto on_grid = [&](std::size_t k) { return std::find(k_grid.begin(), k_grid.end(), k) != k_grid.end(); };
    if (!on_grid(igs_k_small) || !on_grid(igs_k_large)) {
        fail(Errc::ConfigError, kModule,
             "IGS lengths " + std::to_string(igs_k_small) + " and " + std::to_string(igs_k_large) +
                 " must both be on the k grid");
    }
    if (igs_k_small >= igs_k_large) fail(Errc::ConfigError, kModule, "IGS k_small must be below k_large");
}

std::size_t ProfileConfig::max_k() const {
    return k_grid.empty() ? 0 : *std::max_element(k_grid.begin(), k_grid.end());
}

std::size_t ProfileConfig::required_tokens() const { return max_k() + n_windows; }

const EntropyRecord* CognitiveProfile::record_at(std::size_t k) const {
    auto it = std::find_if(records.begin(), records.end(), [k](const auto& r) { return r.k == k; });
    return it == records.end() ? nullptr : &*it;
}

std::vector<std::span<const TokenId>> extract_windows(std::span<const TokenId> tokens, std::size_t k,
                                                      std::size_t n, Alignment alignment,
                                                      std::size_t max_k) {
    if (k == 0 || n == 0) fail(Errc::ConfigError, kModule, "k and n must be positive");
    if (alignment == Alignment::End) {
        if (max_k == 0) max_k = k;
        if (max_k < k) fail(Errc::ConfigError, kModule, "end alignment needs max_k >= k");
    }
    const std::size_t needed = tokens_needed(k, n, alignment, max_k);
    if (tokens.size() < needed) {
        fail(Errc::InsufficientTokens, kModule,
             std::to_string(n) + " windows of length " + std::to_string(k) + " need " +
                 std::to_string(needed) + " tokens, have " + std::to_string(tokens.size()));
    }
    std::vector<std::span<const TokenId>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(tokens.subspan(window_start(i, k, alignment, max_k), k));
    return out;
}

EntropyRecord profile_k(const Backend& backend, std::span<const TokenId> tokens, std::size_t k,
                        std::size_t n, Alignment alignment, std::size_t max_k,
                        const ProfileOptions& options) {
    if (k == 0 || n == 0) fail(Errc::ConfigError, kModule, "k and n must be positive");
    if (alignment == Alignment::End) {
        if (max_k == 0) max_k = k;
        if (max_k < k) fail(Errc::ConfigError, kModule, "end alignment needs max_k >= k");
    }
    const std::size_t needed = tokens_needed(k, n, alignment, max_k);
    if (tokens.size() < needed) {
        fail(Errc::InsufficientTokens, kModule,
             "k=" + std::to_string(k) + " with n=" + std::to_string(n) + " needs " +
                 std::to_string(needed) + " tokens, have " + std::to_string(tokens.size()));
    }

    const auto& d = backend.descriptor();
    const std::size_t jobs = backend.traits().concurrent ? std::clamp<std::size_t>(options.jobs, 1, n) : 1;

    std::vector<Shard> shards;
    shards.reserve(jobs);
    for (std::size_t j = 0; j < jobs; ++j) shards.emplace_back(d.vocab_size);

    if (jobs == 1) {
        run_shard(backend, tokens, k, n, alignment, max_k, 0, n, shards[0]);
    } else {
        std::vector<std::jthread> workers;
        workers.reserve(jobs);
        for (std::size_t j = 0; j < jobs; ++j) {
            const std::size_t lo = n * j / jobs;
            const std::size_t hi = n * (j + 1) / jobs;
            workers.emplace_back([&, j, lo, hi] {
                try {
                    run_shard(backend, tokens, k, n, alignment, max_k, lo, hi, shards[j]);
                } catch (...) {
                    shards[j].error = std::current_exception();
                }
            });
        }
        workers.clear();
        for (auto& s : shards) {
            if (s.error) std::rethrow_exception(s.error);
        }
        for (std::size_t j = 1; j < jobs; ++j) {
            shards[0].acc.merge(shards[j].acc);
            shards[0].h_sum += shards[j].h_sum;
        }
    }

    Shard& total = shards[0];
    EntropyRecord rec;
    rec.k = k;
    rec.n = n;
    rec.h_k = total.h_sum / static_cast<double>(n);
    std::vector<double> mean;
    total.acc.mean_into(mean);
    shards.erase(shards.begin() + 1, shards.end());
    rec.H_k = entropy_bits(mean);
    try {
        rec.u_k = uncertainty_index(rec.h_k, rec.H_k);
    } catch (const Error& e) {
        throw e.annotated("k=" + std::to_string(k));
    }
    return rec;
}

CognitiveProfile run_profile(const Backend& backend, std::span<const TokenId> tokens,
                             const ProfileConfig& config, std::string corpus_id,
                             const ProfileOptions& options) {
    config.validate();
    const auto& d = backend.descriptor();
    if (tokens.size() < config.required_tokens()) {
        fail(Errc::InsufficientTokens, kModule,
             "profile needs max(k) + N = " + std::to_string(config.required_tokens()) +
                 " tokens, have " + std::to_string(tokens.size()));
    }
    if (d.context_limit != 0 && config.max_k() > d.context_limit) {
        fail(Errc::ContextTooLong, kModule,
             "max(k) = " + std::to_string(config.max_k()) + " exceeds the backend context limit " +
                 std::to_string(d.context_limit));
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= d.vocab_size) {
            fail(Errc::BackendError, kModule,
                 "token " + std::to_string(i) + " (id " + std::to_string(tokens[i]) +
                     ") is outside the backend vocabulary");
        }
    }

    CognitiveProfile profile;
    profile.backend = backend.provenance();
    profile.corpus_id = std::move(corpus_id);
    profile.config = config;
    for (std::size_t k : config.k_grid) {
        try {
            profile.records.push_back(
                profile_k(backend, tokens, k, config.n_windows, config.alignment, config.max_k(), options));
        } catch (const Error& e) {
            profile.failures.push_back({k, e.message()});
            profile.collapse_flags =
                detect_collapse(profile, config.collapse_threshold, config.collapse_k_min);
            throw ProfileError(e, std::move(profile));
        }
    }
    profile.igs = profile_igs(profile.records, config.igs_k_small, config.igs_k_large);
    profile.collapse_flags = detect_collapse(profile, config.collapse_threshold, config.collapse_k_min);
    return profile;
}

std::vector<CollapseFlag> detect_collapse(std::span<const EntropyRecord> records, double threshold,
                                          std::size_t k_min) {
    std::vector<CollapseFlag> flags;
    for (const auto& r : records) {
        if (r.k >= k_min && r.u_k && *r.u_k < threshold) flags.push_back({r.k, *r.u_k});
    }
    return flags;
}

std::vector<CollapseFlag> detect_collapse(const CognitiveProfile& profile, double threshold,
                                          std::size_t k_min) {
    return detect_collapse(profile.records, threshold, k_min);
}

std::optional<double> profile_igs(const std::vector<EntropyRecord>& records, std::size_t k_small,
                                  std::size_t k_large) {
    auto u_at = [&](std::size_t k) -> std::optional<double> {
        for (const auto& r : records) {
            if (r.k == k) return r.u_k;
        }
        return std::nullopt;
    };
    const auto small = u_at(k_small);
    const auto large = u_at(k_large);
    if (!small || !large) return std::nullopt;
    return igs(*small, *large);
}

} // namespace edc
