#include "edc/entropy.hpp"

#include "edc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace edc {

namespace {

constexpr const char* kModule = "entropy_core";

void check_finite(std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            fail(Errc::NonFiniteInput, kModule,
                 "non-finite logit at index " + std::to_string(i));
        }
    }
}

} // namespace

Distribution softmax_stable(std::span<const double> logits) {
    Distribution out(logits.begin(), logits.end());
    softmax_inplace(out);
    return out;
}

void softmax_inplace(std::span<double> values) {
    if (values.empty()) {
        fail(Errc::LengthMismatch, kModule, "softmax of an empty vector");
    }
    check_finite(values);
    const double max = *std::max_element(values.begin(), values.end());
    double total = 0.0;
    for (double& v : values) {
        v = std::exp(v - max);
        total += v;
    }
    for (double& v : values) v /= total;
}

void normalize_probs_inplace(std::span<double> probs) {
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!std::isfinite(probs[i]) || probs[i] < 0.0) {
            fail(Errc::InvalidDistribution, kModule,
                 "probability at index " + std::to_string(i) + " is negative or non-finite");
        }
        total += probs[i];
    }
    if (std::abs(total - 1.0) > 1e-6) {
        fail(Errc::InvalidDistribution, kModule,
             "probabilities sum to " + std::to_string(total));
    }
    for (double& p : probs) p /= total;
}

double entropy_bits(std::span<const double> probs) {
    if (probs.empty()) {
        fail(Errc::InvalidDistribution, kModule, "empty distribution");
    }
    double total = 0.0;
    double nats = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (!(p >= 0.0) || !std::isfinite(p)) {
            fail(Errc::InvalidDistribution, kModule,
                 "entry " + std::to_string(i) + " is negative or non-finite");
        }
        total += p;
        if (p > 0.0) nats -= p * std::log(p);
    }
    if (std::abs(total - 1.0) > kDistributionTolerance) {
        fail(Errc::InvalidDistribution, kModule,
             "distribution sums to " + std::to_string(total));
    }
    return std::max(0.0, nats / std::numbers::ln2);
}

MeanDistributionAccumulator::MeanDistributionAccumulator(std::size_t vocab_size)
    : sum_(vocab_size, 0.0) {}

void MeanDistributionAccumulator::add(std::span<const double> probs) {
    if (probs.size() != sum_.size()) {
        fail(Errc::LengthMismatch, kModule,
             "distribution of length " + std::to_string(probs.size()) +
                 " added to accumulator of length " + std::to_string(sum_.size()));
    }
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += probs[i];
    ++count_;
}

void MeanDistributionAccumulator::merge(const MeanDistributionAccumulator& other) {
    if (other.sum_.size() != sum_.size()) {
        fail(Errc::LengthMismatch, kModule, "merging accumulators of different lengths");
    }
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += other.sum_[i];
    count_ += other.count_;
}

Distribution MeanDistributionAccumulator::mean() const {
    Distribution out;
    mean_into(out);
    return out;
}

void MeanDistributionAccumulator::mean_into(std::vector<double>& out) const {
    if (count_ == 0) {
        fail(Errc::OutOfRange, kModule, "mean of an empty accumulator");
    }
    const double n = static_cast<double>(count_);
    out.resize(sum_.size());
    for (std::size_t i = 0; i < sum_.size(); ++i) out[i] = sum_[i] / n;
}

std::optional<double> uncertainty_index(double h_bits, double marginal_bits) {
    if (!(h_bits >= 0.0) || !(marginal_bits >= 0.0)) {
        fail(Errc::OutOfRange, kModule, "entropies must be non-negative");
    }
    if (h_bits > marginal_bits + kJensenTolerance) {
        fail(Errc::JensenViolation, kModule,
             "conditional entropy " + std::to_string(h_bits) +
                 " exceeds marginal entropy " + std::to_string(marginal_bits));
    }
    if (marginal_bits < kUndefinedEntropyFloor) return std::nullopt;
    return std::clamp(h_bits / marginal_bits, 0.0, 1.0);
}

double igs(double u_small, double u_large) {
    auto in_unit = [](double u) { return u >= 0.0 && u <= 1.0; };
    if (!in_unit(u_small) || !in_unit(u_large)) {
        fail(Errc::OutOfRange, kModule, "IGS inputs must lie in [0, 1]");
    }
    return u_small * (1.0 - u_large);
}

} // namespace edc
