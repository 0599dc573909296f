#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stepseq::sampler {

using Index = std::size_t;

/// Batch size L, window length m and start offset n between windows.
struct SamplerConfig {
    std::size_t batch_size = 0;
    std::size_t step_size = 0;
    std::size_t step_stride = 0;

    bool operator==(const SamplerConfig&) const = default;
};

class ConfigError : public std::invalid_argument {
public:
    enum class Kind { ZeroField, StepExceedsBatch, StrideExceedsStep };

    ConfigError(Kind kind, const std::string& what) : std::invalid_argument(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class LengthMismatch : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

class InconsistentOverlap : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct WindowPlan {
    std::vector<Index> starts;
    std::size_t window_len = 0;
    std::size_t dropped_tail_len = 0;

    bool operator==(const WindowPlan&) const = default;
};

/// Exact non-negative rational, kept in lowest terms.
struct Rational {
    std::size_t num = 0;
    std::size_t den = 1;

    std::size_t floor() const { return num / den; }
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const;

    bool operator==(const Rational&) const = default;
};

struct IterationCount {
    Rational d_exact;
    std::size_t window_count = 0;
};

struct SubBatch {
    std::vector<Index> indices;

    bool operator==(const SubBatch&) const = default;
};

struct RestoreResult {
    std::vector<Index> covered;
    std::size_t dropped_tail_len = 0;
};

/// Throws ConfigError naming the first violated bound.
void validate_config(const SamplerConfig& cfg);

/// Window start offsets inside one batch: starts[i] = i * n for every full
/// window of length m that fits in L. A trailing partial window is dropped.
WindowPlan window_starts(const SamplerConfig& cfg);

/// d = (L - m) / n as an exact rational; window_count = floor(d) + 1.
IterationCount iteration_count(const SamplerConfig& cfg);

std::vector<SubBatch> sub_batches(std::span<const Index> batch, const SamplerConfig& cfg);

/// Removes the repeated m - n prefix from every window after the first.
/// The result is the batch prefix covered by at least one window.
RestoreResult restore(std::span<const SubBatch> windows, const SamplerConfig& cfg);

/// Sequential batch sampler followed by stepped windowing inside each batch.
///
/// A trailing batch shorter than L is dropped when drop_last_batch is set.
/// Otherwise it is windowed with L' = its length, or skipped (and recorded
/// in skipped_batches()) when m > L'.
class SteppedStream {
public:
    struct Item {
        std::size_t batch_index = 0;
        SubBatch window;
    };

    SteppedStream(std::size_t dataset_len, SamplerConfig cfg, bool drop_last_batch = false);

    std::optional<Item> next();
    std::vector<Item> collect();

    const std::vector<std::size_t>& skipped_batches() const { return skipped_; }
    std::size_t num_batches() const { return num_batches_; }

private:
    bool load_batch();

    std::size_t dataset_len_;
    SamplerConfig cfg_;
    bool drop_last_;
    std::size_t num_batches_ = 0;
    std::size_t batch_ = 0;
    std::vector<Index> starts_;
    std::size_t batch_begin_ = 0;
    std::size_t window_ = 0;
    bool loaded_ = false;
    std::vector<std::size_t> skipped_;
};

}  // namespace stepseq::sampler
