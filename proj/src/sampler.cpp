#include "stepseq/sampler.hpp"

#include <algorithm>
#include <numeric>

namespace stepseq::sampler {

std::string Rational::str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
}

void validate_config(const SamplerConfig& cfg) {
    if (cfg.batch_size == 0 || cfg.step_size == 0 || cfg.step_stride == 0) {
        throw ConfigError(ConfigError::Kind::ZeroField,
                          "sampler config: batch_size, step_size and step_stride must be positive");
    }
    if (cfg.step_size > cfg.batch_size) {
        throw ConfigError(ConfigError::Kind::StepExceedsBatch,
                          "sampler config: step_size " + std::to_string(cfg.step_size) +
                              " exceeds batch_size " + std::to_string(cfg.batch_size));
    }
    if (cfg.step_stride > cfg.step_size) {
        throw ConfigError(ConfigError::Kind::StrideExceedsStep,
                          "sampler config: step_stride " + std::to_string(cfg.step_stride) +
                              " exceeds step_size " + std::to_string(cfg.step_size));
    }
}

WindowPlan window_starts(const SamplerConfig& cfg) {
    validate_config(cfg);
    const std::size_t span = cfg.batch_size - cfg.step_size;
    const std::size_t count = span / cfg.step_stride + 1;

    WindowPlan plan;
    plan.window_len = cfg.step_size;
    plan.starts.resize(count);
    for (std::size_t i = 0; i < count; ++i) plan.starts[i] = i * cfg.step_stride;
    plan.dropped_tail_len = cfg.batch_size - (plan.starts.back() + cfg.step_size);
    return plan;
}

IterationCount iteration_count(const SamplerConfig& cfg) {
    validate_config(cfg);
    const std::size_t span = cfg.batch_size - cfg.step_size;
    const std::size_t g = std::gcd(span, cfg.step_stride);
    IterationCount out;
    out.d_exact = Rational{span / g, cfg.step_stride / g};
    out.window_count = out.d_exact.floor() + 1;
    return out;
}

std::vector<SubBatch> sub_batches(std::span<const Index> batch, const SamplerConfig& cfg) {
    const WindowPlan plan = window_starts(cfg);
    if (batch.size() != cfg.batch_size) {
        throw LengthMismatch("sub_batches: batch has " + std::to_string(batch.size()) +
                             " items, config expects " + std::to_string(cfg.batch_size));
    }
    std::vector<SubBatch> out;
    out.reserve(plan.starts.size());
    for (const Index s : plan.starts) {
        auto w = batch.subspan(s, plan.window_len);
        out.push_back(SubBatch{{w.begin(), w.end()}});
    }
    return out;
}

RestoreResult restore(std::span<const SubBatch> windows, const SamplerConfig& cfg) {
    const WindowPlan plan = window_starts(cfg);
    const std::size_t m = cfg.step_size;
    const std::size_t n = cfg.step_stride;

    if (windows.size() != plan.starts.size()) {
        throw InconsistentOverlap("restore: expected " + std::to_string(plan.starts.size()) +
                                  " windows, got " + std::to_string(windows.size()));
    }
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].indices.size() != m) {
            throw InconsistentOverlap("restore: window " + std::to_string(i) + " has length " +
                                      std::to_string(windows[i].indices.size()) + ", expected " +
                                      std::to_string(m));
        }
    }

    RestoreResult out;
    out.covered.reserve(plan.starts.back() + m);
    out.covered = windows.front().indices;
    for (std::size_t i = 1; i < windows.size(); ++i) {
        const auto& prev = windows[i - 1].indices;
        const auto& cur = windows[i].indices;
        if (!std::equal(prev.begin() + n, prev.end(), cur.begin())) {
            throw InconsistentOverlap("restore: windows " + std::to_string(i - 1) + " and " +
                                      std::to_string(i) + " disagree on their shared " +
                                      std::to_string(m - n) + " items");
        }
        out.covered.insert(out.covered.end(), cur.end() - static_cast<std::ptrdiff_t>(n), cur.end());
    }
    out.dropped_tail_len = plan.dropped_tail_len;
    return out;
}

SteppedStream::SteppedStream(std::size_t dataset_len, SamplerConfig cfg, bool drop_last_batch)
    : dataset_len_(dataset_len), cfg_(cfg), drop_last_(drop_last_batch) {
    validate_config(cfg_);
    num_batches_ = drop_last_ ? dataset_len_ / cfg_.batch_size
                              : (dataset_len_ + cfg_.batch_size - 1) / cfg_.batch_size;
}

bool SteppedStream::load_batch() {
    while (batch_ < num_batches_) {
        batch_begin_ = batch_ * cfg_.batch_size;
        const std::size_t len = std::min(cfg_.batch_size, dataset_len_ - batch_begin_);
        if (cfg_.step_size <= len) {
            SamplerConfig local = cfg_;
            local.batch_size = len;
            starts_ = window_starts(local).starts;
            window_ = 0;
            return true;
        }
        skipped_.push_back(batch_);
        ++batch_;
    }
    return false;
}

std::optional<SteppedStream::Item> SteppedStream::next() {
    if (!loaded_ || window_ == starts_.size()) {
        if (loaded_) ++batch_;
        loaded_ = true;
        if (!load_batch()) {
            starts_.clear();
            window_ = 0;
            return std::nullopt;
        }
    }
    Item item;
    item.batch_index = batch_;
    item.window.indices.resize(cfg_.step_size);
    std::iota(item.window.indices.begin(), item.window.indices.end(), batch_begin_ + starts_[window_]);
    ++window_;
    return item;
}

std::vector<SteppedStream::Item> SteppedStream::collect() {
    std::vector<Item> out;
    while (auto item = next()) out.push_back(std::move(*item));
    return out;
}

}  // namespace stepseq::sampler
