#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepseq/datasets.hpp"
#include "stepseq/sampler.hpp"
#include "stepseq/seqnet.hpp"

namespace stepseq::harness {

enum class SamplerKind { PlainBatch, Stepped };
enum class UpdateMode { PerSubBatch, PerBatchAccumulate };

struct SamplerChoice {
    SamplerKind kind = SamplerKind::PlainBatch;
    /// PlainBatch reads only batch_size.
    sampler::SamplerConfig config{25, 25, 1};

    static SamplerChoice plain(std::size_t batch_size);
    static SamplerChoice stepped(sampler::SamplerConfig cfg);
};

struct DatasetSource {
    enum class Kind { Synthetic, FrameFolders };
    Kind kind = Kind::Synthetic;
    data::SyntheticSpec synthetic;
    std::filesystem::path root;
};

struct ExperimentConfig {
    std::string name = "run";
    SamplerChoice sampler;
    /// Trailing batches shorter than batch_size are dropped instead of rewindowed.
    bool drop_last_batch = false;
    /// input_dim and num_classes of 0 are filled in from the dataset.
    seqnet::ModelSpec model;
    DatasetSource dataset;
    /// Split, initialization, dropout and test-shuffle seeds all derive from this.
    std::uint64_t seed = 1;
    std::size_t epochs = 100;
    seqnet::AdamConfig optimizer;
    UpdateMode update_mode = UpdateMode::PerSubBatch;

    void validate() const;
};

std::string to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Configs file: either a JSON array of configs, or {"base": {...},
/// "variants": [{...}, ...]} where each variant is merge-patched onto base.
std::vector<ExperimentConfig> configs_from_json(const std::string& json_text);

struct TrainingRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double test_accuracy = 0.0;

    bool operator==(const TrainingRecord&) const = default;
};

/// Hashes of everything a sampler-only comparison must hold fixed.
struct SharedFingerprints {
    std::uint64_t dataset = 0;
    std::uint64_t train = 0;
    std::uint64_t test = 0;
    std::uint64_t initial_params = 0;
    std::uint64_t eval_order = 0;

    bool operator==(const SharedFingerprints&) const = default;
};

struct RunResult {
    std::vector<TrainingRecord> records;
    SharedFingerprints fingerprints;
    seqnet::ModelSpec model;
    seqnet::ModelParams final_params;
    std::size_t update_steps = 0;
    /// Short tail batches skipped in one pass over the training set because m exceeded their length.
    std::size_t skipped_tail_batches = 0;
    /// Per-epoch count of test sequences evaluated.
    std::vector<std::size_t> eval_counts;
};

/// Contiguous frame range [begin, begin + length) of one sequence.
struct FrameWindow {
    std::size_t begin = 0;
    std::size_t length = 0;
    bool operator==(const FrameWindow&) const = default;
};

/// Windows of one sequence grouped by batch. PlainBatch yields each batch
/// whole; Stepped yields its sub-batches.
std::vector<std::vector<FrameWindow>> sequence_windows(std::size_t timesteps, const SamplerChoice& sampler,
                                                       bool drop_last_batch, std::size_t* skipped = nullptr);

RunResult run_experiment(const ExperimentConfig& cfg);
/// Uses a preloaded dataset instead of cfg.dataset.
RunResult run_experiment(const ExperimentConfig& cfg, const data::Dataset& dataset);

std::uint64_t fingerprint(const seqnet::ModelParams& params);

class WindowTooLarge : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConvergenceSummary {
    double loss_threshold = 0.0;
    std::optional<std::size_t> epoch_to_loss_threshold;
    std::size_t tail_window = 0;
    double post_convergence_jitter = 0.0;
    double best_test_accuracy = 0.0;
    std::size_t best_epoch = 0;
};

/// tau defaults to 1.2 x the run's minimum train loss. Jitter is the
/// population standard deviation of the last K train losses.
ConvergenceSummary convergence_metrics(std::span<const TrainingRecord> records, std::optional<double> tau,
                                       std::size_t tail_window = 20);

/// Header `epoch,train_loss,test_accuracy`, six decimals, trailing newline.
std::string records_csv(std::span<const TrainingRecord> records);
std::vector<TrainingRecord> parse_records_csv(const std::string& text);
/// Written to a temporary sibling and renamed into place.
void emit_csv(std::span<const TrainingRecord> records, const std::filesystem::path& path);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

struct ComparisonRow {
    std::string name;
    std::vector<std::optional<double>> accuracy;  // per checkpoint
};

struct ComparisonTable {
    std::vector<std::size_t> checkpoints;
    std::vector<ComparisonRow> rows;
    std::vector<RunResult> runs;

    std::string csv() const;
};

/// Runs every config and tabulates test accuracy at the checkpoint epochs.
/// Configs must differ only in name, sampler, drop_last_batch and
/// update_mode; the shared artifacts are verified by fingerprint.
ComparisonTable compare(std::span<const ExperimentConfig> configs, std::span<const std::size_t> checkpoints);

/// gnuplot script plotting train loss and test accuracy for each CSV.
std::string gnuplot_script(std::span<const std::string> names, std::span<const std::string> csv_files);

}  // namespace stepseq::harness
