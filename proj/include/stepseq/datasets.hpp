#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace stepseq::data {

using Matrix = Eigen::MatrixXd;

class DatasetError : public std::runtime_error {
public:
    enum class Kind { EmptyRoot, UnreadableFrame, InconsistentFeatureDim, EmptyVideo, InvalidSequence };

    DatasetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct LabeledSequence {
    Matrix features;  // timesteps x feature_dim
    std::size_t label = 0;
    std::string source_id;
};

struct Dataset {
    std::vector<LabeledSequence> sequences;
    std::vector<std::string> class_names;

    std::size_t size() const { return sequences.size(); }
    bool empty() const { return sequences.empty(); }
    std::size_t num_classes() const { return class_names.size(); }
    std::size_t feature_dim() const;
    /// T >= 1, finite features, consistent feature dim, label < num_classes.
    void validate() const;
};

struct SyntheticSpec {
    std::size_t num_classes = 5;
    std::size_t sequences_per_class = 40;
    std::size_t timesteps = 30;
    std::size_t feature_dim = 16;
    double redundancy = 0.9;
    std::uint64_t seed = 7;
    /// When set, overrides num_classes * sequences_per_class; labels are
    /// then assigned round-robin so class sizes differ by at most one.
    std::optional<std::size_t> total_sequences;
    double pattern_scale = 1.0;
    double offset_scale = 0.5;
    double noise_scale = 1.0;
    double drift_scale = 0.05;

    std::size_t total() const { return total_sequences.value_or(num_classes * sequences_per_class); }
};

/// Each class draws a base pattern. A sequence adds a per-sequence offset and
/// a slow random walk to its class pattern, plus per-step noise; frames are
/// x_t = r * x_{t-1} + (1 - r) * y_t with r = redundancy, so r = 1 repeats
/// the first frame and r = 0 gives independent noisy frames.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// JSON manifest carrying every generator parameter and the seed.
std::string synthetic_manifest(const SyntheticSpec& spec);
SyntheticSpec parse_synthetic_manifest(const std::string& json_text);

// Frame-folder layout: root/<label>_<serial>/<frame files>. Each frame file
// holds one feature vector as whitespace-separated numbers; frames are read
// in lexicographic filename order. The label is the folder name up to its
// final underscore (the whole name when there is none). Class indices follow
// sorted unique labels. Regular files directly under root are ignored.
Dataset load_frame_folders(const std::filesystem::path& root);
void write_frame_folders(const Dataset& dataset, const std::filesystem::path& root);

/// Folder-name label: everything before the final underscore.
std::string label_from_folder(const std::string& folder_name);

struct SplitSpec {
    std::uint64_t seed = 0;
    /// Per-class split; not part of the reference protocol.
    bool stratified = false;
};

/// round(3/4 * total), halves rounded up.
std::size_t train_count(std::size_t total);

/// Seeded shuffle, then the first train_count(n) sequences train and the rest test.
std::pair<Dataset, Dataset> split_train_test(const Dataset& dataset, const SplitSpec& spec);

/// Seeded permutation of sequence order; contents untouched.
Dataset shuffle_test(Dataset test, std::uint64_t seed);

/// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// FNV-1a over labels, ids, shapes and feature bytes.
std::uint64_t fingerprint(const Dataset& dataset);

/// Mean over sequences of the lag-1 autocorrelation of mean-centred frames.
double mean_lag1_correlation(const Dataset& dataset);

}  // namespace stepseq::data
