#include "stepseq/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

namespace stepseq::data {

namespace fs = std::filesystem;
using Kind = DatasetError::Kind;

std::size_t Dataset::feature_dim() const {
    return sequences.empty() ? 0 : static_cast<std::size_t>(sequences.front().features.cols());
}

void Dataset::validate() const {
    const std::size_t D = feature_dim();
    for (const auto& s : sequences) {
        if (s.features.rows() == 0) {
            throw DatasetError(Kind::InvalidSequence, "sequence '" + s.source_id + "' has no timesteps");
        }
        if (static_cast<std::size_t>(s.features.cols()) != D) {
            throw DatasetError(Kind::InconsistentFeatureDim,
                               "sequence '" + s.source_id + "' has feature dim " +
                                   std::to_string(s.features.cols()) + ", expected " + std::to_string(D));
        }
        if (!s.features.allFinite()) {
            throw DatasetError(Kind::InvalidSequence, "sequence '" + s.source_id + "' has non-finite features");
        }
        if (s.label >= num_classes()) {
            throw DatasetError(Kind::InvalidSequence, "sequence '" + s.source_id + "' label out of range");
        }
    }
}

namespace {

std::string class_name(std::size_t c) {
    std::ostringstream os;
    os << "class_" << std::setw(2) << std::setfill('0') << c;
    return os.str();
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes == 0 || spec.timesteps == 0 || spec.feature_dim == 0 || spec.total() == 0) {
        throw std::invalid_argument("synthetic dataset: sizes must be positive");
    }
    if (!(spec.redundancy >= 0.0 && spec.redundancy <= 1.0)) {
        throw std::invalid_argument("synthetic dataset: redundancy must lie in [0, 1]");
    }
    const auto T = static_cast<Eigen::Index>(spec.timesteps);
    const auto D = static_cast<Eigen::Index>(spec.feature_dim);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](double scale) {
        Eigen::VectorXd v(D);
        for (Eigen::Index d = 0; d < D; ++d) v[d] = scale * normal(rng);
        return v;
    };

    std::vector<Eigen::VectorXd> patterns;
    for (std::size_t c = 0; c < spec.num_classes; ++c) patterns.push_back(gaussian(spec.pattern_scale));

    Dataset ds;
    for (std::size_t c = 0; c < spec.num_classes; ++c) ds.class_names.push_back(class_name(c));

    const std::size_t total = spec.total();
    std::vector<std::size_t> serial(spec.num_classes, 0);
    const double r = spec.redundancy;
    for (std::size_t k = 0; k < total; ++k) {
        const std::size_t label = spec.total_sequences ? k % spec.num_classes : k / spec.sequences_per_class;
        LabeledSequence seq;
        seq.label = label;
        std::ostringstream id;
        id << ds.class_names[label] << '_' << std::setw(3) << std::setfill('0') << ++serial[label];
        seq.source_id = id.str();

        const Eigen::VectorXd offset = gaussian(spec.offset_scale);
        Eigen::VectorXd walk = Eigen::VectorXd::Zero(D);
        seq.features.resize(T, D);
        Eigen::VectorXd x;
        for (Eigen::Index t = 0; t < T; ++t) {
            if (t > 0) walk += gaussian(spec.drift_scale);
            const Eigen::VectorXd y = patterns[label] + offset + walk + gaussian(spec.noise_scale);
            x = t == 0 ? y : Eigen::VectorXd(r * x + (1.0 - r) * y);
            seq.features.row(t) = x.transpose();
        }
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

std::string synthetic_manifest(const SyntheticSpec& s) {
    nlohmann::ordered_json j;
    j["generator"] = "stepseq-synthetic";
    j["version"] = 1;
    j["num_classes"] = s.num_classes;
    j["sequences_per_class"] = s.sequences_per_class;
    if (s.total_sequences) j["total_sequences"] = *s.total_sequences;
    j["timesteps"] = s.timesteps;
    j["feature_dim"] = s.feature_dim;
    j["redundancy"] = s.redundancy;
    j["seed"] = s.seed;
    j["pattern_scale"] = s.pattern_scale;
    j["offset_scale"] = s.offset_scale;
    j["noise_scale"] = s.noise_scale;
    j["drift_scale"] = s.drift_scale;
    return j.dump(2) + "\n";
}

SyntheticSpec parse_synthetic_manifest(const std::string& json_text) {
    const auto j = nlohmann::json::parse(json_text);
    SyntheticSpec s;
    s.num_classes = j.value("num_classes", s.num_classes);
    s.sequences_per_class = j.value("sequences_per_class", s.sequences_per_class);
    if (j.contains("total_sequences")) s.total_sequences = j.at("total_sequences").get<std::size_t>();
    s.timesteps = j.value("timesteps", s.timesteps);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.redundancy = j.value("redundancy", s.redundancy);
    s.seed = j.value("seed", s.seed);
    s.pattern_scale = j.value("pattern_scale", s.pattern_scale);
    s.offset_scale = j.value("offset_scale", s.offset_scale);
    s.noise_scale = j.value("noise_scale", s.noise_scale);
    s.drift_scale = j.value("drift_scale", s.drift_scale);
    return s;
}

std::string label_from_folder(const std::string& folder_name) {
    const auto pos = folder_name.rfind('_');
    return pos == std::string::npos ? folder_name : folder_name.substr(0, pos);
}

namespace {

std::vector<double> read_frame(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DatasetError(Kind::UnreadableFrame, "cannot open frame " + file.string());
    std::vector<double> values;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw DatasetError(Kind::UnreadableFrame, "bad value '" + tok + "' in frame " + file.string());
        }
    }
    if (values.empty()) throw DatasetError(Kind::UnreadableFrame, "empty frame " + file.string());
    return values;
}

}  // namespace

Dataset load_frame_folders(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        throw DatasetError(Kind::EmptyRoot, "dataset root " + root.string() + " is not a directory");
    }
    std::vector<fs::path> folders;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && e.path().filename().string().front() != '.') folders.push_back(e.path());
    }
    if (folders.empty()) throw DatasetError(Kind::EmptyRoot, "dataset root " + root.string() + " has no videos");
    std::sort(folders.begin(), folders.end());

    std::map<std::string, std::size_t> label_index;
    for (const auto& f : folders) label_index.emplace(label_from_folder(f.filename().string()), 0);
    Dataset ds;
    for (auto& [name, idx] : label_index) {
        idx = ds.class_names.size();
        ds.class_names.push_back(name);
    }

    std::optional<std::size_t> dim;
    for (const auto& folder : folders) {
        std::vector<fs::path> frames;
        for (const auto& e : fs::directory_iterator(folder)) {
            if (e.is_regular_file() && e.path().filename().string().front() != '.') frames.push_back(e.path());
        }
        if (frames.empty()) throw DatasetError(Kind::EmptyVideo, "video folder " + folder.string() + " has no frames");
        std::sort(frames.begin(), frames.end());

        LabeledSequence seq;
        seq.source_id = folder.filename().string();
        seq.label = label_index.at(label_from_folder(seq.source_id));
        for (std::size_t t = 0; t < frames.size(); ++t) {
            const auto v = read_frame(frames[t]);
            if (!dim) dim = v.size();
            if (v.size() != *dim) {
                throw DatasetError(Kind::InconsistentFeatureDim,
                                   "frame " + frames[t].string() + " has " + std::to_string(v.size()) +
                                       " values, expected " + std::to_string(*dim));
            }
            if (t == 0) seq.features.resize(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(*dim));
            for (std::size_t d = 0; d < v.size(); ++d) {
                seq.features(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) = v[d];
            }
        }
        ds.sequences.push_back(std::move(seq));
    }
    ds.validate();
    return ds;
}

void write_frame_folders(const Dataset& dataset, const fs::path& root) {
    fs::create_directories(root);
    for (const auto& seq : dataset.sequences) {
        const fs::path dir = root / seq.source_id;
        if (label_from_folder(seq.source_id) != dataset.class_names.at(seq.label)) {
            throw std::invalid_argument("source id '" + seq.source_id + "' does not encode label '" +
                                        dataset.class_names.at(seq.label) + "'");
        }
        fs::create_directories(dir);
        for (Eigen::Index t = 0; t < seq.features.rows(); ++t) {
            std::ostringstream name;
            name << "frame_" << std::setw(5) << std::setfill('0') << t << ".txt";
            std::ofstream out(dir / name.str());
            out << std::setprecision(17);
            for (Eigen::Index d = 0; d < seq.features.cols(); ++d) {
                if (d > 0) out << ' ';
                out << seq.features(t, d);
            }
            out << '\n';
            if (!out) throw std::runtime_error("failed writing " + (dir / name.str()).string());
        }
    }
}

std::size_t train_count(std::size_t total) { return (3 * total + 2) / 4; }

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& dataset, const SplitSpec& spec) {
    if (dataset.empty()) throw std::invalid_argument("split_train_test: dataset is empty");
    Dataset train, test;
    train.class_names = test.class_names = dataset.class_names;

    if (!spec.stratified) {
        const auto perm = seeded_permutation(dataset.size(), spec.seed);
        const std::size_t n_train = train_count(dataset.size());
        for (std::size_t k = 0; k < perm.size(); ++k) {
            (k < n_train ? train : test).sequences.push_back(dataset.sequences[perm[k]]);
        }
        return {std::move(train), std::move(test)};
    }

    std::vector<std::vector<std::size_t>> by_class(std::max<std::size_t>(dataset.num_classes(), 1));
    for (std::size_t i = 0; i < dataset.size(); ++i) by_class.at(dataset.sequences[i].label).push_back(i);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto perm = seeded_permutation(by_class[c].size(), spec.seed + c);
        const std::size_t n_train = train_count(by_class[c].size());
        for (std::size_t k = 0; k < perm.size(); ++k) {
            (k < n_train ? train : test).sequences.push_back(dataset.sequences[by_class[c][perm[k]]]);
        }
    }
    return {std::move(train), std::move(test)};
}

Dataset shuffle_test(Dataset test, std::uint64_t seed) {
    const auto perm = seeded_permutation(test.size(), seed);
    std::vector<LabeledSequence> out;
    out.reserve(test.size());
    for (std::size_t i : perm) out.push_back(std::move(test.sequences[i]));
    test.sequences = std::move(out);
    return test;
}

std::uint64_t fingerprint(const Dataset& dataset) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& name : dataset.class_names) mix(name.data(), name.size());
    for (const auto& s : dataset.sequences) {
        mix(s.source_id.data(), s.source_id.size());
        mix(&s.label, sizeof s.label);
        const Eigen::Index dims[2] = {s.features.rows(), s.features.cols()};
        mix(dims, sizeof dims);
        mix(s.features.data(), static_cast<std::size_t>(s.features.size()) * sizeof(double));
    }
    return h;
}

double mean_lag1_correlation(const Dataset& dataset) {
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& s : dataset.sequences) {
        if (s.features.rows() < 2) continue;
        const Matrix centred = s.features.rowwise() - s.features.colwise().mean();
        const auto T = centred.rows();
        const Matrix a = centred.topRows(T - 1);
        const Matrix b = centred.bottomRows(T - 1);
        const double denom = std::sqrt(a.squaredNorm() * b.squaredNorm());
        // constant sequences are perfectly self-similar
        total += denom > 0.0 ? (a.array() * b.array()).sum() / denom : 1.0;
        ++counted;
    }
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

}  // namespace stepseq::data
