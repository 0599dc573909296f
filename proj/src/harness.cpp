#include "stepseq/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace stepseq::harness {

namespace fs = std::filesystem;
using nlohmann::json;

SamplerChoice SamplerChoice::plain(std::size_t batch_size) {
    return {SamplerKind::PlainBatch, {batch_size, batch_size, 1}};
}

SamplerChoice SamplerChoice::stepped(sampler::SamplerConfig cfg) {
    return {SamplerKind::Stepped, cfg};
}

void ExperimentConfig::validate() const {
    if (sampler.kind == SamplerKind::Stepped) {
        sampler::validate_config(sampler.config);
    } else if (sampler.config.batch_size == 0) {
        throw std::invalid_argument("config: batch_size must be positive");
    }
    if (!(optimizer.learning_rate > 0.0) || !(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
        !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0) || !(optimizer.epsilon > 0.0)) {
        throw std::invalid_argument("config: invalid Adam hyperparameters");
    }
    if (model.embed_dim == 0 || model.hidden_dim == 0 || model.num_lstm_layers == 0) {
        throw std::invalid_argument("config: model dimensions must be positive");
    }
    if (dataset.kind == DatasetSource::Kind::FrameFolders && dataset.root.empty()) {
        throw std::invalid_argument("config: frame_folders dataset needs a root");
    }
}

// ---- serialization ---------------------------------------------------------

namespace {

json sampler_json(const SamplerChoice& s) {
    json j;
    if (s.kind == SamplerKind::PlainBatch) {
        j["kind"] = "plain_batch";
        j["batch_size"] = s.config.batch_size;
    } else {
        j["kind"] = "stepped";
        j["batch_size"] = s.config.batch_size;
        j["step_size"] = s.config.step_size;
        j["step_stride"] = s.config.step_stride;
    }
    return j;
}

SamplerChoice sampler_from(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    const std::size_t L = j.at("batch_size").get<std::size_t>();
    if (kind == "plain_batch") return SamplerChoice::plain(L);
    if (kind == "stepped") {
        return SamplerChoice::stepped(
            {L, j.at("step_size").get<std::size_t>(), j.at("step_stride").get<std::size_t>()});
    }
    throw std::invalid_argument("config: unknown sampler kind '" + kind + "'");
}

json config_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["sampler"] = sampler_json(c.sampler);
    j["drop_last_batch"] = c.drop_last_batch;
    j["model"] = {{"input_dim", c.model.input_dim},
                  {"embed_dim", c.model.embed_dim},
                  {"hidden_dim", c.model.hidden_dim},
                  {"num_lstm_layers", c.model.num_lstm_layers},
                  {"head_dims", c.model.head_dims},
                  {"num_classes", c.model.num_classes},
                  {"dropout_rate", c.model.dropout_rate}};
    if (c.dataset.kind == DatasetSource::Kind::Synthetic) {
        json d = json::parse(data::synthetic_manifest(c.dataset.synthetic));
        d.erase("generator");
        d.erase("version");
        d["kind"] = "synthetic";
        j["dataset"] = d;
    } else {
        j["dataset"] = {{"kind", "frame_folders"}, {"root", c.dataset.root.string()}};
    }
    j["seed"] = c.seed;
    j["epochs"] = c.epochs;
    j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                      {"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"epsilon", c.optimizer.epsilon}};
    j["update_mode"] = c.update_mode == UpdateMode::PerSubBatch ? "per_sub_batch" : "per_batch_accumulate";
    return j;
}

ExperimentConfig config_from(const json& j) {
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    c.sampler = sampler_from(j.at("sampler"));
    c.drop_last_batch = j.value("drop_last_batch", false);
    const auto& m = j.at("model");
    c.model.input_dim = m.value("input_dim", std::size_t{0});
    c.model.embed_dim = m.at("embed_dim").get<std::size_t>();
    c.model.hidden_dim = m.at("hidden_dim").get<std::size_t>();
    c.model.num_lstm_layers = m.value("num_lstm_layers", std::size_t{1});
    c.model.head_dims = m.value("head_dims", std::vector<std::size_t>{});
    c.model.num_classes = m.value("num_classes", std::size_t{0});
    c.model.dropout_rate = m.value("dropout_rate", 0.0);

    const auto& d = j.at("dataset");
    const std::string kind = d.value("kind", "synthetic");
    if (kind == "synthetic") {
        c.dataset.kind = DatasetSource::Kind::Synthetic;
        c.dataset.synthetic = data::parse_synthetic_manifest(d.dump());
    } else if (kind == "frame_folders") {
        c.dataset.kind = DatasetSource::Kind::FrameFolders;
        c.dataset.root = d.at("root").get<std::string>();
    } else {
        throw std::invalid_argument("config: unknown dataset kind '" + kind + "'");
    }
    c.seed = j.value("seed", c.seed);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
        c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
        c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
        c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
    }
    const std::string mode = j.value("update_mode", "per_sub_batch");
    if (mode == "per_sub_batch") {
        c.update_mode = UpdateMode::PerSubBatch;
    } else if (mode == "per_batch_accumulate") {
        c.update_mode = UpdateMode::PerBatchAccumulate;
    } else {
        throw std::invalid_argument("config: unknown update_mode '" + mode + "'");
    }
    c.validate();
    return c;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

enum class SeedTag : std::uint64_t { Split = 1, Init = 2, Dropout = 3, TestShuffle = 4 };

std::uint64_t derive_seed(std::uint64_t seed, SeedTag tag) {
    return splitmix64(seed * 8 + static_cast<std::uint64_t>(tag));
}

struct Fnv {
    std::uint64_t h = 1469598103934665603ULL;
    void mix(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    }
};

}  // namespace

std::string to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

ExperimentConfig config_from_json(const std::string& json_text) { return config_from(json::parse(json_text)); }

ExperimentConfig load_config(const fs::path& path) { return config_from_json(read_file(path)); }

std::vector<ExperimentConfig> configs_from_json(const std::string& json_text) {
    const json doc = json::parse(json_text);
    std::vector<ExperimentConfig> out;
    if (doc.is_array()) {
        for (const auto& j : doc) out.push_back(config_from(j));
    } else {
        const json base = doc.at("base");
        for (const auto& v : doc.at("variants")) {
            json merged = base;
            merged.merge_patch(v);
            out.push_back(config_from(merged));
        }
    }
    if (out.empty()) throw std::invalid_argument("configs file lists no experiments");
    return out;
}

std::uint64_t fingerprint(const seqnet::ModelParams& params) {
    Fnv f;
    for (const auto& t : params.tensors()) {
        f.mix(t.name.data(), t.name.size());
        f.mix(t.data.data(), t.data.size() * sizeof(double));
    }
    return f.h;
}

// ---- training --------------------------------------------------------------

std::vector<std::vector<FrameWindow>> sequence_windows(std::size_t timesteps, const SamplerChoice& s,
                                                       bool drop_last_batch, std::size_t* skipped) {
    std::vector<std::vector<FrameWindow>> out;
    const std::size_t L = s.config.batch_size;
    if (s.kind == SamplerKind::PlainBatch) {
        if (L == 0) throw std::invalid_argument("sequence_windows: batch_size must be positive");
        for (std::size_t b = 0; b * L < timesteps; ++b) {
            const std::size_t len = std::min(L, timesteps - b * L);
            if (len < L && drop_last_batch) break;
            out.push_back({FrameWindow{b * L, len}});
        }
        return out;
    }
    sampler::SteppedStream stream(timesteps, s.config, drop_last_batch);
    std::size_t current = static_cast<std::size_t>(-1);
    while (auto item = stream.next()) {
        if (item->batch_index != current) {
            out.emplace_back();
            current = item->batch_index;
        }
        out.back().push_back(FrameWindow{item->window.indices.front(), item->window.indices.size()});
    }
    if (skipped != nullptr) *skipped += stream.skipped_batches().size();
    return out;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.dataset.kind == DatasetSource::Kind::Synthetic) {
        return run_experiment(cfg, data::generate_synthetic(cfg.dataset.synthetic));
    }
    return run_experiment(cfg, data::load_frame_folders(cfg.dataset.root));
}

RunResult run_experiment(const ExperimentConfig& cfg, const data::Dataset& dataset) {
    cfg.validate();
    dataset.validate();
    if (dataset.empty()) throw std::invalid_argument("run_experiment: dataset is empty");

    RunResult res;
    res.model = cfg.model;
    if (res.model.input_dim == 0) res.model.input_dim = dataset.feature_dim();
    if (res.model.num_classes == 0) res.model.num_classes = dataset.num_classes();
    res.model.validate();
    if (res.model.input_dim != dataset.feature_dim() || res.model.num_classes < dataset.num_classes()) {
        throw std::invalid_argument("run_experiment: model does not fit the dataset");
    }

    auto [train, test] = data::split_train_test(dataset, {derive_seed(cfg.seed, SeedTag::Split)});
    test = data::shuffle_test(std::move(test), derive_seed(cfg.seed, SeedTag::TestShuffle));

    seqnet::ModelParams params = seqnet::init_params(res.model, derive_seed(cfg.seed, SeedTag::Init));
    seqnet::AdamState adam = seqnet::AdamState::for_params(params, cfg.optimizer);
    std::mt19937_64 dropout_rng(derive_seed(cfg.seed, SeedTag::Dropout));

    res.fingerprints.dataset = data::fingerprint(dataset);
    res.fingerprints.train = data::fingerprint(train);
    res.fingerprints.test = data::fingerprint(test);
    res.fingerprints.initial_params = fingerprint(params);
    {
        Fnv f;
        for (const auto& s : test.sequences) f.mix(s.source_id.data(), s.source_id.size() + 1);
        res.fingerprints.eval_order = f.h;
    }

    // windows depend only on sequence length, so plan them once
    std::vector<std::vector<std::vector<FrameWindow>>> plans;
    plans.reserve(train.size());
    for (const auto& s : train.sequences) {
        plans.push_back(sequence_windows(static_cast<std::size_t>(s.features.rows()), cfg.sampler,
                                         cfg.drop_last_batch, &res.skipped_tail_batches));
    }
    if (res.skipped_tail_batches > 0) {
        std::clog << "warning: " << cfg.name << ": " << res.skipped_tail_batches
                  << " tail batch(es) shorter than step_size are skipped every epoch\n";
    }

    seqnet::Gradients grads = params.zeros_like();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t v = 0; v < train.size(); ++v) {
            const auto& seq = train.sequences[v];
            for (const auto& batch : plans[v]) {
                if (cfg.update_mode == UpdateMode::PerSubBatch) {
                    for (const auto& w : batch) {
                        const auto fr = seqnet::forward(
                            seq.features.middleRows(static_cast<Eigen::Index>(w.begin),
                                                    static_cast<Eigen::Index>(w.length)),
                            res.model, params, &dropout_rng);
                        loss_sum += seqnet::cross_entropy(fr.logits, seq.label);
                        grads = params.zeros_like();
                        seqnet::accumulate_gradients(params, fr.cache, seq.label, grads, 1.0);
                        seqnet::adam_step(params, grads, adam);
                        ++steps;
                    }
                } else {
                    const double weight = 1.0 / static_cast<double>(batch.size());
                    grads = params.zeros_like();
                    double batch_loss = 0.0;
                    for (const auto& w : batch) {
                        const auto fr = seqnet::forward(
                            seq.features.middleRows(static_cast<Eigen::Index>(w.begin),
                                                    static_cast<Eigen::Index>(w.length)),
                            res.model, params, &dropout_rng);
                        batch_loss += weight * seqnet::cross_entropy(fr.logits, seq.label);
                        seqnet::accumulate_gradients(params, fr.cache, seq.label, grads, weight);
                    }
                    seqnet::adam_step(params, grads, adam);
                    loss_sum += batch_loss;
                    ++steps;
                }
            }
        }
        res.update_steps += steps;

        std::size_t correct = 0;
        for (const auto& s : test.sequences) {
            const auto fr = seqnet::forward(s.features, res.model, params);
            Eigen::Index arg = 0;
            fr.logits.maxCoeff(&arg);
            if (static_cast<std::size_t>(arg) == s.label) ++correct;
        }
        res.eval_counts.push_back(test.size());

        TrainingRecord rec;
        rec.epoch = epoch;
        rec.train_loss = steps == 0 ? 0.0 : loss_sum / static_cast<double>(steps);
        rec.test_accuracy = test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
        res.records.push_back(rec);
    }
    res.final_params = std::move(params);
    return res;
}

// ---- metrics and output ----------------------------------------------------

ConvergenceSummary convergence_metrics(std::span<const TrainingRecord> records, std::optional<double> tau,
                                       std::size_t tail_window) {
    if (records.empty()) throw std::invalid_argument("convergence_metrics: no records");
    if (tail_window == 0 || tail_window > records.size()) {
        throw WindowTooLarge("convergence_metrics: tail window " + std::to_string(tail_window) +
                             " does not fit " + std::to_string(records.size()) + " records");
    }
    ConvergenceSummary s;
    double min_loss = records.front().train_loss;
    for (const auto& r : records) min_loss = std::min(min_loss, r.train_loss);
    s.loss_threshold = tau.value_or(1.2 * min_loss);
    for (const auto& r : records) {
        if (r.train_loss <= s.loss_threshold) {
            s.epoch_to_loss_threshold = r.epoch;
            break;
        }
    }
    s.tail_window = tail_window;
    const auto tail = records.last(tail_window);
    double mean = 0.0;
    for (const auto& r : tail) mean += r.train_loss;
    mean /= static_cast<double>(tail_window);
    double var = 0.0;
    for (const auto& r : tail) var += (r.train_loss - mean) * (r.train_loss - mean);
    s.post_convergence_jitter = std::sqrt(var / static_cast<double>(tail_window));

    s.best_test_accuracy = records.front().test_accuracy;
    s.best_epoch = records.front().epoch;
    for (const auto& r : records) {
        if (r.test_accuracy > s.best_test_accuracy) {
            s.best_test_accuracy = r.test_accuracy;
            s.best_epoch = r.epoch;
        }
    }
    return s;
}

std::string records_csv(std::span<const TrainingRecord> records) {
    std::ostringstream os;
    os << "epoch,train_loss,test_accuracy\n" << std::fixed << std::setprecision(6);
    for (const auto& r : records) os << r.epoch << ',' << r.train_loss << ',' << r.test_accuracy << '\n';
    return os.str();
}

std::vector<TrainingRecord> parse_records_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "epoch,train_loss,test_accuracy") {
        throw std::invalid_argument("records CSV: unexpected header");
    }
    std::vector<TrainingRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        TrainingRecord r;
        char c1 = 0, c2 = 0;
        if (!(row >> r.epoch >> c1 >> r.train_loss >> c2 >> r.test_accuracy) || c1 != ',' || c2 != ',') {
            throw std::invalid_argument("records CSV: malformed row '" + line + "'");
        }
        out.push_back(r);
    }
    return out;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

void emit_csv(std::span<const TrainingRecord> records, const fs::path& path) {
    write_text_atomic(path, records_csv(records));
}

std::string ComparisonTable::csv() const {
    std::ostringstream os;
    os << "model";
    for (auto c : checkpoints) os << ",epoch " << c;
    os << '\n' << std::fixed << std::setprecision(6);
    for (const auto& row : rows) {
        os << row.name;
        for (const auto& a : row.accuracy) {
            os << ',';
            if (a) {
                os << *a;
            } else {
                os << "NA";
            }
        }
        os << '\n';
    }
    return os.str();
}

namespace {

json shared_part(const ExperimentConfig& c) {
    json j = config_json(c);
    j.erase("name");
    j.erase("sampler");
    j.erase("drop_last_batch");
    j.erase("update_mode");
    return j;
}

}  // namespace

ComparisonTable compare(std::span<const ExperimentConfig> configs, std::span<const std::size_t> checkpoints) {
    if (configs.empty()) throw std::invalid_argument("compare: no configs");
    const json shared = shared_part(configs.front());
    for (const auto& c : configs) {
        if (shared_part(c) != shared) {
            throw std::invalid_argument("compare: config '" + c.name +
                                        "' differs from the first in more than the sampler");
        }
    }
    const data::Dataset dataset = configs.front().dataset.kind == DatasetSource::Kind::Synthetic
                                      ? data::generate_synthetic(configs.front().dataset.synthetic)
                                      : data::load_frame_folders(configs.front().dataset.root);

    ComparisonTable table;
    table.checkpoints.assign(checkpoints.begin(), checkpoints.end());
    for (const auto& c : configs) {
        RunResult run = run_experiment(c, dataset);
        if (!table.runs.empty() && !(run.fingerprints == table.runs.front().fingerprints)) {
            throw std::logic_error("compare: shared artifacts diverged for config '" + c.name + "'");
        }
        ComparisonRow row;
        row.name = c.name;
        for (auto epoch : checkpoints) {
            if (epoch >= 1 && epoch <= run.records.size()) {
                row.accuracy.push_back(run.records[epoch - 1].test_accuracy);
            } else {
                row.accuracy.push_back(std::nullopt);
            }
        }
        table.rows.push_back(std::move(row));
        table.runs.push_back(std::move(run));
    }
    return table;
}

std::string gnuplot_script(std::span<const std::string> names, std::span<const std::string> csv_files) {
    std::ostringstream os;
    os << "# gnuplot -persist " << "plot.gp\n";
    os << "set datafile separator ','\n";
    os << "set key outside right\n";
    os << "set xlabel 'epoch'\n";
    os << "set multiplot layout 2,1\n";
    os << "set ylabel 'train loss'\n";
    os << "plot ";
    for (std::size_t i = 0; i < csv_files.size(); ++i) {
        os << (i ? ", \\\n     " : "") << "'" << csv_files[i] << "' every ::1 using 1:2 with lines title '"
           << names[i] << "'";
    }
    os << "\nset ylabel 'test accuracy'\n";
    os << "set yrange [0:1]\n";
    os << "plot ";
    for (std::size_t i = 0; i < csv_files.size(); ++i) {
        os << (i ? ", \\\n     " : "") << "'" << csv_files[i] << "' every ::1 using 1:3 with lines title '"
           << names[i] << "'";
    }
    os << "\nunset multiplot\n";
    return os.str();
}

}  // namespace stepseq::harness
