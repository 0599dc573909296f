#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "stepseq/datasets.hpp"
#include "stepseq/harness.hpp"
#include "stepseq/sampler.hpp"
#include "stepseq/seqnet.hpp"
#include "stepseq/temporal_info.hpp"

namespace fs = std::filesystem;
using namespace stepseq;
using nlohmann::ordered_json;

namespace {

ordered_json summary_json(const harness::ExperimentConfig& cfg, const harness::RunResult& run,
                          std::size_t tail_window) {
    ordered_json j;
    j["name"] = cfg.name;
    j["epochs"] = run.records.size();
    j["update_steps"] = run.update_steps;
    j["skipped_tail_batches"] = run.skipped_tail_batches;
    if (run.records.empty()) return j;
    const std::size_t k = std::min(tail_window, run.records.size());
    const auto m = harness::convergence_metrics(run.records, std::nullopt, k);
    j["final_train_loss"] = run.records.back().train_loss;
    j["final_test_accuracy"] = run.records.back().test_accuracy;
    j["best_test_accuracy"] = m.best_test_accuracy;
    j["best_epoch"] = m.best_epoch;
    j["loss_threshold"] = m.loss_threshold;
    j["epoch_to_loss_threshold"] =
        m.epoch_to_loss_threshold ? ordered_json(*m.epoch_to_loss_threshold) : ordered_json(nullptr);
    j["tail_window"] = m.tail_window;
    j["post_convergence_jitter"] = m.post_convergence_jitter;
    return j;
}

int cmd_plan(std::size_t L, std::size_t m, std::size_t n, std::optional<std::size_t> dataset_len, bool as_json) {
    const sampler::SamplerConfig cfg{L, m, n};
    const auto plan = sampler::window_starts(cfg);
    const auto count = sampler::iteration_count(cfg);
    if (as_json) {
        ordered_json j;
        j["batch_size"] = L;
        j["step_size"] = m;
        j["step_stride"] = n;
        j["d"] = count.d_exact.str();
        j["window_count"] = count.window_count;
        j["starts"] = plan.starts;
        j["dropped_tail_len"] = plan.dropped_tail_len;
        if (dataset_len) {
            sampler::SteppedStream stream(*dataset_len, cfg);
            const auto items = stream.collect();
            j["dataset_len"] = *dataset_len;
            j["batches"] = stream.num_batches();
            j["sub_batches"] = items.size();
            j["skipped_batches"] = stream.skipped_batches();
        }
        std::cout << j.dump(2) << '\n';
        return 0;
    }
    std::cout << "L=" << L << " m=" << m << " n=" << n << '\n';
    std::cout << "d = (L - m) / n = " << count.d_exact.str() << '\n';
    std::cout << "sub-batches per batch: " << count.window_count << '\n';
    for (std::size_t i = 0; i < plan.starts.size(); ++i) {
        std::cout << "  " << i << ": [" << plan.starts[i] << ", " << plan.starts[i] + plan.window_len << ")\n";
    }
    std::cout << "dropped tail: " << plan.dropped_tail_len << '\n';
    if (dataset_len) {
        sampler::SteppedStream stream(*dataset_len, cfg);
        const auto items = stream.collect();
        std::cout << "dataset of " << *dataset_len << ": " << stream.num_batches() << " batches, " << items.size()
                  << " sub-batches, " << stream.skipped_batches().size() << " skipped\n";
    }
    return 0;
}

int cmd_tinfo(const fs::path& annotations, const std::vector<std::size_t>& pair) {
    const auto frames = tinfo::load_annotations(annotations);
    if (pair.empty()) {
        std::cout << tinfo::reports_csv(tinfo::consecutive_reports(frames));
        return 0;
    }
    const std::size_t i = pair[0], j = pair[1];
    if (i >= frames.size() || j >= frames.size()) {
        throw std::out_of_range("pair index beyond " + std::to_string(frames.size()) + " frames");
    }
    const std::vector<tinfo::PairReport> one{{i, j, tinfo::total_temporal_info(frames[i], frames[j])}};
    const std::string csv = tinfo::reports_csv(one);
    std::cout << csv.substr(0, csv.rfind("mean,"));
    return 0;
}

int cmd_generate(const data::SyntheticSpec& spec, const fs::path& out) {
    const auto ds = data::generate_synthetic(spec);
    data::write_frame_folders(ds, out);
    harness::write_text_atomic(out / "manifest.json", data::synthetic_manifest(spec));
    std::cout << "wrote " << ds.size() << " sequences of " << spec.timesteps << " x " << spec.feature_dim << " to "
              << out.string() << '\n';
    return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& out, std::optional<std::size_t> epochs,
              std::size_t tail_window) {
    auto cfg = harness::load_config(config_path);
    if (epochs) cfg.epochs = *epochs;
    const auto run = harness::run_experiment(cfg);
    fs::create_directories(out);
    harness::emit_csv(run.records, out / "records.csv");
    harness::write_text_atomic(out / "config.json", harness::to_json(cfg));
    harness::write_text_atomic(out / "summary.json", summary_json(cfg, run, tail_window).dump(2) + "\n");
    const std::vector<std::string> names{cfg.name}, files{"records.csv"};
    harness::write_text_atomic(out / "plot.gp", harness::gnuplot_script(names, files));
    seqnet::save_checkpoint(out / "checkpoint.txt", run.model, run.final_params);
    if (!run.records.empty()) {
        const auto& last = run.records.back();
        std::cout << cfg.name << ": epoch " << last.epoch << " loss " << std::fixed << std::setprecision(6)
                  << last.train_loss << " accuracy " << last.test_accuracy << '\n';
    }
    return 0;
}

int cmd_compare(const fs::path& configs_path, const std::vector<std::size_t>& checkpoints, const fs::path& out,
                std::size_t tail_window) {
    std::ifstream in(configs_path);
    if (!in) throw std::runtime_error("cannot open " + configs_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto configs = harness::configs_from_json(ss.str());
    const auto table = harness::compare(configs, checkpoints);

    fs::create_directories(out);
    ordered_json summary = ordered_json::array();
    std::vector<std::string> names, files;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const std::string file = configs[i].name + ".csv";
        harness::emit_csv(table.runs[i].records, out / file);
        names.push_back(configs[i].name);
        files.push_back(file);
        summary.push_back(summary_json(configs[i], table.runs[i], tail_window));
    }
    harness::write_text_atomic(out / "comparison.csv", table.csv());
    harness::write_text_atomic(out / "summary.json", summary.dump(2) + "\n");
    harness::write_text_atomic(out / "plot.gp", harness::gnuplot_script(names, files));
    std::cout << table.csv();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stepped-sampler sequence training toolkit"};
    app.require_subcommand(1);

    auto* plan = app.add_subcommand("plan", "show the sub-batch windows of one batch");
    std::size_t L = 0, m = 0, n = 0;
    std::optional<std::size_t> dataset_len;
    bool plan_json = false;
    plan->add_option("--batch-size,-L", L, "batch size L")->required();
    plan->add_option("--step-size,-m", m, "window length m")->required();
    plan->add_option("--step-stride,-n", n, "window stride n")->required();
    plan->add_option("--dataset-len", dataset_len, "also stream a dataset of this length");
    plan->add_flag("--json", plan_json, "print JSON");

    auto* ti = app.add_subcommand("tinfo", "temporal information of annotated frames");
    fs::path annotations;
    std::vector<std::size_t> pair;
    ti->add_option("--annotations", annotations, "annotation JSON")->required()->check(CLI::ExistingFile);
    ti->add_option("--pair", pair, "report a single (prev, next) frame pair")->expected(2);

    auto* gen = app.add_subcommand("generate", "write a synthetic dataset as frame folders");
    data::SyntheticSpec spec;
    std::optional<std::size_t> total;
    fs::path gen_out;
    gen->add_option("--classes", spec.num_classes);
    gen->add_option("--per-class", spec.sequences_per_class);
    gen->add_option("--total", total, "total sequences, labels round-robin");
    gen->add_option("--timesteps", spec.timesteps);
    gen->add_option("--feature-dim", spec.feature_dim);
    gen->add_option("--redundancy", spec.redundancy);
    gen->add_option("--seed", spec.seed);
    gen->add_option("--out", gen_out)->required();

    auto* train = app.add_subcommand("train", "train one configuration");
    fs::path config_path, train_out;
    std::optional<std::size_t> epochs;
    std::size_t tail_window = 20;
    train->add_option("--config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--out", train_out)->required();
    train->add_option("--epochs", epochs, "override the configured epoch count");
    train->add_option("--tail-window", tail_window, "K for the jitter metric");

    auto* cmp = app.add_subcommand("compare", "train several sampler variants on shared data");
    fs::path configs_path, cmp_out;
    std::vector<std::size_t> checkpoints{10, 50, 100, 120, 150};
    cmp->add_option("--configs", configs_path, "array or base+variants JSON")->required()->check(CLI::ExistingFile);
    cmp->add_option("--checkpoints", checkpoints, "epochs to tabulate")->delimiter(',');
    cmp->add_option("--out", cmp_out)->required();
    cmp->add_option("--tail-window", tail_window, "K for the jitter metric");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*plan) return cmd_plan(L, m, n, dataset_len, plan_json);
        if (*ti) return cmd_tinfo(annotations, pair);
        if (*gen) {
            spec.total_sequences = total;
            return cmd_generate(spec, gen_out);
        }
        if (*train) return cmd_train(config_path, train_out, epochs, tail_window);
        if (*cmp) return cmd_compare(configs_path, checkpoints, cmp_out, tail_window);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
