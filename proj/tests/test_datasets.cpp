#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "stepseq/datasets.hpp"

using namespace stepseq::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_video(const fs::path& dir, std::size_t frames, std::size_t dim, double base = 0.0) {
    fs::create_directories(dir);
    for (std::size_t t = 0; t < frames; ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "%03zu.txt", t + 1);
        std::ofstream out(dir / name);
        for (std::size_t d = 0; d < dim; ++d) out << (d ? " " : "") << base + static_cast<double>(t * 100 + d);
        out << '\n';
    }
}

// Spearman rank correlation; ties are not expected here.
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace

TEST_CASE("generate_synthetic") {
    SyntheticSpec spec;
    spec.num_classes = 5;
    spec.sequences_per_class = 40;
    spec.timesteps = 30;
    spec.feature_dim = 16;
    spec.redundancy = 0.9;
    spec.seed = 7;
    const auto ds = generate_synthetic(spec);
    CHECK(ds.size() == 200);
    CHECK(ds.num_classes() == 5);
    CHECK(ds.feature_dim() == 16);
    std::map<std::size_t, int> counts;
    for (const auto& s : ds.sequences) {
        ++counts[s.label];
        CHECK(s.features.rows() == 30);
    }
    for (const auto& [label, n] : counts) CHECK(n == 40);
    CHECK_NOTHROW(ds.validate());

    SUBCASE("deterministic under a fixed seed") {
        CHECK(fingerprint(generate_synthetic(spec)) == fingerprint(ds));
        auto other = spec;
        other.seed = 8;
        CHECK(fingerprint(generate_synthetic(other)) != fingerprint(ds));
    }
    SUBCASE("redundancy 1 repeats the first frame") {
        auto r1 = spec;
        r1.redundancy = 1.0;
        r1.sequences_per_class = 3;
        for (const auto& s : generate_synthetic(r1).sequences)
            for (Eigen::Index t = 1; t < s.features.rows(); ++t) CHECK(s.features.row(t) == s.features.row(0));
    }
    SUBCASE("total override assigns labels round-robin") {
        auto t = spec;
        t.total_sequences = 267;
        const auto big = generate_synthetic(t);
        CHECK(big.size() == 267);
        std::map<std::size_t, int> c;
        for (const auto& s : big.sequences) ++c[s.label];
        CHECK(c[0] == 54);
        CHECK(c[4] == 53);
        std::set<std::string> ids;
        for (const auto& s : big.sequences) ids.insert(s.source_id);
        CHECK(ids.size() == 267);
    }
    SUBCASE("bad parameters") {
        auto bad = spec;
        bad.redundancy = 1.5;
        CHECK_THROWS(generate_synthetic(bad));
        bad = spec;
        bad.timesteps = 0;
        CHECK_THROWS(generate_synthetic(bad));
    }
}

TEST_CASE("redundancy raises frame-to-frame correlation") {
    std::vector<double> rs, corr;
    for (int k = 0; k <= 9; ++k) {
        SyntheticSpec spec;
        spec.sequences_per_class = 20;  // 100 sequences
        spec.redundancy = 0.1 * k;
        spec.seed = 99;
        rs.push_back(spec.redundancy);
        corr.push_back(mean_lag1_correlation(generate_synthetic(spec)));
    }
    for (std::size_t i = 1; i < corr.size(); ++i) CHECK(corr[i] >= corr[i - 1]);
    CHECK(spearman(rs, corr) > 0.0);
}

TEST_CASE("manifest round trip") {
    SyntheticSpec spec;
    spec.seed = 1234567890123ULL;
    spec.total_sequences = 267;
    spec.redundancy = 0.35;
    const auto back = parse_synthetic_manifest(synthetic_manifest(spec));
    CHECK(back.seed == spec.seed);
    CHECK(back.total_sequences == spec.total_sequences);
    CHECK(back.redundancy == spec.redundancy);
    CHECK(fingerprint(generate_synthetic(back)) == fingerprint(generate_synthetic(spec)));
}

TEST_CASE("label_from_folder") {
    CHECK(label_from_folder("Jump_1") == "Jump");
    CHECK(label_from_folder("v_ApplyEyeMakeup_g01_c01") == "v_ApplyEyeMakeup_g01");
    CHECK(label_from_folder("Run") == "Run");
}

TEST_CASE("load_frame_folders") {
    TempDir tmp("stepseq_frames_test");
    SUBCASE("labels come from sorted folder-name prefixes") {
        write_video(tmp.path / "Jump_1", 3, 4);
        write_video(tmp.path / "Jump_2", 5, 4);
        write_video(tmp.path / "Run_1", 30, 4);
        std::ofstream(tmp.path / "manifest.json") << "{}";
        const auto ds = load_frame_folders(tmp.path);
        REQUIRE(ds.size() == 3);
        CHECK(ds.class_names == std::vector<std::string>{"Jump", "Run"});
        CHECK(ds.sequences[0].label == 0);
        CHECK(ds.sequences[1].label == 0);
        CHECK(ds.sequences[2].label == 1);
        CHECK(ds.sequences[2].features.rows() == 30);
        CHECK(ds.sequences[2].features.cols() == 4);
        CHECK(ds.sequences[0].features(2, 1) == 201.0);
    }
    SUBCASE("frame count and dimension") {
        write_video(tmp.path / "Walk_7", 30, 16);
        const auto ds = load_frame_folders(tmp.path);
        CHECK(ds.sequences[0].features.rows() == 30);
        CHECK(ds.sequences[0].features.cols() == 16);
    }
    SUBCASE("mixed feature dims") {
        write_video(tmp.path / "A_1", 3, 4);
        write_video(tmp.path / "B_1", 3, 5);
        try {
            load_frame_folders(tmp.path);
            FAIL("expected error");
        } catch (const DatasetError& e) {
            CHECK(e.kind() == DatasetError::Kind::InconsistentFeatureDim);
        }
    }
    SUBCASE("unreadable frame") {
        write_video(tmp.path / "A_1", 3, 4);
        std::ofstream(tmp.path / "A_1" / "002.txt") << "1 2 x 4\n";
        try {
            load_frame_folders(tmp.path);
            FAIL("expected error");
        } catch (const DatasetError& e) {
            CHECK(e.kind() == DatasetError::Kind::UnreadableFrame);
        }
    }
    SUBCASE("empty root") {
        try {
            load_frame_folders(tmp.path);
            FAIL("expected error");
        } catch (const DatasetError& e) {
            CHECK(e.kind() == DatasetError::Kind::EmptyRoot);
        }
        CHECK_THROWS_AS(load_frame_folders(tmp.path / "missing"), DatasetError);
    }
    SUBCASE("write then load reproduces a synthetic dataset") {
        SyntheticSpec spec;
        spec.num_classes = 3;
        spec.sequences_per_class = 2;
        spec.timesteps = 4;
        spec.feature_dim = 3;
        const auto ds = generate_synthetic(spec);
        write_frame_folders(ds, tmp.path);
        const auto back = load_frame_folders(tmp.path);
        CHECK(fingerprint(back) == fingerprint(ds));
    }
}

TEST_CASE("split_train_test") {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.sequences_per_class = 25;
    spec.timesteps = 2;
    spec.feature_dim = 2;
    const auto ds = generate_synthetic(spec);

    const auto [train, test] = split_train_test(ds, {11});
    CHECK(train.size() == 75);
    CHECK(test.size() == 25);
    std::set<std::string> tr, te;
    for (const auto& s : train.sequences) tr.insert(s.source_id);
    for (const auto& s : test.sequences) te.insert(s.source_id);
    CHECK(tr.size() == 75);
    CHECK(te.size() == 25);
    for (const auto& id : te) CHECK(tr.count(id) == 0);

    const auto again = split_train_test(ds, {11});
    CHECK(fingerprint(again.first) == fingerprint(train));
    CHECK(fingerprint(again.second) == fingerprint(test));

    CHECK(train_count(13) == 10);
    CHECK(train_count(100) == 75);
    CHECK(train_count(267) == 200);
    CHECK(train_count(13320) == 9990);
    auto small = spec;
    small.num_classes = 1;
    small.sequences_per_class = 13;
    const auto s13 = split_train_test(generate_synthetic(small), {3});
    CHECK(s13.first.size() == 10);
    CHECK(s13.second.size() == 3);

    SUBCASE("stratified option splits each class 3:1") {
        const auto [str, ste] = split_train_test(ds, {11, true});
        std::map<std::size_t, int> c;
        for (const auto& s : ste.sequences) ++c[s.label];
        for (std::size_t k = 0; k < 4; ++k) CHECK(c[k] == 6);  // round(18.75) = 19 train, 6 test
        CHECK(str.size() + ste.size() == 100);
    }
    CHECK_THROWS(split_train_test(Dataset{}, {1}));
}

TEST_CASE("shuffle_test") {
    SyntheticSpec spec;
    spec.num_classes = 2;
    spec.sequences_per_class = 10;
    spec.timesteps = 2;
    spec.feature_dim = 2;
    const auto ds = generate_synthetic(spec);

    const auto a = shuffle_test(ds, 5);
    const auto b = shuffle_test(ds, 5);
    CHECK(fingerprint(a) == fingerprint(b));
    std::multiset<std::string> before, after;
    for (const auto& s : ds.sequences) before.insert(s.source_id);
    for (const auto& s : a.sequences) after.insert(s.source_id);
    CHECK(before == after);
    CHECK(fingerprint(a) != fingerprint(ds));

    Dataset one;
    one.class_names = {"x"};
    one.sequences.push_back({Matrix::Ones(2, 2), 0, "x_1"});
    CHECK(fingerprint(shuffle_test(one, 9)) == fingerprint(one));

    const auto perm = seeded_permutation(50, 1);
    std::vector<std::size_t> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}
