#include "doctest.h"

#include <cmath>
#include <random>

#include "stepseq/temporal_info.hpp"

using namespace stepseq::tinfo;

namespace {

FrameObject obj(const std::string& id, double x, double y, double w, double h) {
    return FrameObject::with_box(id, "thing", Box{x, y, w, h});
}

TemporalInfoError::Kind kind_of(auto&& f) {
    try {
        f();
    } catch (const TemporalInfoError& e) {
        return e.kind();
    }
    FAIL("expected TemporalInfoError");
    return TemporalInfoError::Kind::ZeroArea;
}

// Integer-aligned random boxes keep intersections exact under translation.
FrameScene random_scene(std::mt19937_64& rng, int k, int W, int H) {
    std::vector<FrameObject> objs;
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> wd(1, W / 2), hd(1, H / 2);
        const int w = wd(rng), h = hd(rng);
        std::uniform_int_distribution<int> xd(0, W - w), yd(0, H - h);
        objs.push_back(obj("o" + std::to_string(i), xd(rng), yd(rng), w, h));
    }
    return FrameScene(W, H, std::move(objs));
}

FrameScene transformed(const FrameScene& s, double dx, double dy, double scale) {
    std::vector<FrameObject> objs;
    for (const auto& o : s.objects()) {
        const Box& b = *o.box;
        objs.push_back(FrameObject::with_box(
            o.object_id, o.label,
            Box{(b.x + dx) * scale, (b.y + dy) * scale, b.width * scale, b.height * scale}));
    }
    return FrameScene(s.width() * scale, s.height() * scale, std::move(objs));
}

}  // namespace

TEST_CASE("area_ratio") {
    FrameScene s(100, 100, {obj("a", 0, 0, 20, 30), obj("full", 0, 0, 100, 100)});
    CHECK(area_ratio(s.objects()[0], s) == doctest::Approx(0.06).epsilon(1e-15));
    CHECK(area_ratio(s.objects()[1], s) == 1.0);

    FrameScene wide(200, 100, {obj("a", 10, 10, 50, 50)});
    CHECK(area_ratio(wide.objects()[0], wide) == 0.125);

    FrameScene by_area(10, 10, {FrameObject::with_area("x", "blob", 25.0)});
    CHECK(area_ratio(by_area.objects()[0], by_area) == 0.25);
}

TEST_CASE("scene ingestion rejects bad annotations") {
    using K = TemporalInfoError::Kind;
    CHECK(kind_of([] { FrameScene(0, 10, {}); }) == K::ZeroFrameArea);
    CHECK(kind_of([] { FrameScene(10, 10, {obj("a", 0, 0, 0, 5)}); }) == K::ZeroArea);
    CHECK(kind_of([] { FrameScene(10, 10, {obj("a", 8, 0, 5, 5)}); }) == K::OutOfFrame);
    CHECK(kind_of([] { FrameScene(10, 10, {obj("a", 0, 0, 2, 2), obj("a", 3, 3, 2, 2)}); }) ==
          K::DuplicateId);
    CHECK(kind_of([] { FrameScene(10, 10, {FrameObject::with_area("a", "", 101)}); }) == K::OutOfFrame);
}

TEST_CASE("between_frame_object") {
    CHECK(between_frame_object(0.2, 0.2) == 1.0);
    CHECK(between_frame_object(0.2, 0.1) == 0.5);
    CHECK(between_frame_object(0.2, 0.0) == 0.0);
    using K = TemporalInfoError::Kind;
    CHECK(kind_of([] { between_frame_object(0.0, 0.0); }) == K::ZeroPrevRatio);
    CHECK(kind_of([] { between_frame_object(0.2, 0.3); }) == K::OverlapExceedsPrev);
}

TEST_CASE("between_frames") {
    SUBCASE("identical scenes score one per object") {
        FrameScene s(100, 100, {obj("a", 0, 0, 10, 10), obj("b", 50, 50, 20, 20), obj("c", 5, 5, 30, 3)});
        CHECK(between_frames(s, s) == 3.0);
    }
    SUBCASE("half overlap") {
        FrameScene prev(100, 100, {obj("a", 0, 0, 20, 100)});
        FrameScene next(100, 100, {obj("a", 10, 0, 20, 100)});
        CHECK(between_frames(prev, next) == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("no shared ids") {
        FrameScene prev(100, 100, {obj("a", 0, 0, 20, 100)});
        FrameScene next(100, 100, {obj("b", 0, 0, 20, 100)});
        CHECK(between_frames(prev, next) == 0.0);
    }
    SUBCASE("object leaves") {
        FrameScene prev(100, 100, {obj("a", 0, 0, 20, 20)});
        FrameScene next(100, 100, {obj("a", 60, 60, 20, 20)});
        CHECK(between_frames(prev, next) == 0.0);
    }
    SUBCASE("dimension mismatch") {
        FrameScene prev(100, 100, {});
        FrameScene next(100, 90, {});
        CHECK(kind_of([&] { between_frames(prev, next); }) == TemporalInfoError::Kind::DimensionMismatch);
    }
    SUBCASE("area-only objects cannot be matched geometrically") {
        FrameScene prev(10, 10, {FrameObject::with_area("a", "", 4)});
        CHECK(kind_of([&] { between_frames(prev, prev); }) == TemporalInfoError::Kind::MissingGeometry);
    }
}

TEST_CASE("within-frame terms") {
    const double overlap_fixture = 0.25 * std::log(1.25);
    const double disjoint_fixture = std::log(0.3 * std::log(15.0));

    FrameScene single(100, 100, {obj("a", 0, 0, 30, 30)});
    CHECK(within_frame_overlapping(single) == 0.0);
    CHECK(within_frame_disjoint(single) == 0.0);

    // R(A) = 0.5, R(B) = 0.4, R(A∩B) = 0.25
    FrameScene overlap(100, 100, {obj("a", 0, 0, 50, 100), obj("b", 25, 0, 40, 100)});
    CHECK(within_frame_overlapping(overlap) == doctest::Approx(overlap_fixture).epsilon(1e-12));
    CHECK(within_frame_overlapping(overlap) == doctest::Approx(0.055786).epsilon(1e-5));
    CHECK(within_frame_disjoint(overlap) == 0.0);
    CHECK(within_frame(overlap) == doctest::Approx(overlap_fixture).epsilon(1e-12));

    // R(A) = 0.1, R(B) = 0.2, disjoint
    FrameScene disjoint(100, 100, {obj("a", 0, 0, 10, 100), obj("b", 50, 0, 20, 100)});
    CHECK(within_frame_overlapping(disjoint) == 0.0);
    CHECK(within_frame_disjoint(disjoint) == doctest::Approx(disjoint_fixture).epsilon(1e-12));
    CHECK(std::abs(within_frame_disjoint(disjoint) - (-0.207744)) < 1e-6);
    CHECK(within_frame(disjoint) == doctest::Approx(disjoint_fixture).epsilon(1e-12));

    // Positive branch: R(A) = R(B) = 0.3
    FrameScene positive(100, 100, {obj("a", 0, 0, 30, 100), obj("b", 60, 0, 30, 100)});
    CHECK(std::abs(within_frame_disjoint(positive) - 0.129511) < 1e-6);
    CHECK(within_frame_disjoint(positive) > 0.0);

    // Touching edges count as disjoint.
    FrameScene touching(100, 100, {obj("a", 0, 0, 10, 100), obj("b", 10, 0, 20, 100)});
    CHECK(within_frame_disjoint(touching) == doctest::Approx(disjoint_fixture).epsilon(1e-12));

    FrameScene empty(100, 100, {});
    CHECK(within_frame(empty) == 0.0);
}

TEST_CASE("pair terms") {
    CHECK(overlap_pair_term(0.5, 0.4, 0.0) == 0.0);
    CHECK(overlap_pair_term(0.5, 0.4, 0.25) == overlap_pair_term(0.4, 0.5, 0.25));
    CHECK(disjoint_pair_term(0.1, 0.2) == disjoint_pair_term(0.2, 0.1));
    CHECK(kind_of([] { disjoint_pair_term(2.0, 2.0); }) == TemporalInfoError::Kind::NonPositiveInner);
}

TEST_CASE("total_temporal_info") {
    SUBCASE("identical single-object frames") {
        FrameScene s(100, 100, {obj("a", 10, 10, 20, 20)});
        const auto r = total_temporal_info(s, s);
        CHECK(r.t_between == 1.0);
        CHECK(r.t_within == 0.0);
        CHECK(r.t_total == 1.0);
    }
    SUBCASE("moving object plus an overlapping newcomer") {
        // prev ratio 0.2, overlap 0.1; in next, A (0.5) overlaps B (0.4) by 0.25
        FrameScene prev(100, 100, {obj("a", 0, 0, 20, 100)});
        FrameScene next(100, 100, {obj("a", 10, 0, 50, 100), obj("b", 35, 0, 40, 100)});
        const auto r = total_temporal_info(prev, next);
        CHECK(r.t_between == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(r.t_within_overlap == doctest::Approx(0.25 * std::log(1.25)).epsilon(1e-12));
        CHECK(r.t_within_disjoint == 0.0);
        CHECK(r.t_total == doctest::Approx(0.555786).epsilon(1e-6));
        CHECK(r.t_within == r.t_within_overlap + r.t_within_disjoint);
        CHECK(r.t_total == r.t_between + r.t_within);
    }
    SUBCASE("empty frames") {
        FrameScene e(64, 48, {});
        const auto r = total_temporal_info(e, e);
        CHECK(r.t_between == 0.0);
        CHECK(r.t_within == 0.0);
        CHECK(r.t_total == 0.0);
    }
}

TEST_CASE("metric properties on random scenes") {
    std::mt19937_64 rng(12345);
    for (int trial = 0; trial < 300; ++trial) {
        const int W = 64 + static_cast<int>(rng() % 200);
        const int H = 48 + static_cast<int>(rng() % 200);
        const int k = 1 + static_cast<int>(rng() % 5);
        const FrameScene prev = random_scene(rng, k, W, H);
        // next frame: same ids, jittered boxes
        std::vector<FrameObject> moved;
        for (const auto& o : prev.objects()) {
            Box b = *o.box;
            const int dx = static_cast<int>(rng() % 9) - 4;
            const int dy = static_cast<int>(rng() % 9) - 4;
            b.x = std::clamp(b.x + dx, 0.0, W - b.width);
            b.y = std::clamp(b.y + dy, 0.0, H - b.height);
            moved.push_back(FrameObject::with_box(o.object_id, o.label, b));
        }
        const FrameScene next(W, H, std::move(moved));
        const auto base = total_temporal_info(prev, next);

        CHECK(base.t_within == base.t_within_overlap + base.t_within_disjoint);
        CHECK(base.t_total == base.t_between + base.t_within);

        for (const auto& o : prev.objects()) {
            const auto* n = next.find(o.object_id);
            const double t = between_frame_object(
                area_ratio(o, prev), intersection_area(*o.box, *n->box) / prev.frame_area());
            CHECK(t >= 0.0);
            CHECK(t <= 1.0);
        }

        // reversed object order flips every pair (A, B) -> (B, A)
        std::vector<FrameObject> rev(next.objects().rbegin(), next.objects().rend());
        const FrameScene next_rev(W, H, std::move(rev));
        CHECK(within_frame_overlapping(next_rev) == doctest::Approx(base.t_within_overlap).epsilon(1e-12));
        CHECK(within_frame_disjoint(next_rev) == doctest::Approx(base.t_within_disjoint).epsilon(1e-12));

        // translation inside an enlarged frame: shifted vs unshifted boxes
        const double dx = static_cast<double>(rng() % 17), dy = static_cast<double>(rng() % 17);
        auto shift = [&](const FrameScene& s, double ox, double oy) {
            std::vector<FrameObject> out;
            for (const auto& o : s.objects()) {
                Box b = *o.box;
                b.x += ox;
                b.y += oy;
                out.push_back(FrameObject::with_box(o.object_id, o.label, b));
            }
            return FrameScene(W + dx, H + dy, std::move(out));
        };
        const auto ref = total_temporal_info(shift(prev, 0, 0), shift(next, 0, 0));
        const auto shifted = total_temporal_info(shift(prev, dx, dy), shift(next, dx, dy));
        CHECK(shifted.t_between == doctest::Approx(ref.t_between).epsilon(1e-12));
        CHECK(shifted.t_within == doctest::Approx(ref.t_within).epsilon(1e-12));
        CHECK(shifted.t_total == doctest::Approx(ref.t_total).epsilon(1e-12));

        // uniform rescale of frame and boxes
        const double scale = 0.25 + static_cast<double>(rng() % 1000) / 250.0;
        const auto scaled = total_temporal_info(transformed(prev, 0, 0, scale), transformed(next, 0, 0, scale));
        CHECK(scaled.t_between == doctest::Approx(base.t_between).epsilon(1e-10));
        CHECK(scaled.t_within_overlap == doctest::Approx(base.t_within_overlap).epsilon(1e-10));
        CHECK(scaled.t_within_disjoint == doctest::Approx(base.t_within_disjoint).epsilon(1e-10));
        CHECK(scaled.t_total == doctest::Approx(base.t_total).epsilon(1e-10));
    }
}

TEST_CASE("annotation parsing and CSV report") {
    const std::string doc = R"({
      "frames": [
        {"width": 100, "height": 100, "objects": [{"object_id": "a", "label": "car", "box": [0, 0, 20, 100]}]},
        {"width": 100, "height": 100, "objects": [
          {"object_id": "a", "label": "car", "box": [10, 0, 50, 100]},
          {"object_id": "b", "label": "road", "box": [35, 0, 40, 100]}]}
      ]})";
    const auto frames = parse_annotations(doc);
    REQUIRE(frames.size() == 2);
    CHECK(frames[1].objects().size() == 2);
    const auto pairs = consecutive_reports(frames);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].report.t_total == doctest::Approx(0.5 + 0.25 * std::log(1.25)).epsilon(1e-12));

    const std::string csv = reports_csv(pairs);
    CHECK(csv.rfind("prev,next,t_between,t_within_overlap,t_within_disjoint,t_within,t_total\n", 0) == 0);
    CHECK(csv.find("0,1,0.500000000,0.055785888,0.000000000,0.055785888,0.555785888\n") != std::string::npos);
    CHECK(csv.find("mean,,") != std::string::npos);

    CHECK_THROWS(parse_annotations(R"({"frames": [{"width": 10, "height": 10,
        "objects": [{"object_id": "a", "box": [0, 0, 1]}]}]})"));
}
