#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Temporal-information measures over annotated video frames.
//
// Every quantity is built from area ratios R(X) = area(X) / area(frame).
// Logarithms are natural. Within-frame sums run over unordered pairs of
// distinct objects.
namespace stepseq::tinfo {

class TemporalInfoError : public std::invalid_argument {
public:
    enum class Kind {
        ZeroFrameArea,
        ZeroArea,
        OutOfFrame,
        DuplicateId,
        ZeroPrevRatio,
        OverlapExceedsPrev,
        DimensionMismatch,
        MissingGeometry,
        NonPositiveInner,
    };

    TemporalInfoError(Kind kind, const std::string& what) : std::invalid_argument(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct Box {
    double x = 0.0;
    double y = 0.0;
    double width = 0.0;
    double height = 0.0;

    double area() const { return width * height; }
};

/// Area of the intersection of two boxes; 0 when they only touch or are apart.
double intersection_area(const Box& a, const Box& b);

struct FrameObject {
    std::string object_id;
    std::string label;
    /// Set when the annotation carries geometry. Objects given only by area
    /// can enter area_ratio but not any pairwise or cross-frame term.
    std::optional<Box> box;
    double area = 0.0;

    static FrameObject with_box(std::string id, std::string label, Box box);
    static FrameObject with_area(std::string id, std::string label, double area);
};

class FrameScene {
public:
    FrameScene() = default;
    /// Validates frame area, object areas, in-frame boxes and distinct ids.
    FrameScene(double width, double height, std::vector<FrameObject> objects);

    double width() const { return width_; }
    double height() const { return height_; }
    double frame_area() const { return width_ * height_; }
    const std::vector<FrameObject>& objects() const { return objects_; }
    const FrameObject* find(const std::string& object_id) const;

private:
    double width_ = 0.0;
    double height_ = 0.0;
    std::vector<FrameObject> objects_;
};

struct TemporalInfoReport {
    double t_between = 0.0;
    double t_within_overlap = 0.0;
    double t_within_disjoint = 0.0;
    double t_within = 0.0;
    double t_total = 0.0;
};

double area_ratio(const FrameObject& object, const FrameScene& scene);

/// R(A_pf ∩ A_nf) / R(A_pf), in [0, 1].
double between_frame_object(double prev_ratio, double overlap_ratio);

/// Sum of between_frame_object over object ids present in both frames.
double between_frames(const FrameScene& prev, const FrameScene& next);

/// R(A∩B) * ln(R(A∩B) / (R(A) R(B))), with 0 * ln 0 := 0.
double overlap_pair_term(double ratio_a, double ratio_b, double ratio_ab);

/// ln(R(A∪B) * ln(R(A∪B) / (R(A) R(B)))) with R(A∪B) = R(A) + R(B).
/// Throws NonPositiveInner when the inner product is not positive.
double disjoint_pair_term(double ratio_a, double ratio_b);

double within_frame_overlapping(const FrameScene& scene);
double within_frame_disjoint(const FrameScene& scene);
double within_frame(const FrameScene& scene);

/// Between-frame term for prev -> next plus the within-frame term of next.
TemporalInfoReport total_temporal_info(const FrameScene& prev, const FrameScene& next);

/// Annotation document: {"frames": [{"width", "height", "objects": [
///   {"object_id", "label", "box": [x, y, w, h]} | {..., "area": a}]}]}
std::vector<FrameScene> parse_annotations(const std::string& json_text);
std::vector<FrameScene> load_annotations(const std::filesystem::path& path);

struct PairReport {
    std::size_t prev = 0;
    std::size_t next = 0;
    TemporalInfoReport report;
};

/// Reports for every consecutive frame pair (i, i + 1).
std::vector<PairReport> consecutive_reports(std::span<const FrameScene> frames);

/// CSV with one row per pair followed by a "mean" aggregate row.
std::string reports_csv(std::span<const PairReport> pairs);

}  // namespace stepseq::tinfo
