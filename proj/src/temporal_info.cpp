#include "stepseq/temporal_info.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace stepseq::tinfo {

namespace {

using Kind = TemporalInfoError::Kind;

// Overlap ratios at or below this count as "no overlap"; box edges may exceed
// the frame by this fraction of its size. Both absorb rounding in coordinates.
constexpr double kRatioTolerance = 1e-12;
constexpr double kEdgeTolerance = 1e-9;

double clean_ratio(double r) { return r <= kRatioTolerance ? 0.0 : r; }

const Box& require_box(const FrameObject& o) {
    if (!o.box) {
        throw TemporalInfoError(Kind::MissingGeometry,
                                "object '" + o.object_id + "' has no box; overlap terms need geometry");
    }
    return *o.box;
}

}  // namespace

double intersection_area(const Box& a, const Box& b) {
    const double w = std::min(a.x + a.width, b.x + b.width) - std::max(a.x, b.x);
    const double h = std::min(a.y + a.height, b.y + b.height) - std::max(a.y, b.y);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

FrameObject FrameObject::with_box(std::string id, std::string label, Box box) {
    FrameObject o;
    o.object_id = std::move(id);
    o.label = std::move(label);
    o.area = box.area();
    o.box = box;
    return o;
}

FrameObject FrameObject::with_area(std::string id, std::string label, double area) {
    FrameObject o;
    o.object_id = std::move(id);
    o.label = std::move(label);
    o.area = area;
    return o;
}

FrameScene::FrameScene(double width, double height, std::vector<FrameObject> objects)
    : width_(width), height_(height), objects_(std::move(objects)) {
    if (!(width_ > 0.0) || !(height_ > 0.0)) {
        throw TemporalInfoError(Kind::ZeroFrameArea, "frame area must be positive");
    }
    std::unordered_set<std::string> seen;
    for (const auto& o : objects_) {
        if (!seen.insert(o.object_id).second) {
            throw TemporalInfoError(Kind::DuplicateId, "duplicate object id '" + o.object_id + "'");
        }
        if (!(o.area > 0.0)) {
            throw TemporalInfoError(Kind::ZeroArea, "object '" + o.object_id + "' has zero area");
        }
        if (o.box) {
            const Box& b = *o.box;
            const double ex = kEdgeTolerance * width_;
            const double ey = kEdgeTolerance * height_;
            if (b.x < -ex || b.y < -ey || b.x + b.width > width_ + ex || b.y + b.height > height_ + ey) {
                throw TemporalInfoError(Kind::OutOfFrame, "object '" + o.object_id + "' leaves the frame");
            }
        } else if (o.area > frame_area()) {
            throw TemporalInfoError(Kind::OutOfFrame,
                                    "object '" + o.object_id + "' is larger than the frame");
        }
    }
}

const FrameObject* FrameScene::find(const std::string& object_id) const {
    auto it = std::find_if(objects_.begin(), objects_.end(),
                           [&](const FrameObject& o) { return o.object_id == object_id; });
    return it == objects_.end() ? nullptr : &*it;
}

double area_ratio(const FrameObject& object, const FrameScene& scene) {
    const double frame = scene.frame_area();
    if (!(frame > 0.0)) throw TemporalInfoError(Kind::ZeroFrameArea, "frame area must be positive");
    return object.area / frame;
}

double between_frame_object(double prev_ratio, double overlap_ratio) {
    if (!(prev_ratio > 0.0)) {
        throw TemporalInfoError(Kind::ZeroPrevRatio, "previous-frame area ratio must be positive");
    }
    if (overlap_ratio < 0.0 || overlap_ratio > prev_ratio) {
        throw TemporalInfoError(Kind::OverlapExceedsPrev,
                                "overlap ratio must lie in [0, previous-frame ratio]");
    }
    return overlap_ratio / prev_ratio;
}

double between_frames(const FrameScene& prev, const FrameScene& next) {
    if (prev.width() != next.width() || prev.height() != next.height()) {
        throw TemporalInfoError(Kind::DimensionMismatch, "frames differ in dimensions");
    }
    double total = 0.0;
    for (const auto& a_prev : prev.objects()) {
        const FrameObject* a_next = next.find(a_prev.object_id);
        if (a_next == nullptr) continue;
        const double prev_ratio = area_ratio(a_prev, prev);
        const double overlap =
            std::min(intersection_area(require_box(a_prev), require_box(*a_next)), a_prev.area);
        total += between_frame_object(prev_ratio, clean_ratio(overlap / prev.frame_area()));
    }
    return total;
}

double overlap_pair_term(double ratio_a, double ratio_b, double ratio_ab) {
    if (ratio_ab <= 0.0) return 0.0;
    return ratio_ab * std::log(ratio_ab / (ratio_a * ratio_b));
}

double disjoint_pair_term(double ratio_a, double ratio_b) {
    const double ratio_union = ratio_a + ratio_b;
    const double inner = ratio_union * std::log(ratio_union / (ratio_a * ratio_b));
    if (!(inner > 0.0)) {
        throw TemporalInfoError(Kind::NonPositiveInner,
                                "disjoint pair term undefined: R(A)+R(B) must exceed R(A)R(B)");
    }
    return std::log(inner);
}

namespace {

template <typename F>
void for_each_pair(const FrameScene& scene, F&& f) {
    const auto& objs = scene.objects();
    const double frame = scene.frame_area();
    for (std::size_t i = 0; i < objs.size(); ++i) {
        for (std::size_t j = i + 1; j < objs.size(); ++j) {
            const double ra = area_ratio(objs[i], scene);
            const double rb = area_ratio(objs[j], scene);
            const double rab =
                clean_ratio(intersection_area(require_box(objs[i]), require_box(objs[j])) / frame);
            f(ra, rb, rab);
        }
    }
}

}  // namespace

double within_frame_overlapping(const FrameScene& scene) {
    double total = 0.0;
    for_each_pair(scene, [&](double ra, double rb, double rab) {
        if (rab > 0.0) total += overlap_pair_term(ra, rb, rab);
    });
    return total;
}

double within_frame_disjoint(const FrameScene& scene) {
    double total = 0.0;
    for_each_pair(scene, [&](double ra, double rb, double rab) {
        if (rab == 0.0) total += disjoint_pair_term(ra, rb);
    });
    return total;
}

double within_frame(const FrameScene& scene) {
    return within_frame_overlapping(scene) + within_frame_disjoint(scene);
}

TemporalInfoReport total_temporal_info(const FrameScene& prev, const FrameScene& next) {
    TemporalInfoReport r;
    r.t_between = between_frames(prev, next);
    r.t_within_overlap = within_frame_overlapping(next);
    r.t_within_disjoint = within_frame_disjoint(next);
    r.t_within = r.t_within_overlap + r.t_within_disjoint;
    r.t_total = r.t_between + r.t_within;
    return r;
}

std::vector<FrameScene> parse_annotations(const std::string& json_text) {
    const auto doc = nlohmann::json::parse(json_text);
    std::vector<FrameScene> frames;
    for (const auto& f : doc.at("frames")) {
        std::vector<FrameObject> objects;
        for (const auto& o : f.value("objects", nlohmann::json::array())) {
            const std::string id = o.at("object_id").is_string()
                                       ? o.at("object_id").get<std::string>()
                                       : o.at("object_id").dump();
            const std::string label = o.value("label", "");
            if (o.contains("box")) {
                const auto& b = o.at("box");
                if (!b.is_array() || b.size() != 4) {
                    throw std::invalid_argument("object '" + id + "': box must be [x, y, width, height]");
                }
                objects.push_back(FrameObject::with_box(
                    id, label, Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                   b[3].get<double>()}));
            } else {
                objects.push_back(FrameObject::with_area(id, label, o.at("area").get<double>()));
            }
        }
        frames.emplace_back(f.at("width").get<double>(), f.at("height").get<double>(), std::move(objects));
    }
    return frames;
}

std::vector<FrameScene> load_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open annotations file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_annotations(ss.str());
}

std::vector<PairReport> consecutive_reports(std::span<const FrameScene> frames) {
    std::vector<PairReport> out;
    for (std::size_t i = 1; i < frames.size(); ++i) {
        out.push_back({i - 1, i, total_temporal_info(frames[i - 1], frames[i])});
    }
    return out;
}

std::string reports_csv(std::span<const PairReport> pairs) {
    std::ostringstream os;
    os << std::setprecision(9) << std::fixed;
    os << "prev,next,t_between,t_within_overlap,t_within_disjoint,t_within,t_total\n";
    TemporalInfoReport sum;
    for (const auto& p : pairs) {
        const auto& r = p.report;
        os << p.prev << ',' << p.next << ',' << r.t_between << ',' << r.t_within_overlap << ','
           << r.t_within_disjoint << ',' << r.t_within << ',' << r.t_total << '\n';
        sum.t_between += r.t_between;
        sum.t_within_overlap += r.t_within_overlap;
        sum.t_within_disjoint += r.t_within_disjoint;
        sum.t_within += r.t_within;
        sum.t_total += r.t_total;
    }
    if (!pairs.empty()) {
        const double k = static_cast<double>(pairs.size());
        os << "mean,," << sum.t_between / k << ',' << sum.t_within_overlap / k << ','
           << sum.t_within_disjoint / k << ',' << sum.t_within / k << ',' << sum.t_total / k << '\n';
    }
    return os.str();
}

}  // namespace stepseq::tinfo
