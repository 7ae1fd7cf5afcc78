#pragma once

// In-memory relational view of extracted video content: segments, per-frame
// object boxes and depths, immutable property attributes. Location attributes
// and relationships are never stored; they are derived from geometry on demand.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqbe/errors.hpp"

namespace vqbe {

/// Axis-aligned box in pixels; (x1, y1) is the top-left corner, y grows downward.
struct BBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double center_x() const noexcept { return (x1 + x2) / 2.0; }
    double center_y() const noexcept { return (y1 + y2) / 2.0; }
    double half_diagonal() const noexcept { return std::hypot(x2 - x1, y2 - y1) / 2.0; }
    bool valid() const noexcept { return x1 < x2 && y1 < y2; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct ObjectRecord {
    std::string vid;
    int fid = 0;
    int oid = 0;
    std::string cid;
    BBox bbox;
    double depth = 0;  // smaller is nearer the camera

    friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

enum class AttributeKind { property, location };

struct AttributeRecord {
    std::string vid;
    int fid = 0;
    int oid = 0;
    std::string key;
    std::string value;
    AttributeKind kind = AttributeKind::property;

    friend bool operator==(const AttributeRecord&, const AttributeRecord&) = default;
};

struct RelationshipRecord {
    std::string vid;
    int fid = 0;
    int rid = 0;
    int oid_sub = 0;
    int oid_tar = 0;
    std::string pid;

    friend bool operator==(const RelationshipRecord&, const RelationshipRecord&) = default;
};

struct FrameState {
    BBox bbox;
    double depth = 0;
    bool present = false;

    friend bool operator==(const FrameState&, const FrameState&) = default;
};

/// One object across the frames of a segment. `frames` has exactly
/// frame_count entries; absent frames have present == false.
struct ObjectTrack {
    int oid = 0;
    std::string cid;
    std::vector<std::pair<std::string, std::string>> props;  // sorted by key
    std::vector<FrameState> frames;

    const std::string* prop(std::string_view key) const {
        auto it = std::lower_bound(props.begin(), props.end(), key,
                                   [](const auto& p, std::string_view k) { return p.first < k; });
        if (it == props.end() || it->first != key) return nullptr;
        return &it->second;
    }

    friend bool operator==(const ObjectTrack&, const ObjectTrack&) = default;
};

/// A fixed-length run of frames. Tracks are kept in ascending oid order.
struct Segment {
    std::string vid;
    int frame_count = 0;
    int width = 0;
    int height = 0;
    std::vector<ObjectTrack> tracks;

    const ObjectTrack* find_track(int oid) const {
        auto it = std::lower_bound(tracks.begin(), tracks.end(), oid,
                                   [](const ObjectTrack& t, int o) { return t.oid < o; });
        if (it == tracks.end() || it->oid != oid) return nullptr;
        return &*it;
    }

    /// Throws IntegrityError on the first violated invariant.
    void validate() const {
        auto where = [&](int oid) { return "segment '" + vid + "' oid " + std::to_string(oid); };
        if (frame_count <= 0) throw IntegrityError("segment '" + vid + "' has frame_count <= 0");
        if (width <= 0 || height <= 0) throw IntegrityError("segment '" + vid + "' has non-positive dimensions");
        for (std::size_t i = 0; i < tracks.size(); ++i) {
            const auto& t = tracks[i];
            if (i > 0 && tracks[i - 1].oid >= t.oid)
                throw IntegrityError("segment '" + vid + "' tracks not strictly ordered by oid");
            if (static_cast<int>(t.frames.size()) != frame_count)
                throw IntegrityError(where(t.oid) + " has a frame table of the wrong length");
            bool any = false;
            for (int f = 0; f < frame_count; ++f) {
                const auto& s = t.frames[f];
                if (!s.present) continue;
                any = true;
                if (!s.bbox.valid())
                    throw IntegrityError(where(t.oid) + " fid " + std::to_string(f) + " has a degenerate bbox");
            }
            if (!any) throw IntegrityError(where(t.oid) + " is present in no frame");
            if (!std::is_sorted(t.props.begin(), t.props.end()))
                throw IntegrityError(where(t.oid) + " property table is unsorted");
        }
    }

    friend bool operator==(const Segment&, const Segment&) = default;
};

/// All and only the objects present at `fid`, ascending by oid.
inline std::vector<ObjectRecord> objects_at(const Segment& seg, int fid) {
    if (fid < 0 || fid >= seg.frame_count)
        throw BoundsError("fid " + std::to_string(fid) + " out of range [0, " +
                          std::to_string(seg.frame_count) + ") in segment '" + seg.vid + "'");
    std::vector<ObjectRecord> out;
    for (const auto& t : seg.tracks) {
        const auto& s = t.frames[fid];
        if (s.present) out.push_back({seg.vid, fid, t.oid, t.cid, s.bbox, s.depth});
    }
    return out;
}

/// Property attributes plus location attributes computed from the box.
/// Location uses half-plane tests; an object exactly on a midline gets no
/// attribute for that axis.
inline std::vector<AttributeRecord> attributes_at(const Segment& seg, int fid, int oid) {
    if (fid < 0 || fid >= seg.frame_count) throw BoundsError("fid out of range");
    const ObjectTrack* t = seg.find_track(oid);
    if (t == nullptr || !t->frames[fid].present)
        throw BoundsError("oid " + std::to_string(oid) + " not present at fid " + std::to_string(fid));
    std::vector<AttributeRecord> out;
    for (const auto& [k, v] : t->props) out.push_back({seg.vid, fid, oid, k, v, AttributeKind::property});
    const BBox& b = t->frames[fid].bbox;
    const double cx = b.center_x(), cy = b.center_y();
    if (cx < seg.width / 2.0) out.push_back({seg.vid, fid, oid, "hpos", "left", AttributeKind::location});
    if (cx > seg.width / 2.0) out.push_back({seg.vid, fid, oid, "hpos", "right", AttributeKind::location});
    if (cy < seg.height / 2.0) out.push_back({seg.vid, fid, oid, "vpos", "top", AttributeKind::location});
    if (cy > seg.height / 2.0) out.push_back({seg.vid, fid, oid, "vpos", "bottom", AttributeKind::location});
    return out;
}

/// Immutable after construction; safe for concurrent reads.
class SegmentStore {
public:
    SegmentStore() = default;

    /// Validates every segment and sorts by vid. Duplicate vids are rejected.
    explicit SegmentStore(std::vector<Segment> segments) : segments_(std::move(segments)) {
        std::sort(segments_.begin(), segments_.end(),
                  [](const Segment& a, const Segment& b) { return a.vid < b.vid; });
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            segments_[i].validate();
            if (!index_.emplace(segments_[i].vid, i).second)
                throw IntegrityError("duplicate segment vid '" + segments_[i].vid + "'");
        }
    }

    std::size_t size() const noexcept { return segments_.size(); }
    bool empty() const noexcept { return segments_.empty(); }
    const std::vector<Segment>& segments() const noexcept { return segments_; }

    const Segment* find(std::string_view vid) const {
        auto it = index_.find(std::string(vid));
        return it == index_.end() ? nullptr : &segments_[it->second];
    }

    const Segment& at(std::string_view vid) const {
        const Segment* s = find(vid);
        if (s == nullptr) throw BoundsError("unknown segment '" + std::string(vid) + "'");
        return *s;
    }

    int frame_count(std::string_view vid) const { return at(vid).frame_count; }

    std::vector<std::string> vids() const {
        std::vector<std::string> out;
        out.reserve(segments_.size());
        for (const auto& s : segments_) out.push_back(s.vid);
        return out;
    }

    /// New store holding only the listed vids (all must exist).
    SegmentStore subset(const std::vector<std::string>& vids) const {
        std::vector<Segment> out;
        out.reserve(vids.size());
        for (const auto& v : vids) out.push_back(at(v));
        return SegmentStore(std::move(out));
    }

private:
    std::vector<Segment> segments_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class DatasetFormat { jsonl, csv_dir };

namespace detail {

// Accumulates object/frame/attribute rows for one segment, enforcing the
// per-(vid, fid, oid) uniqueness and property-immutability invariants.
class SegmentBuilder {
public:
    SegmentBuilder(std::string vid, int frame_count, int width, int height)
        : seg_{std::move(vid), frame_count, width, height, {}} {
        if (frame_count <= 0) throw IntegrityError("segment '" + seg_.vid + "' has frame_count <= 0");
        if (width <= 0 || height <= 0)
            throw IntegrityError("segment '" + seg_.vid + "' has non-positive dimensions");
    }

    ObjectTrack& track(int oid, const std::string& cid) {
        auto [it, fresh] = tracks_.try_emplace(oid);
        if (fresh) {
            it->second.oid = oid;
            it->second.cid = cid;
            it->second.frames.resize(seg_.frame_count);
        } else if (it->second.cid != cid) {
            throw IntegrityError("segment '" + seg_.vid + "' oid " + std::to_string(oid) +
                                 " has inconsistent class ids");
        }
        return it->second;
    }

    void add_frame(int oid, const std::string& cid, int fid, const BBox& box, double depth) {
        ObjectTrack& t = track(oid, cid);
        if (fid < 0 || fid >= seg_.frame_count)
            throw IntegrityError("segment '" + seg_.vid + "' oid " + std::to_string(oid) + " fid " +
                                 std::to_string(fid) + " outside [0, frame_count)");
        if (!box.valid())
            throw IntegrityError("segment '" + seg_.vid + "' oid " + std::to_string(oid) + " fid " +
                                 std::to_string(fid) + " requires x1 < x2 and y1 < y2");
        FrameState& s = t.frames[fid];
        if (s.present)
            throw IntegrityError("duplicate record for (vid=" + seg_.vid + ", fid=" + std::to_string(fid) +
                                 ", oid=" + std::to_string(oid) + ")");
        s = {box, depth, true};
    }

    void set_property(int oid, const std::string& key, const std::string& value) {
        auto it = tracks_.find(oid);
        if (it == tracks_.end())
            throw IntegrityError("attribute for unknown object (vid=" + seg_.vid + ", oid=" + std::to_string(oid) + ")");
        auto& props = it->second.props;
        for (auto& [k, v] : props) {
            if (k == key) {
                if (v != value)
                    throw IntegrityError("inconsistent property attribute (vid=" + seg_.vid + ", oid=" +
                                         std::to_string(oid) + ", key=" + key + ")");
                return;
            }
        }
        props.emplace_back(key, value);
    }

    bool has_frame(int oid, int fid) const {
        auto it = tracks_.find(oid);
        return it != tracks_.end() && fid >= 0 && fid < seg_.frame_count && it->second.frames[fid].present;
    }

    Segment finish() && {
        for (auto& [oid, t] : tracks_) {
            std::sort(t.props.begin(), t.props.end());
            seg_.tracks.push_back(std::move(t));
        }
        seg_.validate();
        return std::move(seg_);
    }

    const std::string& vid() const { return seg_.vid; }

private:
    Segment seg_;
    std::map<int, ObjectTrack> tracks_;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// Reads a CSV file with a header row, calling `row(fields, line_no)` for each
// data line after checking the column count.
template <typename RowFn>
void read_csv(const std::filesystem::path& path, const std::vector<std::string>& header, RowFn row) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string(), 0, 0);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) return;
    ++line_no;
    if (split_csv_line(line) != header)
        throw ParseError(path.filename().string() + ": unexpected header", 1, 0);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError(path.filename().string() + ": expected " + std::to_string(header.size()) +
                                 " fields, got " + std::to_string(fields.size()),
                             line_no, 0);
        row(fields, line_no);
    }
}

inline int to_int(const std::string& s, std::size_t line, const std::string& file) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(file + ": not an integer: '" + s + "'", line, 0);
    }
}

inline double to_double(const std::string& s, std::size_t line, const std::string& file) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(file + ": not a number: '" + s + "'", line, 0);
    }
}

}  // namespace detail

/// Parses one JSONL segment record. `line_no` is reported in parse errors.
inline Segment segment_from_json(const nlohmann::json& j, std::size_t line_no = 0) {
    try {
        detail::SegmentBuilder b(j.at("vid").get<std::string>(), j.at("frame_count").get<int>(),
                                 j.at("width").get<int>(), j.at("height").get<int>());
        for (const auto& o : j.at("objects")) {
            const int oid = o.at("oid").get<int>();
            const auto cid = o.at("cid").get<std::string>();
            b.track(oid, cid);
            for (const auto& fr : o.at("frames")) {
                const auto& bb = fr.at("bbox");
                if (!bb.is_array() || bb.size() != 4)
                    throw ParseError("bbox must be [x1, y1, x2, y2]", line_no, 0);
                BBox box{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>()};
                b.add_frame(oid, cid, fr.at("fid").get<int>(), box, fr.at("depth").get<double>());
            }
            if (o.contains("props"))
                for (const auto& [k, v] : o.at("props").items()) b.set_property(oid, k, v.get<std::string>());
        }
        return std::move(b).finish();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed segment record: ") + e.what(), line_no, 0);
    }
}

inline nlohmann::json segment_to_json(const Segment& s) {
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& t : s.tracks) {
        nlohmann::json props = nlohmann::json::object();
        for (const auto& [k, v] : t.props) props[k] = v;
        nlohmann::json frames = nlohmann::json::array();
        for (int f = 0; f < s.frame_count; ++f) {
            const auto& st = t.frames[f];
            if (!st.present) continue;
            frames.push_back({{"fid", f},
                              {"bbox", {st.bbox.x1, st.bbox.y1, st.bbox.x2, st.bbox.y2}},
                              {"depth", st.depth}});
        }
        objects.push_back({{"oid", t.oid}, {"cid", t.cid}, {"props", props}, {"frames", frames}});
    }
    return {{"vid", s.vid}, {"frame_count", s.frame_count}, {"width", s.width}, {"height", s.height},
            {"objects", objects}};
}

/// Reads a JSONL dataset (one segment per non-blank line).
inline SegmentStore parse_jsonl(std::istream& in) {
    std::vector<Segment> segs;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no, e.byte);
        }
        Segment s = segment_from_json(j, line_no);
        if (!seen.emplace(s.vid, line_no).second)
            throw IntegrityError("duplicate segment vid '" + s.vid + "' at line " + std::to_string(line_no));
        segs.push_back(std::move(s));
    }
    return SegmentStore(std::move(segs));
}

/// Canonical JSONL: vids ascending, oids ascending, fids ascending.
inline std::string serialize_jsonl(const SegmentStore& store) {
    std::string out;
    for (const auto& s : store.segments()) {
        out += segment_to_json(s).dump();
        out += '\n';
    }
    return out;
}

/// csv-dir layout: segments.csv, objects.csv, attributes.csv (the relational
/// view with one attribute row per frame and object).
inline SegmentStore load_csv_dir(const std::filesystem::path& dir) {
    std::map<std::string, detail::SegmentBuilder> builders;
    detail::read_csv(dir / "segments.csv", {"vid", "frame_count", "width", "height"},
                     [&](const std::vector<std::string>& f, std::size_t ln) {
                         const std::string file = "segments.csv";
                         detail::SegmentBuilder b(f[0], detail::to_int(f[1], ln, file), detail::to_int(f[2], ln, file),
                                                  detail::to_int(f[3], ln, file));
                         if (!builders.emplace(f[0], std::move(b)).second)
                             throw IntegrityError("duplicate segment vid '" + f[0] + "'");
                     });
    auto builder = [&](const std::string& vid, std::size_t ln, const std::string& file) -> detail::SegmentBuilder& {
        auto it = builders.find(vid);
        if (it == builders.end()) throw ParseError(file + ": unknown vid '" + vid + "'", ln, 0);
        return it->second;
    };
    detail::read_csv(dir / "objects.csv", {"vid", "fid", "oid", "cid", "x1", "y1", "x2", "y2", "depth"},
                     [&](const std::vector<std::string>& f, std::size_t ln) {
                         const std::string file = "objects.csv";
                         BBox box{detail::to_double(f[4], ln, file), detail::to_double(f[5], ln, file),
                                  detail::to_double(f[6], ln, file), detail::to_double(f[7], ln, file)};
                         builder(f[0], ln, file)
                             .add_frame(detail::to_int(f[2], ln, file), f[3], detail::to_int(f[1], ln, file), box,
                                        detail::to_double(f[8], ln, file));
                     });
    detail::read_csv(dir / "attributes.csv", {"vid", "fid", "oid", "key", "value"},
                     [&](const std::vector<std::string>& f, std::size_t ln) {
                         const std::string file = "attributes.csv";
                         auto& b = builder(f[0], ln, file);
                         const int fid = detail::to_int(f[1], ln, file);
                         const int oid = detail::to_int(f[2], ln, file);
                         if (!b.has_frame(oid, fid))
                             throw IntegrityError("attribute row for missing object (vid=" + f[0] +
                                                  ", fid=" + f[1] + ", oid=" + f[2] + ")");
                         b.set_property(oid, f[3], f[4]);
                     });
    std::vector<Segment> segs;
    for (auto& [vid, b] : builders) segs.push_back(std::move(b).finish());
    return SegmentStore(std::move(segs));
}

inline void write_csv_dir(const SegmentStore& store, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream seg(dir / "segments.csv"), obj(dir / "objects.csv"), att(dir / "attributes.csv");
    seg << "vid,frame_count,width,height\n";
    obj << "vid,fid,oid,cid,x1,y1,x2,y2,depth\n";
    att << "vid,fid,oid,key,value\n";
    auto num = [](double v) { return nlohmann::json(v).dump(); };
    for (const auto& s : store.segments()) {
        const auto vid = detail::csv_field(s.vid);
        seg << vid << ',' << s.frame_count << ',' << s.width << ',' << s.height << '\n';
        for (int f = 0; f < s.frame_count; ++f) {
            for (const auto& t : s.tracks) {
                const auto& st = t.frames[f];
                if (!st.present) continue;
                obj << vid << ',' << f << ',' << t.oid << ',' << detail::csv_field(t.cid) << ',' << num(st.bbox.x1)
                    << ',' << num(st.bbox.y1) << ',' << num(st.bbox.x2) << ',' << num(st.bbox.y2) << ','
                    << num(st.depth) << '\n';
                for (const auto& [k, v] : t.props)
                    att << vid << ',' << f << ',' << t.oid << ',' << detail::csv_field(k) << ','
                        << detail::csv_field(v) << '\n';
            }
        }
    }
}

inline SegmentStore load_dataset(const std::filesystem::path& path, DatasetFormat format = DatasetFormat::jsonl) {
    if (format == DatasetFormat::csv_dir) return load_csv_dir(path);
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset " + path.string(), 0, 0);
    return parse_jsonl(in);
}

inline void save_jsonl(const SegmentStore& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << serialize_jsonl(store);
}

}  // namespace vqbe
