#include "config_json.hpp"

#include "krein/conformal.hpp"

#include <sstream>

namespace krein::cfg {

json parse_text(const std::string& text, const std::string& origin)
{
    try {
        return json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        // Translate the byte offset into line:column.
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream os;
        os << "config: " << origin << ":" << line << ":" << col << ": syntax error";
        const std::string what = e.what();
        if (auto p = what.find("syntax error"); p != std::string::npos) os << what.substr(p + 12);
        throw Error(ErrorKind::Config, os.str());
    }
}

double get_number(const json& j, const std::string& key, const std::string& path)
{
    const auto& v = require(j, key, path);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

double get_number(const json& j, const std::string& key, const std::string& path, double fallback)
{
    if (!j.is_object() || !j.contains(key)) return fallback;
    return get_number(j, key, path);
}

int get_int(const json& j, const std::string& key, const std::string& path, int fallback)
{
    if (!j.is_object() || !j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
    return v.get<int>();
}

std::string get_string(const json& j, const std::string& key, const std::string& path, const std::string& fallback)
{
    if (!j.is_object() || !j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_string()) fail(path + "." + key, "expected a string");
    return v.get<std::string>();
}

Vec2 get_vec2(const json& j, const std::string& path)
{
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        fail(path, "expected a 2-vector [x, y]");
    return Vec2(j[0].get<double>(), j[1].get<double>());
}

namespace {

Region region_from_json(const json& j, const std::string& path)
{
    if (j.contains("box")) {
        const auto& b = j.at("box");
        Box box{get_vec2(require(b, "lo", path + ".box"), path + ".box.lo"),
                get_vec2(require(b, "hi", path + ".box"), path + ".box.hi")};
        if (!(box.lo.array() < box.hi.array()).all()) fail(path + ".box", "needs lo < hi componentwise");
        return box;
    }
    if (j.contains("disk")) {
        const auto& d = j.at("disk");
        Disk disk;
        if (d.contains("center")) disk.center = get_vec2(d.at("center"), path + ".disk.center");
        disk.radius = get_number(d, "radius", path + ".disk");
        if (!(disk.radius > 0)) fail(path + ".disk.radius", "must be positive");
        return disk;
    }
    fail(path, "region needs 'box' or 'disk'");
}

} // namespace

MeasureSpec measure_from_json(const json& j, const std::string& path)
{
    if (!j.is_object()) fail(path, "expected a measure object");
    const std::string type = get_string(j, "type", path, "");
    try {
        if (type == "lines") {
            const auto& segs = require(j, "segments", path);
            if (!segs.is_array() || segs.empty()) fail(path + ".segments", "expected a non-empty array");
            std::vector<Segment> out;
            for (std::size_t i = 0; i < segs.size(); ++i) {
                const std::string sp = path + ".segments[" + std::to_string(i) + "]";
                Segment s;
                s.p = get_vec2(require(segs[i], "p", sp), sp + ".p");
                s.q = get_vec2(require(segs[i], "q", sp), sp + ".q");
                s.density = get_number(segs[i], "density", sp, 1.0);
                out.push_back(s);
            }
            return make_lines(std::move(out));
        }
        if (type == "cross")
            return make_cross(get_number(j, "half_width", path, 1.0), get_number(j, "half_height", path, 1.0),
                              get_number(j, "density", path, 1.0));
        if (type == "area")
            return make_area(region_from_json(require(j, "region", path), path + ".region"),
                             get_number(j, "density", path, 1.0));
        if (type == "ifs") {
            const auto& maps = require(j, "maps", path);
            if (!maps.is_array() || maps.empty()) fail(path + ".maps", "expected a non-empty array");
            std::vector<AffineMap> ms;
            for (std::size_t i = 0; i < maps.size(); ++i) {
                const std::string mp = path + ".maps[" + std::to_string(i) + "]";
                const auto& A = require(maps[i], "A", mp);
                if (!A.is_array() || A.size() != 2) fail(mp + ".A", "expected a 2x2 matrix");
                AffineMap m;
                for (int r = 0; r < 2; ++r) {
                    const Vec2 row = get_vec2(A[r], mp + ".A[" + std::to_string(r) + "]");
                    m.A(r, 0) = row.x();
                    m.A(r, 1) = row.y();
                }
                m.b = maps[i].contains("b") ? get_vec2(maps[i].at("b"), mp + ".b") : Vec2(0, 0);
                ms.push_back(m);
            }
            std::vector<double> probs;
            if (j.contains("probs")) {
                const auto& p = j.at("probs");
                if (!p.is_array() || p.size() != ms.size()) fail(path + ".probs", "needs one weight per map");
                for (const auto& x : p) {
                    if (!x.is_number()) fail(path + ".probs", "expected numbers");
                    probs.push_back(x.get<double>());
                }
            } else {
                probs.assign(ms.size(), 1.0 / ms.size());
            }
            return make_ifs(std::move(ms), std::move(probs), get_int(j, "depth", path, 12),
                            get_number(j, "mass", path, 1.0));
        }
        if (type == "cantor") return make_cantor(get_int(j, "depth", path, 12));
        if (type == "sphere_area") return make_sphere_surface(get_number(j, "radius", path, 1.0));
        if (type == "sum") {
            const auto& parts = require(j, "parts", path);
            if (!parts.is_array() || parts.empty()) fail(path + ".parts", "expected a non-empty array");
            std::vector<MeasureSpec> ps;
            for (std::size_t i = 0; i < parts.size(); ++i)
                ps.push_back(measure_from_json(parts[i], path + ".parts[" + std::to_string(i) + "]"));
            return make_sum(std::move(ps));
        }
        if (type == "pushforward") {
            const MeasureSpec base = measure_from_json(require(j, "base", path), path + ".base");
            const std::string dir = get_string(j, "direction", path, "disk_to_sphere");
            PushDirection d;
            if (dir == "disk_to_sphere") d = PushDirection::DiskToSphere;
            else if (dir == "sphere_to_disk") d = PushDirection::SphereToDisk;
            else fail(path + ".direction", "expected 'disk_to_sphere' or 'sphere_to_disk'");
            return pushforward_measure(base, d, get_number(j, "sphere_radius", path, 2.0));
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config) throw;
        fail(path, e.what());
    }
    if (type.empty()) fail(path, "missing field 'type'");
    fail(path + ".type", "unknown measure type '" + type + "'");
}

} // namespace krein::cfg
