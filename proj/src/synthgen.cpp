#include "laf/synthgen.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "json.hpp"

namespace laf {

namespace fs = std::filesystem;
using json = nlohmann::json;

const std::vector<Family>& all_families() {
    static const std::vector<Family> v{Family::None, Family::LocalBlend, Family::GridArtifact,
                                       Family::EyeTexture, Family::ColorShift};
    return v;
}

std::string family_name(Family f) {
    switch (f) {
        case Family::None: return "none";
        case Family::LocalBlend: return "local_blend";
        case Family::GridArtifact: return "grid_artifact";
        case Family::EyeTexture: return "eye_texture";
        case Family::ColorShift: return "color_shift";
    }
    throw InvalidArgument("unknown family enum value");
}

Family parse_family(const std::string& name) {
    for (Family f : all_families())
        if (family_name(f) == name) return f;
    throw InvalidArgument("unknown manipulation family: " + name);
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw InvalidArgument("unknown split enum value");
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw InvalidArgument("unknown split: " + name);
}

uint64_t split_seed_offset(Split s) {
    switch (s) {
        case Split::Train: return 0;
        case Split::Val: return 1000000;
        case Split::Test: return 2000000;
    }
    throw InvalidArgument("unknown split enum value");
}

ManipulationFamily ManipulationFamily::defaults(Family id) {
    ManipulationFamily m;
    m.id = id;
    switch (id) {
        case Family::None:
            break;
        case Family::LocalBlend:
            m.params = {{"radius", 24.0}, {"blur_radius", 5.0}, {"brightness_shift", 0.07}};
            break;
        case Family::GridArtifact:
            m.params = {{"period", 4.0}, {"amplitude", 0.12}};
            break;
        case Family::EyeTexture:
            m.params = {{"radius", 18.0}, {"noise_amplitude", 0.15}};
            break;
        case Family::ColorShift:
            m.params = {{"hue_shift", 0.08}};
            break;
    }
    return m;
}

void ManipulationFamily::validate() const {
    ManipulationFamily def = defaults(id);
    for (const auto& [k, v] : params) {
        if (!def.params.count(k))
            throw InvalidArgument("family " + family_name(id) + " has no parameter '" + k + "'");
        if (!std::isfinite(v)) throw InvalidArgument("parameter '" + k + "' is not finite");
    }
    auto positive = [&](const std::string& k) {
        if (param(k) <= 0) throw InvalidArgument("parameter '" + k + "' must be positive");
    };
    switch (id) {
        case Family::None:
            break;
        case Family::LocalBlend:
            positive("radius");
            positive("blur_radius");
            break;
        case Family::GridArtifact:
            positive("period");
            positive("amplitude");
            break;
        case Family::EyeTexture:
            positive("radius");
            positive("noise_amplitude");
            break;
        case Family::ColorShift:
            if (param("hue_shift") == 0) throw InvalidArgument("hue_shift must be nonzero");
            break;
    }
}

double ManipulationFamily::param(const std::string& key) const {
    auto it = params.find(key);
    if (it != params.end()) return it->second;
    ManipulationFamily def = defaults(id);
    auto dit = def.params.find(key);
    if (dit == def.params.end()) throw InvalidArgument("family " + family_name(id) + " has no parameter '" + key + "'");
    return dit->second;
}

void DatasetSpec::validate() const {
    family.validate();
    if (n_pairs <= 0) throw InvalidArgument("n_pairs must be positive");
    if (image_size < 64) throw InvalidArgument("image_size must be at least 64");
}

namespace {

struct Ellipse {
    double cx, cy, rx, ry, theta;

    // Normalized elliptical radius: 1.0 on the boundary.
    double rho(double x, double y) const {
        double dx = x - cx, dy = y - cy;
        double ct = std::cos(theta), st = std::sin(theta);
        double u = (dx * ct + dy * st) / rx;
        double v = (-dx * st + dy * ct) / ry;
        return std::sqrt(u * u + v * v);
    }
    // Linear anti-aliased coverage with ~1.2px edge.
    double coverage(double x, double y) const {
        double edge = 1.2 / std::min(rx, ry);
        double a = (1.0 - rho(x, y)) / edge + 0.5;
        return std::clamp(a, 0.0, 1.0);
    }
};

void paint_ellipse(Image& img, const Ellipse& e, double r, double g, double b, double alpha_scale = 1.0) {
    int y0 = std::max(0, static_cast<int>(std::floor(e.cy - std::max(e.rx, e.ry) - 2)));
    int y1 = std::min(img.height, static_cast<int>(std::ceil(e.cy + std::max(e.rx, e.ry) + 2)));
    int x0 = std::max(0, static_cast<int>(std::floor(e.cx - std::max(e.rx, e.ry) - 2)));
    int x1 = std::min(img.width, static_cast<int>(std::ceil(e.cx + std::max(e.rx, e.ry) + 2)));
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            double a = e.coverage(x, y) * alpha_scale;
            if (a <= 0) continue;
            img.at(y, x, 0) = (1 - a) * img.at(y, x, 0) + a * r;
            img.at(y, x, 1) = (1 - a) * img.at(y, x, 1) + a * g;
            img.at(y, x, 2) = (1 - a) * img.at(y, x, 2) + a * b;
        }
}

}  // namespace

void generate_real(uint64_t seed, int size, Image& out, LandmarkSet& lm) {
    if (size < 64) throw InvalidArgument("image size must be at least 64");
    Rng rng(derive_seed(seed, 0));
    int S = size;
    out = Image(S, S, 3);

    // Background: base tone, directional gradient, two soft blobs, fine noise.
    double base[3];
    for (double& v : base) v = rng.uniform(0.15, 0.45);
    double phi = rng.uniform(0, 2 * M_PI);
    double grad_amp = rng.uniform(0.05, 0.15);
    double bx[2], by[2], br[2], ba[2];
    for (int i = 0; i < 2; ++i) {
        bx[i] = rng.uniform(0, S);
        by[i] = rng.uniform(0, S);
        br[i] = rng.uniform(0.2 * S, 0.5 * S);
        ba[i] = rng.uniform(-0.08, 0.08);
    }
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            double g = grad_amp * ((x * std::cos(phi) + y * std::sin(phi)) / S);
            double blob = 0;
            for (int i = 0; i < 2; ++i) {
                double d2 = ((x - bx[i]) * (x - bx[i]) + (y - by[i]) * (y - by[i])) / (br[i] * br[i]);
                blob += ba[i] * std::exp(-d2);
            }
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = base[c] + g + blob;
        }
    for (auto& v : out.data) v += rng.normal(0.0, 0.012);

    // Face ellipse.
    double cx = S * (0.5 + rng.uniform(-0.04, 0.04));
    double cy = S * (0.5 + rng.uniform(-0.04, 0.04));
    double ax = S * rng.uniform(0.22, 0.30);
    double ay = S * rng.uniform(0.28, 0.36);
    double theta = rng.uniform(-0.10, 0.10);
    double skin_r = rng.uniform(0.72, 0.88);
    double skin_g = skin_r * rng.uniform(0.72, 0.82);
    double skin_b = skin_g * rng.uniform(0.72, 0.85);
    Ellipse face{cx, cy, ax, ay, theta};
    {
        int y0 = std::max(0, static_cast<int>(cy - ay - 2));
        int y1 = std::min(S, static_cast<int>(cy + ay + 3));
        int x0 = std::max(0, static_cast<int>(cx - ax - 2));
        int x1 = std::min(S, static_cast<int>(cx + ax + 3));
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                double a = face.coverage(x, y);
                if (a <= 0) continue;
                double rho = face.rho(x, y);
                double shade = 1.0 - 0.22 * rho * rho;
                double col[3] = {skin_r * shade, skin_g * shade, skin_b * shade};
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = (1 - a) * out.at(y, x, c) + a * col[c];
            }
    }
    // Skin texture.
    for (int y = std::max(0, static_cast<int>(cy - ay)); y < std::min(S, static_cast<int>(cy + ay)); ++y)
        for (int x = std::max(0, static_cast<int>(cx - ax)); x < std::min(S, static_cast<int>(cx + ax)); ++x) {
            double n = rng.normal(0.0, 0.015);
            if (face.rho(x, y) < 1.0)
                for (int c = 0; c < 3; ++c) out.at(y, x, c) += n;
        }

    // Eye geometry in the rotated face frame.
    double ct = std::cos(theta), st = std::sin(theta);
    auto face_point = [&](double u, double v, double& px, double& py) {
        px = cx + u * ct - v * st;
        py = cy + u * st + v * ct;
    };
    double eye_du = 0.40 * ax * rng.uniform(0.95, 1.05);
    double eye_dv = -0.28 * ay * rng.uniform(0.90, 1.10);
    double lx, ly, rx_, ry_;
    face_point(-eye_du, eye_dv, lx, ly);
    face_point(eye_du, eye_dv, rx_, ry_);

    double iris_r = 0.06 * ax * rng.uniform(0.9, 1.1);
    double iris_col[3] = {rng.uniform(0.10, 0.30), rng.uniform(0.10, 0.28), rng.uniform(0.12, 0.45)};
    for (int side = 0; side < 2; ++side) {
        double ex = side == 0 ? lx : rx_;
        double ey = side == 0 ? ly : ry_;
        paint_ellipse(out, Ellipse{ex, ey, 0.145 * ax, 0.085 * ay, theta}, 0.93, 0.93, 0.90);
        paint_ellipse(out, Ellipse{ex, ey, iris_r, iris_r, 0}, iris_col[0], iris_col[1], iris_col[2]);
        paint_ellipse(out, Ellipse{ex, ey, 0.45 * iris_r, 0.45 * iris_r, 0}, 0.05, 0.05, 0.05);
        paint_ellipse(out, Ellipse{ex - 0.35 * iris_r, ey - 0.35 * iris_r, 0.22 * iris_r, 0.22 * iris_r, 0},
                      0.95, 0.95, 0.95);
    }

    // Mouth: two-tone horizontal ellipse below center.
    double mu = rng.uniform(-0.02, 0.02) * ax;
    double mv = 0.48 * ay * rng.uniform(0.92, 1.08);
    double mx, my;
    face_point(mu, mv, mx, my);
    double mouth_rx = 0.36 * ax * rng.uniform(0.9, 1.1);
    double mouth_ry = 0.10 * ay * rng.uniform(0.8, 1.2);
    double lip_r = rng.uniform(0.55, 0.70), lip_g = rng.uniform(0.20, 0.30), lip_b = rng.uniform(0.22, 0.34);
    paint_ellipse(out, Ellipse{mx, my, mouth_rx, mouth_ry, theta}, lip_r, lip_g, lip_b);
    paint_ellipse(out, Ellipse{mx, my, mouth_rx * 0.96, mouth_ry * 0.28, theta}, lip_r * 0.55, lip_g * 0.55,
                  lip_b * 0.55);

    for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);

    // Landmarks and the face bounding box (rotated-ellipse extents).
    double hx = std::sqrt(ax * ct * ax * ct + ay * st * ay * st);
    double hy = std::sqrt(ax * st * ax * st + ay * ct * ay * ct);
    lm.left_eye_x = lx;
    lm.left_eye_y = ly;
    lm.right_eye_x = rx_;
    lm.right_eye_y = ry_;
    lm.mouth_x = mx;
    lm.mouth_y = my;
    lm.face_box.x0 = std::max(0, static_cast<int>(std::floor(cx - hx)));
    lm.face_box.y0 = std::max(0, static_cast<int>(std::floor(cy - hy)));
    lm.face_box.x1 = std::min(S, static_cast<int>(std::ceil(cx + hx)) + 1);
    lm.face_box.y1 = std::min(S, static_cast<int>(std::ceil(cy + hy)) + 1);

    if (!(lm.left_eye_x < lm.right_eye_x)) throw DegenerateGeometry("left eye not left of right eye");
    for (auto [px, py] : {std::pair{lx, ly}, {rx_, ry_}, {mx, my}})
        if (!lm.face_box.contains(px, py)) throw DegenerateGeometry("landmark outside face box");
}

Image apply_manipulation(const Image& real, const LandmarkSet& lm, const ManipulationFamily& family,
                         uint64_t seed, std::vector<ManipRegion>* regions) {
    family.validate();
    if (regions) regions->clear();
    Rng rng(derive_seed(seed, 17));
    Image img = real;
    switch (family.id) {
        case Family::None:
            return img;
        case Family::LocalBlend: {
            double radius = family.param("radius");
            int blur = static_cast<int>(family.param("blur_radius"));
            double shift = family.param("brightness_shift");
            double cx = lm.mouth_x + rng.uniform(-3.0, 3.0);
            double cy = lm.mouth_y + rng.uniform(-3.0, 3.0);
            Image blurred = box_blur(real, blur);
            int y0 = std::max(0, static_cast<int>(cy - radius - 1));
            int y1 = std::min(img.height, static_cast<int>(cy + radius + 2));
            int x0 = std::max(0, static_cast<int>(cx - radius - 1));
            int x1 = std::min(img.width, static_cast<int>(cx + radius + 2));
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    if (d2 > radius * radius) continue;
                    for (int c = 0; c < 3; ++c)
                        img.at(y, x, c) = std::clamp(blurred.at(y, x, c) + shift, 0.0, 1.0);
                }
            if (regions) regions->push_back({cx, cy, radius});
            return img;
        }
        case Family::GridArtifact: {
            int period = static_cast<int>(family.param("period"));
            int half = std::max(1, period / 2);
            double amp = family.param("amplitude");
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    double s = ((x / half + y / half) % 2 == 0) ? amp : -amp;
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(img.at(y, x, c) + s, 0.0, 1.0);
                }
            return img;
        }
        case Family::EyeTexture: {
            double radius = family.param("radius");
            double amp = family.param("noise_amplitude");
            Image local_mean = box_blur(real, 3);
            // Correlated noise: coarse grid upsampled bilinearly.
            int gh = img.height / 4 + 2, gw = img.width / 4 + 2;
            std::vector<double> grid(static_cast<size_t>(gh) * gw);
            for (auto& v : grid) v = rng.normal();
            auto noise_at = [&](double y, double x) {
                double gy = y / 4.0, gx = x / 4.0;
                int iy = static_cast<int>(gy), ix = static_cast<int>(gx);
                double fy = gy - iy, fx = gx - ix;
                iy = std::min(iy, gh - 2);
                ix = std::min(ix, gw - 2);
                double top = grid[static_cast<size_t>(iy) * gw + ix] * (1 - fx) + grid[static_cast<size_t>(iy) * gw + ix + 1] * fx;
                double bot = grid[static_cast<size_t>(iy + 1) * gw + ix] * (1 - fx) + grid[static_cast<size_t>(iy + 1) * gw + ix + 1] * fx;
                return top * (1 - fy) + bot * fy;
            };
            for (int side = 0; side < 2; ++side) {
                double ex = side == 0 ? lm.left_eye_x : lm.right_eye_x;
                double ey = side == 0 ? lm.left_eye_y : lm.right_eye_y;
                int y0 = std::max(0, static_cast<int>(ey - radius - 1));
                int y1 = std::min(img.height, static_cast<int>(ey + radius + 2));
                int x0 = std::max(0, static_cast<int>(ex - radius - 1));
                int x1 = std::min(img.width, static_cast<int>(ex + radius + 2));
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) {
                        double d2 = (x - ex) * (x - ex) + (y - ey) * (y - ey);
                        if (d2 > radius * radius) continue;
                        double n = amp * noise_at(y, x);
                        for (int c = 0; c < 3; ++c)
                            img.at(y, x, c) = std::clamp(local_mean.at(y, x, c) + n, 0.0, 1.0);
                    }
                if (regions) regions->push_back({ex, ey, radius});
            }
            return img;
        }
        case Family::ColorShift: {
            double dh = family.param("hue_shift");
            const Rect& box = lm.face_box;
            for (int y = std::max(0, box.y0); y < std::min(img.height, box.y1); ++y)
                for (int x = std::max(0, box.x0); x < std::min(img.width, box.x1); ++x) {
                    double h, s, v;
                    rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), h, s, v);
                    double r, g, b;
                    hsv_to_rgb(h + dh, s, v, r, g, b);
                    img.at(y, x, 0) = std::clamp(r, 0.0, 1.0);
                    img.at(y, x, 1) = std::clamp(g, 0.0, 1.0);
                    img.at(y, x, 2) = std::clamp(b, 0.0, 1.0);
                }
            return img;
        }
    }
    throw InvalidArgument("unknown family enum value");
}

std::vector<RawSample> build_dataset(const DatasetSpec& spec) {
    spec.validate();
    std::vector<RawSample> out(static_cast<size_t>(spec.n_pairs) * 2);
    uint64_t base = spec.seed + split_seed_offset(spec.split);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < spec.n_pairs; ++i) {
        uint64_t item_seed = base + static_cast<uint64_t>(i);
        RawSample real;
        real.item_seed = item_seed;
        real.label = 0;
        generate_real(item_seed, spec.image_size, real.image, real.landmarks);

        RawSample fake;
        fake.item_seed = item_seed;
        fake.label = 1;
        fake.landmarks = real.landmarks;
        fake.image = apply_manipulation(real.image, real.landmarks, spec.family, derive_seed(item_seed, 1),
                                        &fake.regions);
        out[static_cast<size_t>(i) * 2] = std::move(real);
        out[static_cast<size_t>(i) * 2 + 1] = std::move(fake);
    }
    return out;
}

namespace {

json landmarks_to_json(const LandmarkSet& lm) {
    return json{{"left_eye", {lm.left_eye_x, lm.left_eye_y}},
                {"right_eye", {lm.right_eye_x, lm.right_eye_y}},
                {"mouth", {lm.mouth_x, lm.mouth_y}},
                {"face_box", {lm.face_box.x0, lm.face_box.y0, lm.face_box.x1, lm.face_box.y1}}};
}

LandmarkSet landmarks_from_json(const json& j) {
    LandmarkSet lm;
    lm.left_eye_x = j.at("left_eye").at(0);
    lm.left_eye_y = j.at("left_eye").at(1);
    lm.right_eye_x = j.at("right_eye").at(0);
    lm.right_eye_y = j.at("right_eye").at(1);
    lm.mouth_x = j.at("mouth").at(0);
    lm.mouth_y = j.at("mouth").at(1);
    lm.face_box.x0 = j.at("face_box").at(0);
    lm.face_box.y0 = j.at("face_box").at(1);
    lm.face_box.x1 = j.at("face_box").at(2);
    lm.face_box.y1 = j.at("face_box").at(3);
    return lm;
}

}  // namespace

void materialize_dataset(const DatasetSpec& spec, const std::string& root) {
    spec.validate();
    auto samples = build_dataset(spec);
    fs::path dir = fs::path(root) / family_name(spec.family.id) / split_name(spec.split);
    fs::create_directories(dir / "real");
    fs::create_directories(dir / "fake");

    json manifest;
    manifest["family"] = family_name(spec.family.id);
    manifest["split"] = split_name(spec.split);
    manifest["seed"] = spec.seed;
    manifest["n_pairs"] = spec.n_pairs;
    manifest["image_size"] = spec.image_size;
    manifest["params"] = spec.family.params.empty() ? json::object() : json(spec.family.params);
    json items = json::array();
    for (size_t i = 0; i < samples.size(); i += 2) {
        const RawSample& real = samples[i];
        const RawSample& fake = samples[i + 1];
        std::string name = std::to_string(real.item_seed) + ".png";
        write_png((dir / "real" / name).string(), real.image);
        write_png((dir / "fake" / name).string(), fake.image);
        json item;
        item["seed"] = real.item_seed;
        item["real"] = "real/" + name;
        item["fake"] = "fake/" + name;
        item["landmarks"] = landmarks_to_json(real.landmarks);
        json regs = json::array();
        for (const auto& r : fake.regions) regs.push_back({{"cx", r.cx}, {"cy", r.cy}, {"radius", r.radius}});
        item["regions"] = regs;
        items.push_back(item);
    }
    manifest["items"] = items;
    atomic_write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

std::vector<RawSample> load_materialized(const std::string& root, Family family, Split split) {
    fs::path dir = fs::path(root) / family_name(family) / split_name(split);
    fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw InvalidDataset("missing manifest: " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path.string()));
    } catch (const json::exception& e) {
        throw InvalidDataset("bad manifest " + manifest_path.string() + ": " + e.what());
    }
    try {
        if (manifest.at("family") != family_name(family) || manifest.at("split") != split_name(split))
            throw InvalidDataset("manifest family/split does not match directory " + dir.string());
        std::vector<RawSample> out;
        for (const auto& item : manifest.at("items")) {
            RawSample real, fake;
            real.item_seed = fake.item_seed = item.at("seed");
            real.label = 0;
            fake.label = 1;
            real.landmarks = fake.landmarks = landmarks_from_json(item.at("landmarks"));
            fs::path rp = dir / item.at("real").get<std::string>();
            fs::path fp = dir / item.at("fake").get<std::string>();
            if (!fs::exists(rp) || !fs::exists(fp))
                throw InvalidDataset("manifest references missing file under " + dir.string());
            real.image = read_png(rp.string());
            fake.image = read_png(fp.string());
            for (const auto& r : item.at("regions"))
                fake.regions.push_back({r.at("cx"), r.at("cy"), r.at("radius")});
            out.push_back(std::move(real));
            out.push_back(std::move(fake));
        }
        return out;
    } catch (const json::exception& e) {
        throw InvalidDataset("bad manifest " + manifest_path.string() + ": " + e.what());
    }
}

}  // namespace laf
