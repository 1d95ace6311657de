#include "laf/dataset.hpp"

#include <omp.h>

#include <filesystem>

#include "json.hpp"

namespace laf {

namespace fs = std::filesystem;
using json = nlohmann::json;

Image AlignedDataset::image(size_t i) const {
    const AlignedSample& s = items.at(i);
    Image img(size, size, 3);
    for (size_t p = 0; p < s.pixels.size(); ++p) img.data[p] = s.pixels[p] / 255.0;
    return img;
}

int AlignedDataset::count_label(int label) const {
    int n = 0;
    for (const auto& s : items) n += (s.label == label);
    return n;
}

void AlignedDataset::validate() const {
    if (items.empty()) throw InvalidDataset("aligned dataset is empty");
    size_t expect = static_cast<size_t>(size) * size * 3;
    for (const auto& s : items)
        if (s.pixels.size() != expect) throw InvalidDataset("aligned sample has wrong buffer size");
}

AlignedDataset preprocess_dataset(const std::vector<RawSample>& raw, const CanonicalFrame& frame) {
    AlignedDataset ds;
    ds.size = frame.out_size;
    ds.items.resize(raw.size());
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(raw.size()); ++i) {
        const RawSample& r = raw[i];
        CropResult crop = crop_with_margin(r.image, r.landmarks.face_box);
        LandmarkSet lm = r.landmarks;
        lm.left_eye_x -= crop.offset_x;
        lm.left_eye_y -= crop.offset_y;
        lm.right_eye_x -= crop.offset_x;
        lm.right_eye_y -= crop.offset_y;
        lm.mouth_x -= crop.offset_x;
        lm.mouth_y -= crop.offset_y;
        AlignResult aligned = align_left_eye(crop.image, lm, frame);

        AlignedSample& s = ds.items[i];
        s.label = r.label;
        s.item_seed = r.item_seed;
        s.pixels.resize(aligned.image.data.size());
        for (size_t p = 0; p < aligned.image.data.size(); ++p) s.pixels[p] = quantize8(aligned.image.data[p]);

        const Affine& t = aligned.transform;
        t.apply(lm.left_eye_x, lm.left_eye_y, s.landmarks.left_eye_x, s.landmarks.left_eye_y);
        t.apply(lm.right_eye_x, lm.right_eye_y, s.landmarks.right_eye_x, s.landmarks.right_eye_y);
        t.apply(lm.mouth_x, lm.mouth_y, s.landmarks.mouth_x, s.landmarks.mouth_y);
        // Face box maps to the whole aligned frame; keep the frame extent.
        s.landmarks.face_box = Rect{0, 0, frame.out_size, frame.out_size};
        double scale = t.scale();
        for (const ManipRegion& reg : r.regions) {
            ManipRegion m;
            t.apply(reg.cx - crop.offset_x, reg.cy - crop.offset_y, m.cx, m.cy);
            m.radius = reg.radius * scale;
            ds.items[i].regions.push_back(m);
        }
    }
    return ds;
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

void save_aligned(const AlignedDataset& ds, const std::string& root, Family family, Split split) {
    ds.validate();
    fs::path dir = fs::path(root) / family_name(family) / split_name(split);
    fs::create_directories(dir / "real");
    fs::create_directories(dir / "fake");
    json manifest;
    manifest["family"] = family_name(family);
    manifest["split"] = split_name(split);
    manifest["aligned"] = true;
    manifest["image_size"] = ds.size;
    json items = json::array();
    for (size_t i = 0; i < ds.items.size(); ++i) {
        const AlignedSample& s = ds.items[i];
        std::string rel = std::string(s.label ? "fake/" : "real/") + std::to_string(s.item_seed) + ".png";
        write_png((dir / rel).string(), ds.image(i));
        json item;
        item["seed"] = s.item_seed;
        item["label"] = s.label;
        item["path"] = rel;
        item["landmarks"] = landmarks_to_json(s.landmarks);
        json regs = json::array();
        for (const auto& r : s.regions) regs.push_back({{"cx", r.cx}, {"cy", r.cy}, {"radius", r.radius}});
        item["regions"] = regs;
        items.push_back(item);
    }
    manifest["items"] = items;
    atomic_write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

AlignedDataset load_aligned(const std::string& root, Family family, Split split) {
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
        if (!manifest.value("aligned", false))
            throw InvalidDataset(manifest_path.string() + " is not an aligned dataset manifest");
        AlignedDataset ds;
        ds.size = manifest.at("image_size");
        for (const auto& item : manifest.at("items")) {
            AlignedSample s;
            s.item_seed = item.at("seed");
            s.label = item.at("label");
            s.landmarks = landmarks_from_json(item.at("landmarks"));
            for (const auto& r : item.at("regions")) s.regions.push_back({r.at("cx"), r.at("cy"), r.at("radius")});
            fs::path p = dir / item.at("path").get<std::string>();
            if (!fs::exists(p)) throw InvalidDataset("manifest references missing file: " + p.string());
            Image img = read_png(p.string());
            if (img.height != ds.size || img.width != ds.size || img.channels != 3)
                throw InvalidDataset("aligned image has wrong shape: " + p.string());
            s.pixels.resize(img.data.size());
            for (size_t i = 0; i < img.data.size(); ++i) s.pixels[i] = quantize8(img.data[i]);
            ds.items.push_back(std::move(s));
        }
        ds.validate();
        return ds;
    } catch (const json::exception& e) {
        throw InvalidDataset("bad manifest " + manifest_path.string() + ": " + e.what());
    }
}

Tensor4 assemble_batch(const AlignedDataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) throw InvalidArgument("empty batch");
    int S = ds.size;
    Tensor4 batch(static_cast<int>(indices.size()), 3, S, S);
    for (size_t n = 0; n < indices.size(); ++n) {
        const AlignedSample& s = ds.items.at(indices[n]);
        double* dst = batch.item(static_cast<int>(n));
        // HWC bytes to CHW doubles.
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x)
                for (int c = 0; c < 3; ++c)
                    dst[(static_cast<size_t>(c) * S + y) * S + x] =
                        s.pixels[(static_cast<size_t>(y) * S + x) * 3 + c] / 255.0;
    }
    return batch;
}

}  // namespace laf
