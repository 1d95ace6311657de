#include "laf/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace laf {

CropResult crop_with_margin(const Image& img, const Rect& box, double top_bottom_frac, double left_right_frac) {
    if (box.width() <= 0 || box.height() <= 0) throw DegenerateGeometry("face box is empty");
    if (top_bottom_frac < 0 || left_right_frac < 0) throw InvalidArgument("margins must be non-negative");
    int mx = static_cast<int>(std::lround(box.width() * left_right_frac));
    int my = static_cast<int>(std::lround(box.height() * top_bottom_frac));
    int x0 = std::max(0, box.x0 - mx);
    int y0 = std::max(0, box.y0 - my);
    int x1 = std::min(img.width, box.x1 + mx);
    int y1 = std::min(img.height, box.y1 + my);
    if (x1 <= x0 || y1 <= y0) throw DegenerateGeometry("crop region does not intersect the image");
    CropResult res;
    res.offset_x = x0;
    res.offset_y = y0;
    res.image = Image(y1 - y0, x1 - x0, img.channels);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            for (int c = 0; c < img.channels; ++c) res.image.at(y - y0, x - x0, c) = img.at(y, x, c);
    return res;
}

AlignResult align_left_eye(const Image& img, const LandmarkSet& lm, const CanonicalFrame& frame) {
    double dx = lm.right_eye_x - lm.left_eye_x;
    double dy = lm.right_eye_y - lm.left_eye_y;
    double d2 = dx * dx + dy * dy;
    if (d2 < 1e-12) throw DegenerateGeometry("eye landmarks coincide");
    double k = frame.eye_distance / d2;
    Affine t;
    t.a = k * dx;
    t.b = k * dy;
    t.c = -k * dy;
    t.d = k * dx;
    t.tx = frame.eye_x - (t.a * lm.left_eye_x + t.b * lm.left_eye_y);
    t.ty = frame.eye_y - (t.c * lm.left_eye_x + t.d * lm.left_eye_y);
    AlignResult res;
    res.transform = t;
    res.image = warp_affine(img, t, frame.out_size, frame.out_size);
    return res;
}

}  // namespace laf
