#pragma once

namespace laf {

// Half-open integer rectangle: x in [x0, x1), y in [y0, y1).
struct Rect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// Pixel-space landmarks, subpixel precision.
struct LandmarkSet {
    double left_eye_x = 0, left_eye_y = 0;
    double right_eye_x = 0, right_eye_y = 0;
    double mouth_x = 0, mouth_y = 0;
    Rect face_box;
};

}  // namespace laf
