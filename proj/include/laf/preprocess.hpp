#pragma once

#include "laf/image.hpp"
#include "laf/landmarks.hpp"

namespace laf {

// Canonical aligned frame: left eye pinned, eyes horizontal, fixed
// inter-ocular distance.
struct CanonicalFrame {
    int out_size = 256;
    double eye_x = 96.0;
    double eye_y = 112.0;
    double eye_distance = 80.0;
};

struct CropResult {
    Image image;
    int offset_x = 0;  // source x of the crop's left edge
    int offset_y = 0;
};

// Expand the face box by the given margin fractions (top/bottom use box
// height, left/right use box width), clip to the image, crop half-open.
CropResult crop_with_margin(const Image& img, const Rect& face_box, double top_bottom_frac = 0.15,
                            double left_right_frac = 0.10);

struct AlignResult {
    Image image;        // out_size x out_size
    Affine transform;   // source pixel coords -> aligned pixel coords
};

// Similarity transform fixed by the two eyes: left eye lands on
// (eye_x, eye_y), the right eye on (eye_x + eye_distance, eye_y).
AlignResult align_left_eye(const Image& img, const LandmarkSet& landmarks, const CanonicalFrame& frame);

}  // namespace laf
