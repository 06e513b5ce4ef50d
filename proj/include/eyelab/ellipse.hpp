#pragma once

namespace eyelab {

// Axis-aligned ellipse in pixel coordinates: center plus full axis lengths.
struct Ellipse {
    double cx = 0.0;
    double cy = 0.0;
    double width = 0.0;   // full horizontal axis
    double height = 0.0;  // full vertical axis

    // Membership test against the continuous ellipse. Pixel (px, py) is
    // sampled at its center (px + 0.5, py + 0.5); boundary points count
    // as inside.
    bool contains_pixel(int px, int py) const {
        if (width <= 0.0 || height <= 0.0) return false;
        const double dx = (static_cast<double>(px) + 0.5 - cx) / (width / 2.0);
        const double dy = (static_cast<double>(py) + 0.5 - cy) / (height / 2.0);
        return dx * dx + dy * dy <= 1.0;
    }
};

// Pupil and iris ellipses for one image.
struct EllipseAnnotation {
    Ellipse pupil;
    Ellipse iris;
};

}  // namespace eyelab
