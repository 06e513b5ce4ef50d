#include "eyelab/ablation.hpp"

#include <algorithm>
#include <cmath>

#include "eyelab/error.hpp"

namespace eyelab {

RasterImage RasterImage::create(int width, int height) {
    if (width <= 0 || height <= 0) throw DataError("RasterImage: dimensions must be positive");
    RasterImage img;
    img.width = width;
    img.height = height;
    img.data.assign(static_cast<std::size_t>(width) * height * 3, 0);
    return img;
}

std::uint8_t& RasterImage::at(int x, int y, int channel) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + channel];
}

std::uint8_t RasterImage::at(int x, int y, int channel) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + channel];
}

std::string to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::None: return "none";
        case AblationMode::Gray: return "gray";
        case AblationMode::NoPupil: return "no_pupil";
        case AblationMode::NoIris: return "no_iris";
        case AblationMode::OnlyPupil: return "only_pupil";
        default: return "only_iris";
    }
}

AblationMode parse_ablation_mode(const std::string& token) {
    if (token == "none") return AblationMode::None;
    if (token == "gray") return AblationMode::Gray;
    if (token == "no_pupil") return AblationMode::NoPupil;
    if (token == "no_iris") return AblationMode::NoIris;
    if (token == "only_pupil") return AblationMode::OnlyPupil;
    if (token == "only_iris") return AblationMode::OnlyIris;
    throw DataError("unknown ablation mode '" + token +
                    "' (expected none, gray, no_pupil, no_iris, only_pupil, only_iris)");
}

std::vector<std::uint8_t> rasterize_ellipse(const Ellipse& ellipse, int width, int height) {
    if (width <= 0 || height <= 0) throw DataError("rasterize_ellipse: dimensions must be positive");
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
    if (ellipse.width <= 0.0 || ellipse.height <= 0.0) return mask;
    // Only rows/columns the bounding box touches can contain pixels.
    const int y_lo = std::max(0, static_cast<int>(std::floor(ellipse.cy - ellipse.height / 2.0)) - 1);
    const int y_hi = std::min(height - 1, static_cast<int>(std::ceil(ellipse.cy + ellipse.height / 2.0)) + 1);
    const int x_lo = std::max(0, static_cast<int>(std::floor(ellipse.cx - ellipse.width / 2.0)) - 1);
    const int x_hi = std::min(width - 1, static_cast<int>(std::ceil(ellipse.cx + ellipse.width / 2.0)) + 1);
    for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
            if (ellipse.contains_pixel(x, y)) mask[static_cast<std::size_t>(y) * width + x] = 1;
        }
    }
    return mask;
}

RasterImage to_grayscale(const RasterImage& image) {
    RasterImage out = image;
    for (std::size_t i = 0; i < image.data.size(); i += 3) {
        const double y =
            0.2989 * image.data[i] + 0.5870 * image.data[i + 1] + 0.1140 * image.data[i + 2];
        const double rounded = std::floor(y + 0.5);
        const auto v = static_cast<std::uint8_t>(std::clamp(rounded, 0.0, 255.0));
        out.data[i] = out.data[i + 1] = out.data[i + 2] = v;
    }
    return out;
}

RasterImage apply_ablation(const RasterImage& image, const std::optional<EllipseAnnotation>& annotation,
                           AblationMode mode) {
    if (mode == AblationMode::None) return image;
    if (mode == AblationMode::Gray) return to_grayscale(image);
    if (!annotation) throw DataError("apply_ablation: mode '" + to_string(mode) + "' requires an ellipse annotation");

    const std::vector<std::uint8_t> pupil = rasterize_ellipse(annotation->pupil, image.width, image.height);
    const std::vector<std::uint8_t> iris = rasterize_ellipse(annotation->iris, image.width, image.height);

    RasterImage out = image;
    const std::size_t n = pupil.size();
    for (std::size_t i = 0; i < n; ++i) {
        bool blacken = false;
        switch (mode) {
            case AblationMode::NoPupil: blacken = pupil[i]; break;
            case AblationMode::NoIris: blacken = iris[i]; break;  // whole interior, pupil included
            case AblationMode::OnlyPupil: blacken = !pupil[i]; break;
            default: blacken = !(iris[i] && !pupil[i]); break;  // keep the annulus only
        }
        if (blacken) {
            out.data[i * 3] = 0;
            out.data[i * 3 + 1] = 0;
            out.data[i * 3 + 2] = 0;
        }
    }
    return out;
}

ImageF to_float(const RasterImage& image) {
    ImageF out;
    out.width = image.width;
    out.height = image.height;
    out.data.assign(image.data.begin(), image.data.end());
    return out;
}

RasterImage quantize(const ImageF& image) {
    RasterImage out = RasterImage::create(image.width, image.height);
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        const double rounded = std::floor(image.data[i] + 0.5);
        out.data[i] = static_cast<std::uint8_t>(std::clamp(rounded, 0.0, 255.0));
    }
    return out;
}

ImageF area_downsample(const ImageF& image, int out_width, int out_height) {
    if (out_width <= 0 || out_height <= 0) throw DataError("area_downsample: target dimensions must be positive");
    if (out_width > image.width || out_height > image.height)
        throw DataError("area_downsample: target exceeds source size");
    ImageF out;
    out.width = out_width;
    out.height = out_height;
    out.data.assign(static_cast<std::size_t>(out_width) * out_height * 3, 0.0);
    const double sx = static_cast<double>(image.width) / out_width;
    const double sy = static_cast<double>(image.height) / out_height;
    for (int oy = 0; oy < out_height; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        const int iy0 = static_cast<int>(std::floor(y0));
        const int iy1 = std::min(image.height - 1, static_cast<int>(std::ceil(y1)) - 1);
        for (int ox = 0; ox < out_width; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            const int ix0 = static_cast<int>(std::floor(x0));
            const int ix1 = std::min(image.width - 1, static_cast<int>(std::ceil(x1)) - 1);
            double acc[3] = {0.0, 0.0, 0.0};
            double area = 0.0;
            for (int iy = iy0; iy <= iy1; ++iy) {
                const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                if (wy <= 0.0) continue;
                for (int ix = ix0; ix <= ix1; ++ix) {
                    const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                    if (wx <= 0.0) continue;
                    const double w = wx * wy;
                    const std::size_t base = (static_cast<std::size_t>(iy) * image.width + ix) * 3;
                    acc[0] += image.data[base] * w;
                    acc[1] += image.data[base + 1] * w;
                    acc[2] += image.data[base + 2] * w;
                    area += w;
                }
            }
            const std::size_t base = (static_cast<std::size_t>(oy) * out_width + ox) * 3;
            out.data[base] = acc[0] / area;
            out.data[base + 1] = acc[1] / area;
            out.data[base + 2] = acc[2] / area;
        }
    }
    return out;
}

ImageF bilinear_resize(const ImageF& image, int out_width, int out_height) {
    if (out_width <= 0 || out_height <= 0) throw DataError("bilinear_resize: target dimensions must be positive");
    ImageF out;
    out.width = out_width;
    out.height = out_height;
    out.data.assign(static_cast<std::size_t>(out_width) * out_height * 3, 0.0);
    const double sx = static_cast<double>(image.width) / out_width;
    const double sy = static_cast<double>(image.height) / out_height;
    for (int oy = 0; oy < out_height; ++oy) {
        // Half-pixel centers: output center maps into source coordinates,
        // clamped so edge pixels interpolate within the image.
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(image.height - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_width; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(image.width - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - x0;
            const std::size_t base = (static_cast<std::size_t>(oy) * out_width + ox) * 3;
            for (int c = 0; c < 3; ++c) {
                const double v00 = image.data[(static_cast<std::size_t>(y0) * image.width + x0) * 3 + c];
                const double v01 = image.data[(static_cast<std::size_t>(y0) * image.width + x1) * 3 + c];
                const double v10 = image.data[(static_cast<std::size_t>(y1) * image.width + x0) * 3 + c];
                const double v11 = image.data[(static_cast<std::size_t>(y1) * image.width + x1) * 3 + c];
                out.data[base + c] = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11);
            }
        }
    }
    return out;
}

RasterImage resolution_ladder(const RasterImage& image, int target_size, int restore_size) {
    if (target_size <= 0) throw DataError("resolution_ladder: target size must be positive");
    if (target_size > image.width || target_size > image.height)
        throw DataError("resolution_ladder: target size exceeds source dimensions");
    if (restore_size <= 0) throw DataError("resolution_ladder: restore size must be positive");
    const ImageF down = area_downsample(to_float(image), target_size, target_size);
    const ImageF up = bilinear_resize(down, restore_size, restore_size);
    return quantize(up);
}

double normalized_pupil_size(const EllipseAnnotation& annotation) {
    const double iris = (annotation.iris.width + annotation.iris.height) / 2.0;
    if (iris <= 0.0) throw DataError("normalized_pupil_size: iris size must be positive");
    const double pupil = (annotation.pupil.width + annotation.pupil.height) / 2.0;
    return pupil / iris;
}

}  // namespace eyelab
