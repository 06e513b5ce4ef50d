#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eyelab/ellipse.hpp"

namespace eyelab {

// 8-bit interleaved RGB raster. Grayscale content is stored as three
// identical channels.
struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // row-major, 3 bytes per pixel

    static RasterImage create(int width, int height);
    std::uint8_t& at(int x, int y, int channel);
    std::uint8_t at(int x, int y, int channel) const;
};

enum class AblationMode { None, Gray, NoPupil, NoIris, OnlyPupil, OnlyIris };

std::string to_string(AblationMode mode);
AblationMode parse_ablation_mode(const std::string& token);

// Inclusion bitmask (1 = inside) for the ellipse over a width x height
// grid, sampling each pixel at its center (x+0.5, y+0.5) with boundary
// points counted inside. An off-image ellipse yields an empty mask.
std::vector<std::uint8_t> rasterize_ellipse(const Ellipse& ellipse, int width, int height);

// Region masking and grayscale manipulations. The pupil region P is the
// pupil-ellipse interior; NoIris blacks the whole iris-ellipse interior
// (P included); OnlyIris keeps only the iris annulus, blacking the pupil.
// Region modes require an annotation. Masked pixels become (0,0,0).
RasterImage apply_ablation(const RasterImage& image, const std::optional<EllipseAnnotation>& annotation,
                           AblationMode mode);

// Luma conversion y = 0.2989 R + 0.5870 G + 0.1140 B, rounded half-up and
// replicated into all three channels.
RasterImage to_grayscale(const RasterImage& image);

// Planar double-precision image used between resampling stages so the
// ladder quantizes to 8 bits exactly once.
struct ImageF {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // row-major, 3 doubles per pixel
};

ImageF to_float(const RasterImage& image);
// Rounds half-up to 8 bits with clamping.
RasterImage quantize(const ImageF& image);

// Exact-coverage box (area-average) downsample: each output pixel is the
// area-weighted mean of the source rectangle it covers, fractional edge
// pixels weighted by overlap.
ImageF area_downsample(const ImageF& image, int out_width, int out_height);

// Bilinear resize with half-pixel-aligned source coordinates; when
// enlarging, the antialias filter width stays at one source pixel, so this
// is the paper's bilinear-with-antialias upsample.
ImageF bilinear_resize(const ImageF& image, int out_width, int out_height);

// Degrade-and-restore: area-average down to target_size x target_size,
// then bilinear upsample back to restore_size (the study input size,
// 587 x 587). Intermediates stay in double precision; the result is
// quantized once.
RasterImage resolution_ladder(const RasterImage& image, int target_size, int restore_size = 587);

inline const std::vector<int>& default_ladder_sizes() {
    static const std::vector<int> sizes = {587, 300, 150, 75, 37, 18, 9, 5};
    return sizes;
}

// Mean pupil diameter over mean iris diameter: ((pw+ph)/2) / ((iw+ih)/2).
double normalized_pupil_size(const EllipseAnnotation& annotation);

}  // namespace eyelab
