#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace snnconv {

using Mask = std::vector<std::uint8_t>;

/// Grayscale image in [0, 1] with a binary cell mask, both row-major H x W.
struct ImageSample {
    int height = 0;
    int width = 0;
    std::vector<double> image;
    Mask label;

    [[nodiscard]] std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
};

struct AugmentConfig {
    std::vector<int> rotations{0, 90, 180, 270};  // degrees
    bool flip_vertical_axis = true;                // mirrored copy of the unrotated image
    int crop = 32;
    int resize_to = 32;
    std::uint64_t seed = 0;
};

void check(const ImageSample &sample);
void check(const AugmentConfig &config);

/// Counter-clockwise rotation by quarter_turns * 90 degrees.
ImageSample rotate_quarter(const ImageSample &sample, int quarter_turns);
/// Mirror about the vertical axis (x -> W - 1 - x).
ImageSample flip_vertical_axis(const ImageSample &sample);

/// One variant per configured rotation, plus the mirrored original; the
/// default config gives 5 variants per source, in source-major order.
std::vector<ImageSample> expand_base(const std::vector<ImageSample> &samples,
                                     const AugmentConfig &config = {});

struct CropWindow {
    std::size_t source = 0;
    int y = 0;
    int x = 0;
};

/// The random windows sample_crops() uses, exposed for distribution tests.
std::vector<CropWindow> draw_crop_windows(const std::vector<ImageSample> &samples,
                                          const AugmentConfig &config, std::size_t n);

/// n random crops (source and offset uniform), resized to resize_to.
std::vector<ImageSample> sample_crops(const std::vector<ImageSample> &samples,
                                      const AugmentConfig &config, std::size_t n);

ImageSample crop(const ImageSample &sample, int y, int x, int height, int width);
/// Area-average for the image, nearest neighbour for the label.
ImageSample resize(const ImageSample &sample, int size);
/// Central out_h x out_w window of a mask.
Mask center_crop(const Mask &mask, int height, int width, int out_h, int out_w);

/// Soft-edged random ellipses on a textured background; every sample has a
/// cell fraction in [0.05, 0.8]. Throws for size < 8.
std::vector<ImageSample> synth_cells(std::uint64_t seed, std::size_t n, int size);

double pixel_accuracy(const Mask &pred, const Mask &gt);
/// Cell-class IoU; 1 when both masks are empty.
double iou(const Mask &pred, const Mask &gt);
double mean_iou(const std::vector<Mask> &preds, const std::vector<Mask> &gts);

/// Binary (P5) or ASCII (P2) 8-bit PGM.
ImageSample read_pgm_pair(const std::filesystem::path &image, const std::filesystem::path &label);
void write_pgm(const std::filesystem::path &path, int height, int width, const std::vector<double> &values);
/// Reads images/NNN.pgm with matching labels/NNN.pgm, sorted by name.
std::vector<ImageSample> load_dataset_dir(const std::filesystem::path &dir);

} // namespace snnconv
