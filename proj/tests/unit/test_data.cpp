#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "snnconv/data.hpp"

using namespace snnconv;

namespace {

ImageSample ramp(int h, int w)
{
    ImageSample s;
    s.height = h;
    s.width = w;
    for (int i = 0; i < h * w; ++i) {
        s.image.push_back(static_cast<double>(i) / (h * w));
        s.label.push_back(static_cast<std::uint8_t>(i % 3 == 0));
    }
    return s;
}

} // namespace

TEST_CASE("four quarter turns and two flips are the identity")
{
    const ImageSample s = ramp(4, 5);
    ImageSample r = s;
    for (int i = 0; i < 4; ++i) {
        r = rotate_quarter(r, 1);
    }
    CHECK(r.image == s.image);
    CHECK(r.label == s.label);
    const ImageSample f = flip_vertical_axis(flip_vertical_axis(s));
    CHECK(f.image == s.image);
    const ImageSample q = rotate_quarter(s, 1);
    CHECK(q.height == 5);
    CHECK(q.width == 4);
    // Counter-clockwise: the top-right pixel moves to the top-left.
    CHECK(q.image[0] == s.image[4]);
    CHECK(flip_vertical_axis(s).image[0] == s.image[4]);
}

TEST_CASE("expand_base yields five variants per source")
{
    const std::vector<ImageSample> base{ramp(6, 6), ramp(6, 6)};
    const auto out = expand_base(base);
    CHECK(out.size() == 10);
    CHECK(out[0].image == base[0].image);
    CHECK(out[4].image == flip_vertical_axis(base[0]).image);
}

TEST_CASE("crop windows are uniform over sources and offsets")
{
    const std::vector<ImageSample> base{ramp(10, 10), ramp(10, 10)};
    AugmentConfig cfg;
    cfg.crop = 8;
    cfg.resize_to = 8;
    cfg.seed = 5;
    const std::size_t n = 18000;
    const auto wins = draw_crop_windows(base, cfg, n);
    std::map<std::tuple<std::size_t, int, int>, int> counts;
    for (const CropWindow &w : wins) {
        CHECK(w.y >= 0);
        CHECK(w.y <= 2);
        CHECK(w.x <= 2);
        ++counts[{w.source, w.y, w.x}];
    }
    CHECK(counts.size() == 18);
    for (const auto &kv : counts) {
        CHECK(std::abs(kv.second - 1000) < 150);
    }
    // Same seed, same windows.
    const auto again = draw_crop_windows(base, cfg, 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(again[i].x == wins[i].x);
    }
}

TEST_CASE("resize averages areas and keeps labels binary")
{
    ImageSample s;
    s.height = 4;
    s.width = 4;
    s.image = {0, 1, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1};
    s.label = {1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1};
    const ImageSample r = resize(s, 2);
    CHECK(r.image[0] == doctest::Approx(0.5));
    CHECK(r.image[1] == doctest::Approx(0.0));
    CHECK(r.image[3] == doctest::Approx(1.0));
    CHECK(r.label == Mask{1, 0, 0, 1});
}

TEST_CASE("crop and center_crop")
{
    const ImageSample s = ramp(6, 6);
    const ImageSample c = crop(s, 1, 2, 3, 3);
    CHECK(c.image[0] == s.image[1 * 6 + 2]);
    Mask m(36, 0);
    m[2 * 6 + 2] = 1;
    CHECK(center_crop(m, 6, 6, 2, 2) == Mask{1, 0, 0, 0});
    CHECK_THROWS(crop(s, 4, 4, 3, 3));
}

TEST_CASE("synthetic cells are deterministic with bounded foreground")
{
    const auto a = synth_cells(3, 6, 24);
    const auto b = synth_cells(3, 6, 24);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        double fg = 0;
        for (auto v : a[i].label) {
            fg += v;
        }
        fg /= static_cast<double>(a[i].pixels());
        CHECK(fg >= 0.05);
        CHECK(fg <= 0.8);
        for (double v : a[i].image) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK_THROWS_AS(synth_cells(1, 1, 4), std::invalid_argument);
}

TEST_CASE("metrics")
{
    const Mask gt{1, 1, 0, 0};
    CHECK(pixel_accuracy(Mask{1, 0, 0, 0}, gt) == doctest::Approx(0.75));
    CHECK(iou(Mask{1, 0, 0, 1}, gt) == doctest::Approx(1.0 / 3));
    CHECK(iou(Mask{0, 0}, Mask{0, 0}) == 1.0);
}

TEST_CASE("pgm files round trip through a dataset directory")
{
    const auto dir = std::filesystem::temp_directory_path() / "snnconv_pgm_rt";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "labels");
    const auto samples = synth_cells(7, 2, 12);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string name = "00" + std::to_string(i) + ".pgm";
        write_pgm(dir / "images" / name, 12, 12, samples[i].image);
        std::vector<double> lab(samples[i].label.begin(), samples[i].label.end());
        write_pgm(dir / "labels" / name, 12, 12, lab);
    }
    const auto loaded = load_dataset_dir(dir);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[1].label == samples[1].label);
    for (std::size_t k = 0; k < loaded[0].image.size(); ++k) {
        CHECK(std::abs(loaded[0].image[k] - samples[0].image[k]) <= 0.5 / 255 + 1e-12);
    }
    std::filesystem::remove_all(dir);
}
