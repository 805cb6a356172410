#include "snnconv/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "snnconv/blob.hpp"
#include "snnconv/rng.hpp"

namespace snnconv {

void check(const ImageSample &sample)
{
    if (sample.height < 1 || sample.width < 1 || sample.image.size() != sample.pixels() ||
        sample.label.size() != sample.pixels()) {
        throw std::invalid_argument("image/label shape mismatch");
    }
    for (std::uint8_t v : sample.label) {
        if (v > 1) {
            throw std::invalid_argument("label values must be 0 or 1");
        }
    }
}

void check(const AugmentConfig &config)
{
    if (config.crop < 1 || config.resize_to < 1) {
        throw std::invalid_argument("crop and resize_to must be >= 1");
    }
    for (int r : config.rotations) {
        if (r % 90 != 0 || r < 0 || r >= 360) {
            throw std::invalid_argument("rotations must be 0, 90, 180 or 270");
        }
    }
}

ImageSample rotate_quarter(const ImageSample &sample, int quarter_turns)
{
    ImageSample cur = sample;
    for (int t = 0; t < ((quarter_turns % 4) + 4) % 4; ++t) {
        ImageSample next;
        next.height = cur.width;
        next.width = cur.height;
        next.image.resize(cur.pixels());
        next.label.resize(cur.pixels());
        for (int y = 0; y < next.height; ++y) {
            for (int x = 0; x < next.width; ++x) {
                const std::size_t src = static_cast<std::size_t>(x) * cur.width + (cur.width - 1 - y);
                const std::size_t dst = static_cast<std::size_t>(y) * next.width + x;
                next.image[dst] = cur.image[src];
                next.label[dst] = cur.label[src];
            }
        }
        cur = std::move(next);
    }
    return cur;
}

ImageSample flip_vertical_axis(const ImageSample &sample)
{
    ImageSample out = sample;
    for (int y = 0; y < sample.height; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * sample.width;
        std::reverse(out.image.begin() + static_cast<long>(row),
                     out.image.begin() + static_cast<long>(row + sample.width));
        std::reverse(out.label.begin() + static_cast<long>(row),
                     out.label.begin() + static_cast<long>(row + sample.width));
    }
    return out;
}

std::vector<ImageSample> expand_base(const std::vector<ImageSample> &samples, const AugmentConfig &config)
{
    if (samples.empty()) {
        throw std::invalid_argument("expand_base needs at least one sample");
    }
    check(config);
    std::vector<ImageSample> out;
    for (const ImageSample &s : samples) {
        check(s);
        for (int r : config.rotations) {
            if ((r == 90 || r == 270) && s.height != s.width) {
                throw std::invalid_argument("90/270 degree rotation of a non-square image");
            }
            out.push_back(rotate_quarter(s, r / 90));
        }
        if (config.flip_vertical_axis) {
            out.push_back(flip_vertical_axis(s));
        }
    }
    return out;
}

std::vector<CropWindow> draw_crop_windows(const std::vector<ImageSample> &samples,
                                          const AugmentConfig &config, std::size_t n)
{
    check(config);
    if (samples.empty() && n > 0) {
        throw std::invalid_argument("cannot crop from an empty sample set");
    }
    for (const ImageSample &s : samples) {
        if (config.crop > s.height || config.crop > s.width) {
            throw std::invalid_argument("crop " + std::to_string(config.crop) +
                                        " larger than source " + std::to_string(s.height) + "x" +
                                        std::to_string(s.width));
        }
    }
    Rng rng(mix_seed(config.seed, 0x63726f70));
    std::vector<CropWindow> windows(n);
    for (CropWindow &w : windows) {
        w.source = rng.below(samples.size());
        const ImageSample &s = samples[w.source];
        w.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.height - config.crop + 1)));
        w.x = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.width - config.crop + 1)));
    }
    return windows;
}

std::vector<ImageSample> sample_crops(const std::vector<ImageSample> &samples,
                                      const AugmentConfig &config, std::size_t n)
{
    std::vector<ImageSample> out;
    out.reserve(n);
    for (const CropWindow &w : draw_crop_windows(samples, config, n)) {
        out.push_back(resize(crop(samples[w.source], w.y, w.x, config.crop, config.crop),
                             config.resize_to));
    }
    return out;
}

ImageSample crop(const ImageSample &sample, int y, int x, int height, int width)
{
    if (y < 0 || x < 0 || height < 1 || width < 1 || y + height > sample.height ||
        x + width > sample.width) {
        throw std::invalid_argument("crop window outside the image");
    }
    ImageSample out;
    out.height = height;
    out.width = width;
    out.image.resize(out.pixels());
    out.label.resize(out.pixels());
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const std::size_t src = static_cast<std::size_t>(y + r) * sample.width + (x + c);
            const std::size_t dst = static_cast<std::size_t>(r) * width + c;
            out.image[dst] = sample.image[src];
            out.label[dst] = sample.label[src];
        }
    }
    return out;
}

namespace {

// Overlap weights of each destination cell with the source cells along one
// axis; rows sum to 1.
std::vector<std::vector<std::pair<int, double>>> area_weights(int src, int dst)
{
    std::vector<std::vector<std::pair<int, double>>> w(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        const double lo = i * scale;
        const double hi = (i + 1) * scale;
        for (int j = static_cast<int>(std::floor(lo)); j < src && j < hi; ++j) {
            const double overlap = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
            if (overlap > 0.0) {
                w[static_cast<std::size_t>(i)].emplace_back(j, overlap / scale);
            }
        }
    }
    return w;
}

} // namespace

ImageSample resize(const ImageSample &sample, int size)
{
    if (size < 1) {
        throw std::invalid_argument("resize target must be >= 1");
    }
    if (sample.height == size && sample.width == size) {
        return sample;
    }
    const auto wy = area_weights(sample.height, size);
    const auto wx = area_weights(sample.width, size);
    ImageSample out;
    out.height = size;
    out.width = size;
    out.image.assign(out.pixels(), 0.0);
    out.label.resize(out.pixels());
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double v = 0.0;
            for (const auto &[sy, ay] : wy[static_cast<std::size_t>(y)]) {
                for (const auto &[sx, ax] : wx[static_cast<std::size_t>(x)]) {
                    v += ay * ax * sample.image[static_cast<std::size_t>(sy) * sample.width + sx];
                }
            }
            const std::size_t dst = static_cast<std::size_t>(y) * size + x;
            out.image[dst] = v;
            const int ny = std::min(sample.height - 1, static_cast<int>((y + 0.5) * sample.height / size));
            const int nx = std::min(sample.width - 1, static_cast<int>((x + 0.5) * sample.width / size));
            out.label[dst] = sample.label[static_cast<std::size_t>(ny) * sample.width + nx] ? 1 : 0;
        }
    }
    return out;
}

Mask center_crop(const Mask &mask, int height, int width, int out_h, int out_w)
{
    if (out_h > height || out_w > width || out_h < 1 || out_w < 1 ||
        mask.size() != static_cast<std::size_t>(height) * width) {
        throw std::invalid_argument("center_crop: bad shapes");
    }
    const int oy = (height - out_h) / 2;
    const int ox = (width - out_w) / 2;
    Mask out(static_cast<std::size_t>(out_h) * out_w);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            out[static_cast<std::size_t>(y) * out_w + x] =
                    mask[static_cast<std::size_t>(y + oy) * width + (x + ox)];
        }
    }
    return out;
}

namespace {

ImageSample synth_one(Rng &rng, int size)
{
    ImageSample s;
    s.height = size;
    s.width = size;
    s.image.assign(s.pixels(), 0.0);
    s.label.assign(s.pixels(), 0);

    // Background: low level, a gentle illumination gradient and two waves.
    const double base = rng.uniform(0.12, 0.3);
    const double gy = rng.uniform(-0.1, 0.1);
    const double gx = rng.uniform(-0.1, 0.1);
    double wave_f[2];
    double wave_a[2];
    double wave_phase[2];
    double wave_dir[2];
    for (int i = 0; i < 2; ++i) {
        wave_f[i] = rng.uniform(0.1, 0.5);
        wave_a[i] = rng.uniform(0.0, 0.05);
        wave_phase[i] = rng.uniform(0.0, 2.0 * M_PI);
        wave_dir[i] = rng.uniform(0.0, M_PI);
    }
    std::vector<double> cell(s.pixels(), 0.0);  // soft cell coverage in [0, 1]
    std::vector<double> level(s.pixels(), 0.0);

    const int cells = 1 + static_cast<int>(rng.below(5));
    for (int c = 0; c < cells; ++c) {
        const double cy = rng.uniform(0.0, size);
        const double cx = rng.uniform(0.0, size);
        const double ry = rng.uniform(0.08, 0.25) * size;
        const double rx = rng.uniform(0.08, 0.25) * size;
        const double angle = rng.uniform(0.0, M_PI);
        const double brightness = rng.uniform(0.55, 0.9);
        const double soft = rng.uniform(0.05, 0.2);
        const double ca = std::cos(angle);
        const double sa = std::sin(angle);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double dy = y + 0.5 - cy;
                const double dx = x + 0.5 - cx;
                const double u = (dx * ca + dy * sa) / rx;
                const double v = (-dx * sa + dy * ca) / ry;
                const double d = std::sqrt(u * u + v * v);
                const std::size_t i = static_cast<std::size_t>(y) * size + x;
                const double cover = 1.0 / (1.0 + std::exp((d - 1.0) / soft));
                if (cover > cell[i]) {
                    cell[i] = cover;
                    level[i] = brightness;
                }
                if (d < 1.0) {
                    s.label[i] = 1;
                }
            }
        }
    }
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * size + x;
            double bg = base + gy * (y - size / 2.0) / size + gx * (x - size / 2.0) / size;
            for (int w = 0; w < 2; ++w) {
                const double t = (x * std::cos(wave_dir[w]) + y * std::sin(wave_dir[w])) * wave_f[w];
                bg += wave_a[w] * std::sin(t + wave_phase[w]);
            }
            const double v = bg + cell[i] * (level[i] - bg) + 0.04 * rng.normal();
            s.image[i] = std::clamp(v, 0.0, 1.0);
        }
    }
    return s;
}

} // namespace

std::vector<ImageSample> synth_cells(std::uint64_t seed, std::size_t n, int size)
{
    if (size < 8) {
        throw std::invalid_argument("synth_cells needs size >= 8");
    }
    std::vector<ImageSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            Rng rng(mix_seed(mix_seed(seed, i), attempt));
            ImageSample s = synth_one(rng, size);
            std::size_t cells = 0;
            for (std::uint8_t v : s.label) {
                cells += v;
            }
            const double frac = static_cast<double>(cells) / static_cast<double>(s.pixels());
            if (frac >= 0.05 && frac <= 0.8) {
                out.push_back(std::move(s));
                break;
            }
        }
    }
    return out;
}

double pixel_accuracy(const Mask &pred, const Mask &gt)
{
    if (pred.size() != gt.size()) {
        throw std::invalid_argument("pixel_accuracy: shape mismatch");
    }
    if (pred.empty()) {
        throw std::invalid_argument("pixel_accuracy: empty masks");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        correct += (pred[i] != 0) == (gt[i] != 0) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double iou(const Mask &pred, const Mask &gt)
{
    if (pred.size() != gt.size()) {
        throw std::invalid_argument("iou: shape mismatch");
    }
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0;
        const bool g = gt[i] != 0;
        inter += (p && g) ? 1 : 0;
        uni += (p || g) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_iou(const std::vector<Mask> &preds, const std::vector<Mask> &gts)
{
    if (preds.size() != gts.size() || preds.empty()) {
        throw std::invalid_argument("mean_iou: need equally many, non-zero masks");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        sum += iou(preds[i], gts[i]);
    }
    return sum / static_cast<double>(preds.size());
}

namespace {

struct Pgm {
    int height = 0;
    int width = 0;
    std::vector<int> values;
    int maxval = 255;
};

Pgm parse_pgm(const std::filesystem::path &path)
{
    const std::string bytes = read_file(path);
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        }
        if (start == pos) {
            throw std::runtime_error(path.string() + ": truncated PGM header");
        }
        return bytes.substr(start, pos - start);
    };
    const std::string magic = token();
    if (magic != "P5" && magic != "P2") {
        throw std::runtime_error(path.string() + ": not a PGM file");
    }
    Pgm pgm;
    pgm.width = std::stoi(token());
    pgm.height = std::stoi(token());
    pgm.maxval = std::stoi(token());
    if (pgm.width < 1 || pgm.height < 1 || pgm.maxval < 1 || pgm.maxval > 255) {
        throw std::runtime_error(path.string() + ": unsupported PGM dimensions or depth");
    }
    const std::size_t n = static_cast<std::size_t>(pgm.width) * pgm.height;
    pgm.values.resize(n);
    if (magic == "P5") {
        ++pos;  // single whitespace after maxval
        if (pos + n > bytes.size()) {
            throw std::runtime_error(path.string() + ": truncated PGM data");
        }
        for (std::size_t i = 0; i < n; ++i) {
            pgm.values[i] = static_cast<unsigned char>(bytes[pos + i]);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            pgm.values[i] = std::stoi(token());
        }
    }
    return pgm;
}

} // namespace

ImageSample read_pgm_pair(const std::filesystem::path &image, const std::filesystem::path &label)
{
    const Pgm img = parse_pgm(image);
    const Pgm lab = parse_pgm(label);
    if (img.height != lab.height || img.width != lab.width) {
        throw std::runtime_error(image.string() + ": image and label sizes differ");
    }
    ImageSample s;
    s.height = img.height;
    s.width = img.width;
    s.image.resize(s.pixels());
    s.label.resize(s.pixels());
    for (std::size_t i = 0; i < s.pixels(); ++i) {
        s.image[i] = static_cast<double>(img.values[i]) / img.maxval;
        s.label[i] = lab.values[i] > 0 ? 1 : 0;
    }
    return s;
}

void write_pgm(const std::filesystem::path &path, int height, int width, const std::vector<double> &values)
{
    if (values.size() != static_cast<std::size_t>(height) * width) {
        throw std::invalid_argument("write_pgm: size mismatch");
    }
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (double v : values) {
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    write_file(path, out);
}

std::vector<ImageSample> load_dataset_dir(const std::filesystem::path &dir)
{
    std::vector<std::filesystem::path> images;
    for (const auto &entry : std::filesystem::directory_iterator(dir / "images")) {
        if (entry.path().extension() == ".pgm") {
            images.push_back(entry.path());
        }
    }
    std::sort(images.begin(), images.end());
    std::vector<ImageSample> out;
    for (const auto &img : images) {
        out.push_back(read_pgm_pair(img, dir / "labels" / img.filename()));
    }
    if (out.empty()) {
        throw std::runtime_error(dir.string() + ": no images/*.pgm found");
    }
    return out;
}

} // namespace snnconv
