#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace snnconv {

/// Spatial extent of a feature map, in pixels and channels.
struct TensorShape {
    int height = 0;
    int width = 0;
    int channels = 0;

    [[nodiscard]] long volume() const { return static_cast<long>(height) * width * channels; }
    [[nodiscard]] bool valid() const { return height >= 1 && width >= 1 && channels >= 1; }
    [[nodiscard]] std::string str() const;

    friend bool operator==(const TensorShape &, const TensorShape &) = default;
};

/// Dense channel-major (CHW) feature map.
struct Tensor {
    TensorShape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(TensorShape s, double fill = 0.0)
            : shape(s), data(static_cast<std::size_t>(s.volume()), fill)
    {
    }

    double &at(int c, int y, int x)
    {
        return data[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
    }
    [[nodiscard]] const double &at(int c, int y, int x) const
    {
        return data[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
    }
    [[nodiscard]] std::size_t size() const { return data.size(); }
};

} // namespace snnconv
