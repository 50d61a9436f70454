#pragma once

#include "psr/core.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace psr {

enum class ColorSpace { linear, srgb };

/// Row-major image, top row first. channels is 1 or 3.
template <class Scalar>
class Image
{
public:
    using scalar_type = Scalar;

    Image() = default;
    Image(int width, int height, int channels, Scalar fill = Scalar(0),
          ColorSpace cs = ColorSpace::linear)
        : width_(width), height_(height), channels_(channels), colorspace_(cs)
    {
        if (width < 0 || height < 0 || (channels != 1 && channels != 3))
            throw DimensionError("invalid image dimensions");
        data_.assign(std::size_t(width) * height * channels, fill);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t pixel_count() const { return std::size_t(width_) * height_; }
    bool empty() const { return data_.empty(); }
    ColorSpace colorspace() const { return colorspace_; }
    void set_colorspace(ColorSpace cs) { colorspace_ = cs; }

    std::span<Scalar> data() { return data_; }
    std::span<const Scalar> data() const { return data_; }

    Scalar& at(int x, int y, int c = 0)
    {
        return data_[(std::size_t(y) * width_ + x) * channels_ + c];
    }
    Scalar at(int x, int y, int c = 0) const
    {
        return data_[(std::size_t(y) * width_ + x) * channels_ + c];
    }

    /// RGB at a pixel; a single-channel image is broadcast.
    rgb_type<double> rgb(int x, int y) const
    {
        const Scalar* p = &data_[(std::size_t(y) * width_ + x) * channels_];
        if (channels_ == 1) return rgb_type<double>::Constant(double(p[0]));
        return {double(p[0]), double(p[1]), double(p[2])};
    }

    void set_rgb(int x, int y, const rgb_type<double>& v)
    {
        Scalar* p = &data_[(std::size_t(y) * width_ + x) * channels_];
        if (channels_ == 1) {
            p[0] = Scalar(v[0]);
            return;
        }
        p[0] = Scalar(v[0]);
        p[1] = Scalar(v[1]);
        p[2] = Scalar(v[2]);
    }

    bool same_shape(const Image& other) const
    {
        return width_ == other.width_ && height_ == other.height_ &&
               channels_ == other.channels_;
    }

    bool operator==(const Image& other) const
    {
        return same_shape(other) && data_ == other.data_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 3;
    ColorSpace colorspace_ = ColorSpace::linear;
    std::vector<Scalar> data_;
};

using ImageF = Image<float>;

bool all_finite(const ImageF& img);

// PFM: "PF" (RGB) or "Pf" (gray), negative scale means little-endian payload.
// Rows are stored bottom-to-top on disk.
ImageF decode_pfm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pfm(const ImageF& img);
ImageF read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const ImageF& img);

// Radiance RGBE (.hdr), read only. Supports flat and new-style RLE scanlines
// with the standard "-Y H +X W" orientation.
ImageF decode_rgbe(std::span<const std::uint8_t> bytes);
ImageF read_rgbe(const std::filesystem::path& path);

/// (r, g, b) = mantissa / 256 * 2^(e - 128); e == 0 decodes to black.
rgb_type<double> rgbe_to_float(std::uint8_t r, std::uint8_t g, std::uint8_t b,
                               std::uint8_t e);

// 8-bit PNG. Decoded images are tagged srgb and hold values in [0, 1].
std::vector<std::uint8_t> encode_png8(const std::vector<std::uint8_t>& pixels,
                                      int width, int height, int channels);
ImageF decode_png(std::span<const std::uint8_t> bytes);
ImageF read_png(const std::filesystem::path& path);

/// Clamp to [0, 1], gamma 1/2.2, quantize to 8 bits.
std::uint8_t tonemap_byte(double linear);
std::vector<std::uint8_t> write_png_preview(const ImageF& linear);
void write_png_preview(const std::filesystem::path& path, const ImageF& linear);

/// Writes a single-channel {0,1} mask as an 8-bit gray PNG (0 or 255).
void write_mask_png(const std::filesystem::path& path, const ImageF& mask);
/// Writes raw 8-bit gray values.
void write_gray_png(const std::filesystem::path& path,
                    const std::vector<std::uint8_t>& values, int width, int height);

/// sRGB-tagged image to linear by x^2.2; linear images are returned unchanged.
ImageF to_linear(const ImageF& img);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);

} // namespace psr
