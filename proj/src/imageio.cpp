#include "psr/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace psr {

bool all_finite(const ImageF& img)
{
    return std::all_of(img.data().begin(), img.data().end(),
                       [](float v) { return std::isfinite(v); });
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw DataError("short write to " + path.string());
}

// ---------------------------------------------------------------------------
// PFM

namespace {

struct ByteCursor
{
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    bool done() const { return pos >= bytes.size(); }

    // Reads one whitespace-delimited token.
    std::string token()
    {
        while (!done() && std::isspace(bytes[pos])) ++pos;
        std::string out;
        while (!done() && !std::isspace(bytes[pos])) out.push_back(char(bytes[pos++]));
        return out;
    }

    std::string line()
    {
        std::string out;
        while (!done() && bytes[pos] != '\n') out.push_back(char(bytes[pos++]));
        if (!done()) ++pos;
        if (!out.empty() && out.back() == '\r') out.pop_back();
        return out;
    }
};

int parse_dim(const std::string& tok, const char* what)
{
    try {
        std::size_t used = 0;
        const long v = std::stol(tok, &used);
        if (used != tok.size() || v <= 0 || v > (1 << 20)) throw std::invalid_argument(tok);
        return int(v);
    } catch (const std::exception&) {
        throw FormatError(std::string("bad ") + what + " '" + tok + "'");
    }
}

} // namespace

ImageF decode_pfm(std::span<const std::uint8_t> bytes)
{
    ByteCursor cur{bytes};
    const std::string magic = cur.token();
    int channels = 0;
    if (magic == "PF") channels = 3;
    else if (magic == "Pf") channels = 1;
    else throw FormatError("pfm: bad magic '" + magic + "'");

    const int width = parse_dim(cur.token(), "pfm width");
    const int height = parse_dim(cur.token(), "pfm height");
    const std::string scale_tok = cur.token();
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (const std::exception&) {
        throw FormatError("pfm: bad scale '" + scale_tok + "'");
    }
    if (scale == 0.0 || !std::isfinite(scale)) throw FormatError("pfm: zero scale");
    // Exactly one whitespace byte separates the header from the payload.
    if (cur.done() || !std::isspace(bytes[cur.pos])) throw FormatError("pfm: truncated header");
    ++cur.pos;

    const bool little = scale < 0.0;
    const std::size_t count = std::size_t(width) * height * channels;
    if (bytes.size() - cur.pos < count * 4) throw DataError("pfm: truncated payload");

    ImageF img(width, height, channels);
    const std::uint8_t* src = bytes.data() + cur.pos;
    const bool swap = little != (std::endian::native == std::endian::little);
    for (int row = 0; row < height; ++row) {
        const int y = height - 1 - row;
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                std::uint8_t b[4];
                std::memcpy(b, src, 4);
                src += 4;
                if (swap) {
                    std::swap(b[0], b[3]);
                    std::swap(b[1], b[2]);
                }
                float v;
                std::memcpy(&v, b, 4);
                img.at(x, y, c) = v;
            }
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_pfm(const ImageF& img)
{
    std::ostringstream header;
    header << (img.channels() == 3 ? "PF" : "Pf") << '\n'
           << img.width() << ' ' << img.height() << '\n'
           << "-1.0\n";
    const std::string h = header.str();
    std::vector<std::uint8_t> out(h.begin(), h.end());
    out.reserve(out.size() + img.data().size() * 4);
    for (int row = 0; row < img.height(); ++row) {
        const int y = img.height() - 1 - row;
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                const auto bits = std::bit_cast<std::uint32_t>(img.at(x, y, c));
                out.push_back(std::uint8_t(bits));
                out.push_back(std::uint8_t(bits >> 8));
                out.push_back(std::uint8_t(bits >> 16));
                out.push_back(std::uint8_t(bits >> 24));
            }
        }
    }
    return out;
}

ImageF read_pfm(const std::filesystem::path& path)
{
    return decode_pfm(read_file_bytes(path));
}

void write_pfm(const std::filesystem::path& path, const ImageF& img)
{
    write_file_bytes(path, encode_pfm(img));
}

// ---------------------------------------------------------------------------
// Radiance RGBE

rgb_type<double> rgbe_to_float(std::uint8_t r, std::uint8_t g, std::uint8_t b,
                               std::uint8_t e)
{
    if (e == 0) return rgb_type<double>::Zero();
    const double f = std::ldexp(1.0, int(e) - (128 + 8));
    return {r * f, g * f, b * f};
}

ImageF decode_rgbe(std::span<const std::uint8_t> bytes)
{
    ByteCursor cur{bytes};
    const std::string magic = cur.line();
    if (magic.rfind("#?", 0) != 0) throw FormatError("hdr: missing #? signature");

    for (;;) {
        if (cur.done()) throw FormatError("hdr: header not terminated");
        const std::string line = cur.line();
        if (line.empty()) break;
        if (line.rfind("FORMAT=", 0) == 0 && line != "FORMAT=32-bit_rle_rgbe")
            throw FormatError("hdr: unsupported " + line);
    }

    const std::string axis_y = cur.token();
    const std::string h_tok = cur.token();
    const std::string axis_x = cur.token();
    const std::string w_tok = cur.token();
    if (axis_y != "-Y" || axis_x != "+X")
        throw FormatError("hdr: unsupported orientation " + axis_y + " " + axis_x);
    const int height = parse_dim(h_tok, "hdr height");
    const int width = parse_dim(w_tok, "hdr width");
    cur.line();

    ImageF img(width, height, 3);
    std::vector<std::uint8_t> scan(std::size_t(width) * 4);
    auto need = [&](std::size_t n) {
        if (bytes.size() - cur.pos < n) throw DataError("hdr: truncated scanline data");
    };

    for (int y = 0; y < height; ++y) {
        need(4);
        const std::uint8_t* p = bytes.data() + cur.pos;
        const bool rle = width >= 8 && width < 0x8000 && p[0] == 2 && p[1] == 2 &&
                         (p[2] & 0x80) == 0;
        if (rle) {
            if (((int(p[2]) << 8) | p[3]) != width) throw FormatError("hdr: scanline width mismatch");
            cur.pos += 4;
            // Four planes (r, g, b, e), each run-length coded.
            for (int c = 0; c < 4; ++c) {
                int x = 0;
                while (x < width) {
                    need(1);
                    int count = bytes[cur.pos++];
                    if (count > 128) {
                        count -= 128;
                        if (count > width - x) throw FormatError("hdr: bad run length");
                        need(1);
                        const std::uint8_t v = bytes[cur.pos++];
                        for (int i = 0; i < count; ++i) scan[std::size_t(x++) * 4 + c] = v;
                    } else {
                        if (count == 0 || count > width - x) throw FormatError("hdr: bad dump length");
                        need(std::size_t(count));
                        for (int i = 0; i < count; ++i) scan[std::size_t(x++) * 4 + c] = bytes[cur.pos++];
                    }
                }
            }
        } else {
            need(scan.size());
            std::memcpy(scan.data(), bytes.data() + cur.pos, scan.size());
            cur.pos += scan.size();
        }
        for (int x = 0; x < width; ++x) {
            const std::uint8_t* q = &scan[std::size_t(x) * 4];
            img.set_rgb(x, y, rgbe_to_float(q[0], q[1], q[2], q[3]));
        }
    }
    return img;
}

ImageF read_rgbe(const std::filesystem::path& path)
{
    return decode_rgbe(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct PngWriteState
{
    std::vector<std::uint8_t>* out;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length)
{
    auto* state = static_cast<PngWriteState*>(png_get_io_ptr(png));
    state->out->insert(state->out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct PngReadState
{
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

void png_read_from_span(png_structp png, png_bytep data, png_size_t length)
{
    auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (state->bytes.size() - state->pos < length) png_error(png, "truncated png");
    std::memcpy(data, state->bytes.data() + state->pos, length);
    state->pos += length;
}

[[noreturn]] void png_throw(png_structp, png_const_charp msg)
{
    throw FormatError(std::string("png: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

} // namespace

std::vector<std::uint8_t> encode_png8(const std::vector<std::uint8_t>& pixels,
                                      int width, int height, int channels)
{
    if (pixels.size() != std::size_t(width) * height * channels)
        throw DimensionError("png: pixel buffer size mismatch");
    std::vector<std::uint8_t> out;
    PngWriteState state{&out};

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_throw, png_warn);
    if (!png) throw Error("png: cannot create write struct");
    png_infop info = png_create_info_struct(png);
    try {
        png_set_write_fn(png, &state, png_write_to_vector, png_flush_noop);
        png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8,
                     channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < height; ++y) {
            png_write_row(png, pixels.data() + std::size_t(y) * width * channels);
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

ImageF decode_png(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw FormatError("png: bad signature");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             png_throw, png_warn);
    if (!png) throw Error("png: cannot create read struct");
    png_infop info = png_create_info_struct(png);
    PngReadState state{bytes, 0};
    ImageF img;
    try {
        png_set_read_fn(png, &state, png_read_from_span);
        png_read_info(png, info);
        png_set_strip_16(png);
        png_set_palette_to_rgb(png);
        png_set_expand_gray_1_2_4_to_8(png);
        png_set_strip_alpha(png);
        png_read_update_info(png, info);

        const int width = int(png_get_image_width(png, info));
        const int height = int(png_get_image_height(png, info));
        const int channels = int(png_get_channels(png, info));
        if (channels != 1 && channels != 3) throw FormatError("png: unsupported channel count");
        std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
        img = ImageF(width, height, channels, 0.0f, ColorSpace::srgb);
        for (int y = 0; y < height; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < channels; ++c)
                    img.at(x, y, c) = float(row[std::size_t(x) * channels + c]) / 255.0f;
        }
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

ImageF read_png(const std::filesystem::path& path)
{
    return decode_png(read_file_bytes(path));
}

std::uint8_t tonemap_byte(double linear)
{
    const double v = std::pow(clamp01(linear), 1.0 / 2.2);
    return std::uint8_t(std::lround(255.0 * v));
}

std::vector<std::uint8_t> write_png_preview(const ImageF& linear)
{
    std::vector<std::uint8_t> px(linear.data().size());
    std::transform(linear.data().begin(), linear.data().end(), px.begin(),
                   [](float v) { return tonemap_byte(v); });
    return encode_png8(px, linear.width(), linear.height(), linear.channels());
}

void write_png_preview(const std::filesystem::path& path, const ImageF& linear)
{
    write_file_bytes(path, write_png_preview(linear));
}

void write_mask_png(const std::filesystem::path& path, const ImageF& mask)
{
    std::vector<std::uint8_t> px(mask.pixel_count());
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = mask.data()[i * std::size_t(mask.channels())] > 0.5f ? 255 : 0;
    write_file_bytes(path, encode_png8(px, mask.width(), mask.height(), 1));
}

void write_gray_png(const std::filesystem::path& path,
                    const std::vector<std::uint8_t>& values, int width, int height)
{
    write_file_bytes(path, encode_png8(values, width, height, 1));
}

ImageF to_linear(const ImageF& img)
{
    if (img.colorspace() == ColorSpace::linear) return img;
    ImageF out = img;
    for (auto& v : out.data()) v = float(std::pow(double(v), 2.2));
    out.set_colorspace(ColorSpace::linear);
    return out;
}

} // namespace psr
