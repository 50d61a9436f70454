#pragma once

#include "psr/envlight.hpp"
#include "psr/scene.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace psr::test {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir
{
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("psr_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline EnvironmentMap constant_env(int width, const Rgb& c)
{
    ImageF img(width, width / 2, 3);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) img.set_rgb(x, y, c);
    return EnvironmentMap(std::move(img));
}

/// Small, fast chain for tests that only need a consistent lighting model.
inline PrefilterConfig small_prefilter(std::uint64_t seed = 0)
{
    PrefilterConfig c;
    c.levels = 6;
    c.base_width = 64;
    c.samples_per_texel = 128;
    c.diffuse_width = 32;
    c.diffuse_samples = 256;
    c.seed = seed;
    return c;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream(path) << text;
}

} // namespace psr::test
