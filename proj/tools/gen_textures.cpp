// texsynth-gentex: writes a small corpus of procedural reference textures
// (gratings, checkerboards, band-limited noise, blobs, stripes) for trying
// out the pipeline without external image data.

#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "texsynth/image_io.hpp"
#include "texsynth/textures.hpp"

int main(int argc, char** argv) {
    CLI::App app{"generate procedural demo textures"};
    std::string out_dir;
    int count = 10;
    int size = 384;
    std::uint64_t seed = 0;
    app.add_option("-o,--out", out_dir, "output directory")->required();
    app.add_option("--count", count, "number of textures");
    app.add_option("--size", size, "texture side length in pixels");
    app.add_option("--seed", seed, "master seed");
    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(out_dir);
        const auto textures = texsynth::make_texture_set(count, size, size, seed);
        for (int t = 0; t < count; ++t) {
            char name[32];
            std::snprintf(name, sizeof(name), "tex%02d.png", t);
            const std::string path = (std::filesystem::path(out_dir) / name).string();
            texsynth::save_image(textures[t], path);
            std::printf("%s\n", path.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[texsynth-gentex] error: %s\n", e.what());
        return 1;
    }
    return 0;
}
