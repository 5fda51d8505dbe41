#pragma once

// Random patch sampling from an image corpus.

#include <filesystem>
#include <string>
#include <vector>

#include "texsynth/core.hpp"
#include "texsynth/image_io.hpp"
#include "texsynth/rng.hpp"

namespace texsynth {

// Draws `count` size x size patches: each draw picks an eligible image
// uniformly, then a valid top-left corner uniformly. Images smaller than
// the patch are skipped; it is an error if none remain.
inline std::vector<Image> sample_patches(const std::vector<Image>& corpus, int count, int size,
                                         Rng& rng) {
    if (corpus.empty())
        throw std::invalid_argument("sample_patches: empty corpus");
    if (count < 1)
        throw std::invalid_argument("sample_patches: count must be >= 1");
    if (size < 1)
        throw std::invalid_argument("sample_patches: size must be >= 1");

    std::vector<int> eligible;
    for (int i = 0; i < static_cast<int>(corpus.size()); ++i)
        if (corpus[i].height() >= size && corpus[i].width() >= size) eligible.push_back(i);
    if (eligible.empty())
        throw std::invalid_argument("sample_patches: no corpus image is large enough");

    std::vector<Image> patches;
    patches.reserve(count);
    for (int n = 0; n < count; ++n) {
        const Image& img = corpus[eligible[rng.below(eligible.size())]];
        const int top = static_cast<int>(rng.below(img.height() - size + 1));
        const int left = static_cast<int>(rng.below(img.width() - size + 1));
        patches.push_back(extract_patch(img, top, left, size));
    }
    return patches;
}

// Loads every PNG in a directory, sorted by filename for determinism.
inline std::vector<Image> load_corpus(const std::string& dir,
                                      std::vector<std::string>* names = nullptr) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no PNG files in directory: " + dir);
    std::vector<Image> images;
    images.reserve(files.size());
    for (const auto& f : files) {
        images.push_back(load_image(f.string()));
        if (names) names->push_back(f.stem().string());
    }
    return images;
}

}  // namespace texsynth
