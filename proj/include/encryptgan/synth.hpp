#pragma once

#include <cstdint>
#include <filesystem>

#include "encryptgan/imagedata.hpp"

// Procedural stand-ins for the two image domains and the message set:
// face-like portraits (X), radial flowers (Y) and house-number style digits
// (messages). Each raster is a pure function of (kind, seed).
namespace egan::synth {

enum class Kind { Face, Flower, Digit };

Raster render(Kind kind, int size, std::uint64_t seed);

struct DatasetCounts {
    int train = 200;
    int test = 60;
};

// Writes <root>/{train,test}/{x,y,messages}/NNNN.png. Domain images are
// `image_size` square, messages `message_size` square.
void write_dataset(const std::filesystem::path& root, int image_size, int message_size, DatasetCounts counts,
                   std::uint64_t seed);

}  // namespace egan::synth
