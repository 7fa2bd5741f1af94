#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signshield/rng.hpp"
#include "signshield/tensor.hpp"

namespace signshield {

/// One of the 18 supported sign classes.
struct SignClass {
    int id;
    std::string name;   // lower case, space separated
    bool has_text;
    std::vector<std::string> words;  // rendered tokens when has_text
};

/// The fixed 18-class list, indexed by id.
const std::vector<SignClass>& sign_classes();

/// Resolves a class name (spaces or underscores) to its id.
/// Throws LabelError for unknown names.
int class_id_by_name(const std::string& name);

struct LabeledImage {
    Tensor image;  // {H,W,3} in [0,1]
    int label = 0;
};

/// Renders one synthetic sign image; deterministic per (class, rng state).
Tensor render_sign(int class_id, int extent, Rng& rng);

/// Generates per_class images for each of the 18 classes at the given
/// square extent. Image i uses the child stream seed.child(i), so the set
/// is reproducible per seed regardless of generation order.
std::vector<LabeledImage> generate_synthetic(std::uint64_t seed, int per_class, int extent);

/// Loads `<root>/<class_name>/<file>.ppm` (spaces in names as underscores),
/// resizing each image to extent x extent.
std::vector<LabeledImage> load_directory(const std::string& root, int extent);

/// Writes images in the same directory layout load_directory reads.
void save_dataset(const std::string& root, const std::vector<LabeledImage>& images);

struct DatasetSplit {
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> test;
    std::uint64_t seed = 0;
};

/// Stratified split: per class, floor(train_fraction * count) samples go to
/// train (at least 1 each side), shuffled by a per-class child stream.
DatasetSplit split(const std::vector<LabeledImage>& images, double train_fraction,
                   std::uint64_t seed);

}  // namespace signshield
