#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ildnet/tensor.hpp"

namespace ildnet {

// Class labels, fixed order: healthy, ground glass, emphysema, micronodules,
// fibrosis.
inline constexpr std::array<const char*, 5> kClassNames = {"H", "GG", "EM", "MN", "FB"};

std::size_t label_from_name(const std::string& name);
std::string label_name(std::size_t label);

// ---------------------------------------------------------------------------
// Slices. Pixels are Hounsfield units, clamped to [-1024, 3071] on load.
// On disk a slice is a 16-bit binary PGM whose stored value is HU + 1024.
// ---------------------------------------------------------------------------

struct SliceImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> hu;  // row-major
};

SliceImage load_slice_pgm(const std::string& path);
void write_slice_pgm(const std::string& path, const SliceImage& slice);

// ---------------------------------------------------------------------------
// Intensity windows: clamp HU to [lo, hi], rescale linearly to [0, 1].
// One output channel per window.
// ---------------------------------------------------------------------------

struct HUWindow {
    double lo = 0.0;
    double hi = 0.0;
};

inline std::vector<HUWindow> default_hu_windows() {
    return {{-1400.0, -950.0}, {-1000.0, 200.0}, {-160.0, 240.0}};
}

TensorF hu_window(const SliceImage& slice, const std::vector<HUWindow>& windows);

// ---------------------------------------------------------------------------
// Annotated regions and patch extraction.
// ---------------------------------------------------------------------------

using Polygon = std::vector<std::pair<double, double>>;  // (x, y) vertices

// Even-odd rule with points on the boundary counted inside.
bool point_in_polygon(const Polygon& poly, double x, double y);

// Fraction of the size x size pixel centers at (x0+i+0.5, y0+j+0.5) inside.
double cell_coverage(const Polygon& poly, double x0, double y0, std::size_t size);

struct Annotation {
    std::string slice_id;
    std::size_t label = 0;
    Polygon polygon;
};

// One line per region: "<slice_id> <label> x,y x,y x,y ...", at least three
// vertices; '#' starts a comment.
std::vector<Annotation> parse_annotations(const std::string& path);
void write_annotations(const std::string& path, const std::vector<Annotation>& annotations);

struct Patch {
    TensorF pixels;  // patch_size x patch_size x channels, values in [0, 1]
    std::size_t label = 0;
    // provenance
    std::string scan_id;
    std::string slice_id;
    std::size_t gx = 0;  // grid cell column
    std::size_t gy = 0;  // grid cell row
    std::string transform;  // empty for an original patch

    // Identifies the source region regardless of augmentation.
    std::string source_key() const {
        return scan_id + "/" + slice_id + "/" + std::to_string(gx) + "," + std::to_string(gy);
    }
};

// Walks the non-overlapping patch_size grid anchored at the slice origin and
// keeps each cell whose pixel-center coverage by some annotation reaches the
// threshold; the first sufficiently covering annotation assigns the label.
std::vector<Patch> extract_patches(const TensorF& channels, const std::vector<Annotation>& annotations,
                                   const std::string& scan_id, const std::string& slice_id,
                                   std::size_t patch_size, double coverage);

// ---------------------------------------------------------------------------
// Augmentation. Every transform maps a patch to a same-shape patch with the
// label kept and the transform name recorded in provenance.
// ---------------------------------------------------------------------------

enum class TransformKind {
    translation,      // integer shift up to +-4 px, edges replicated
    horizontal_flip,
    rotation,         // +-15 degrees, bilinear, edges clamped
    scaling,          // zoom 0.9x-1.1x about the center, bilinear
    shading,          // intensity gain 0.8x-1.2x, clamped to [0, 1]
    cropping,         // random 7/8-size window resized back, bilinear
    affine,           // shear up to +-0.1 in both axes, bilinear
};

inline const std::vector<TransformKind>& all_transforms() {
    static const std::vector<TransformKind> kinds = {
        TransformKind::translation, TransformKind::horizontal_flip, TransformKind::rotation,
        TransformKind::scaling,     TransformKind::shading,         TransformKind::cropping,
        TransformKind::affine,
    };
    return kinds;
}

std::string transform_name(TransformKind kind);
TransformKind parse_transform(const std::string& name);

// Deterministic parameterized primitives behind the random transforms.
TensorF translate_image(const TensorF& img, int dx, int dy);
TensorF hflip_image(const TensorF& img);
TensorF rotate_image(const TensorF& img, double degrees);
TensorF scale_image(const TensorF& img, double factor);
TensorF shade_image(const TensorF& img, double gain);
TensorF crop_resize_image(const TensorF& img, std::size_t ox, std::size_t oy, std::size_t cw,
                          std::size_t ch);
TensorF shear_image(const TensorF& img, double shx, double shy);

// Applies one transform with parameters drawn from the seeded stream.
Patch augment(const Patch& patch, TransformKind kind, std::uint64_t seed);

// Produces factor augmented variants per source patch, cycling through the
// transform list, each drawn from a seed derived from (seed, source, variant).
// factor 0 with originals kept returns the input unchanged.
std::vector<Patch> expand_training_set(const std::vector<Patch>& sources,
                                       const std::vector<TransformKind>& transforms,
                                       std::size_t factor, std::uint64_t seed,
                                       bool keep_originals = true);

// ---------------------------------------------------------------------------
// Splits. Both run on unaugmented patches (empty transform tag) so no source
// region can appear on both sides of a boundary.
// ---------------------------------------------------------------------------

struct SplitResult {
    std::vector<Patch> train;
    std::vector<Patch> test;
};

// Draws exactly test_per_class patches per class into the test set, seeded.
SplitResult stratified_split(const std::vector<Patch>& patches, std::size_t test_per_class,
                             std::uint64_t seed, std::size_t num_classes);

// Fold index per patch. Stratified assignment deals each class's shuffled
// patches round-robin so per-class fold sizes differ by at most one.
std::vector<std::size_t> kfold_assign(const std::vector<Patch>& patches, std::size_t k,
                                      bool stratified, std::uint64_t seed,
                                      std::size_t num_classes);

// ---------------------------------------------------------------------------
// Synthetic dataset: five fixed texture families (striped, checked, radial)
// plus per-sample jitter and noise; separable by design.
// ---------------------------------------------------------------------------

std::vector<Patch> synthesize_dataset(std::size_t per_class, std::uint64_t seed,
                                      std::size_t patch_size = 32, std::size_t channels = 3);

// ---------------------------------------------------------------------------
// Patch store: a directory holding manifest.tsv (provenance and labels) and
// patches.bin (raw float32 little-endian pixel blocks).
// ---------------------------------------------------------------------------

void write_patch_store(const std::string& dir, const std::vector<Patch>& patches);
std::vector<Patch> load_patch_store(const std::string& dir);

// Single-patch file, same binary pixel encoding, for the predict command.
void write_patch_file(const std::string& path, const Patch& patch);
Patch read_patch_file(const std::string& path);

// ---------------------------------------------------------------------------
// Full ingest: scan directories under root, each holding annotations.txt and
// one 16-bit PGM per annotated slice, named <slice_id>.pgm.
// ---------------------------------------------------------------------------

std::vector<Patch> load_annotated_scans(const std::string& root, const std::vector<HUWindow>& windows,
                                        std::size_t patch_size, double coverage);

// Stacks patches into one NHWC tensor plus labels.
struct Dataset {
    TensorF x;
    std::vector<std::size_t> y;
};

Dataset stack_patches(const std::vector<Patch>& patches);

}  // namespace ildnet
