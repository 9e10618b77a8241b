#include "ildnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ildnet/rng.hpp"

namespace fs = std::filesystem;

namespace ildnet {

std::size_t label_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kClassNames.size(); ++i)
        if (name == kClassNames[i]) return i;
    throw DataError("unknown class label '" + name + "'");
}

std::string label_name(std::size_t label) {
    if (label >= kClassNames.size())
        throw DataError("class index " + std::to_string(label) + " out of range");
    return kClassNames[label];
}

// ---------------------------------------------------------------------------
// 16-bit binary PGM slices.
// ---------------------------------------------------------------------------

namespace {

constexpr float kHuMin = -1024.0f;
constexpr float kHuMax = 3071.0f;
constexpr float kHuOffset = 1024.0f;  // stored pixel = HU + offset

// Next whitespace-delimited token, skipping '#' comment lines.
std::string pgm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok += static_cast<char>(c);
    }
    return tok;
}

std::size_t parse_size(const std::string& tok, const std::string& path, const char* what) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw DataError(path + ": bad PGM " + std::string(what) + " '" + tok + "'");
    }
}

}  // namespace

SliceImage load_slice_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open slice");
    if (pgm_token(in) != "P5") throw DataError(path + ": not a binary PGM (P5) file");
    SliceImage slice;
    slice.width = parse_size(pgm_token(in), path, "width");
    slice.height = parse_size(pgm_token(in), path, "height");
    const std::size_t maxval = parse_size(pgm_token(in), path, "maxval");
    if (maxval < 256 || maxval > 65535)
        throw DataError(path + ": expected a 16-bit PGM, maxval " + std::to_string(maxval));
    if (slice.width == 0 || slice.height == 0) throw DataError(path + ": empty slice");

    const std::size_t n = slice.width * slice.height;
    std::vector<unsigned char> raw(n * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw DataError(path + ": truncated pixel data");

    slice.hu.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        // PGM stores 16-bit samples most significant byte first.
        const float stored = static_cast<float>(raw[2 * i] * 256 + raw[2 * i + 1]);
        slice.hu[i] = std::min(kHuMax, std::max(kHuMin, stored - kHuOffset));
    }
    return slice;
}

void write_slice_pgm(const std::string& path, const SliceImage& slice) {
    if (slice.hu.size() != slice.width * slice.height)
        throw DataError(path + ": slice buffer does not match its dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << "P5\n" << slice.width << " " << slice.height << "\n65535\n";
    std::vector<unsigned char> raw(slice.hu.size() * 2);
    for (std::size_t i = 0; i < slice.hu.size(); ++i) {
        const float hu = std::min(kHuMax, std::max(kHuMin, slice.hu[i]));
        const unsigned v = static_cast<unsigned>(std::lround(hu + kHuOffset));
        raw[2 * i] = static_cast<unsigned char>(v >> 8);
        raw[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw DataError(path + ": failed writing pixel data");
}

// ---------------------------------------------------------------------------
// Intensity windowing.
// ---------------------------------------------------------------------------

TensorF hu_window(const SliceImage& slice, const std::vector<HUWindow>& windows) {
    if (windows.empty()) throw ConfigError("hu_window: no windows configured");
    for (const HUWindow& w : windows)
        if (!(w.lo < w.hi))
            throw ConfigError("hu_window: window [" + std::to_string(w.lo) + ", " +
                              std::to_string(w.hi) + "] is empty");
    if (slice.hu.size() != slice.width * slice.height)
        throw DataError("hu_window: slice buffer does not match its dimensions");
    const std::size_t c = windows.size();
    TensorF out({slice.height, slice.width, c});
    float* p = out.data();
    for (std::size_t i = 0; i < slice.hu.size(); ++i)
        for (std::size_t w = 0; w < c; ++w) {
            const double lo = windows[w].lo, hi = windows[w].hi;
            const double v = std::min(hi, std::max(lo, static_cast<double>(slice.hu[i])));
            *p++ = static_cast<float>((v - lo) / (hi - lo));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Polygons and patch extraction.
// ---------------------------------------------------------------------------

bool point_in_polygon(const Polygon& poly, double x, double y) {
    if (poly.size() < 3) throw DataError("polygon needs at least 3 vertices");
    const std::size_t n = poly.size();

    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % n];
        const double cross = (b.first - a.first) * (y - a.second) - (b.second - a.second) * (x - a.first);
        if (std::abs(cross) <= 1e-9 && x >= std::min(a.first, b.first) - 1e-9 &&
            x <= std::max(a.first, b.first) + 1e-9 && y >= std::min(a.second, b.second) - 1e-9 &&
            y <= std::max(a.second, b.second) + 1e-9)
            return true;  // on an edge
    }

    bool inside = false;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % n];
        if ((a.second > y) != (b.second > y)) {
            const double xi = a.first + (y - a.second) / (b.second - a.second) * (b.first - a.first);
            if (x < xi) inside = !inside;
        }
    }
    return inside;
}

double cell_coverage(const Polygon& poly, double x0, double y0, std::size_t size) {
    if (size == 0) throw ConfigError("cell_coverage: empty cell");
    std::size_t hits = 0;
    for (std::size_t j = 0; j < size; ++j)
        for (std::size_t i = 0; i < size; ++i)
            if (point_in_polygon(poly, x0 + static_cast<double>(i) + 0.5,
                                 y0 + static_cast<double>(j) + 0.5))
                ++hits;
    return static_cast<double>(hits) / static_cast<double>(size * size);
}

std::vector<Patch> extract_patches(const TensorF& channels, const std::vector<Annotation>& annotations,
                                   const std::string& scan_id, const std::string& slice_id,
                                   std::size_t patch_size, double coverage) {
    require_rank(channels, 3, "extract_patches");
    if (patch_size == 0) throw ConfigError("extract: patch size must be positive");
    if (coverage <= 0.0 || coverage > 1.0)
        throw ConfigError("extract: coverage threshold must lie in (0, 1], got " +
                          std::to_string(coverage));
    const std::size_t h = channels.dim(0), w = channels.dim(1), c = channels.dim(2);
    if (patch_size > h || patch_size > w)
        throw ConfigError("extract: patch size " + std::to_string(patch_size) +
                          " exceeds slice " + std::to_string(w) + "x" + std::to_string(h));

    std::vector<Patch> out;
    for (std::size_t gy = 0; gy < h / patch_size; ++gy)
        for (std::size_t gx = 0; gx < w / patch_size; ++gx) {
            const double x0 = static_cast<double>(gx * patch_size);
            const double y0 = static_cast<double>(gy * patch_size);
            for (const Annotation& ann : annotations) {
                if (cell_coverage(ann.polygon, x0, y0, patch_size) < coverage) continue;
                Patch p;
                p.pixels = TensorF({patch_size, patch_size, c});
                for (std::size_t j = 0; j < patch_size; ++j)
                    for (std::size_t i = 0; i < patch_size; ++i)
                        for (std::size_t ci = 0; ci < c; ++ci)
                            p.pixels.at3(j, i, ci) =
                                channels.at3(gy * patch_size + j, gx * patch_size + i, ci);
                p.label = ann.label;
                p.scan_id = scan_id;
                p.slice_id = slice_id;
                p.gx = gx;
                p.gy = gy;
                out.push_back(std::move(p));
                break;  // first covering annotation labels the cell
            }
        }
    return out;
}

// ---------------------------------------------------------------------------
// Annotation files.
// ---------------------------------------------------------------------------

std::vector<Annotation> parse_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open annotations");
    std::vector<Annotation> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = path + ":" + std::to_string(lineno);
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ss(line);
        Annotation ann;
        std::string label;
        if (!(ss >> ann.slice_id)) continue;  // blank line
        if (!(ss >> label)) throw DataError(where + ": missing class label");
        ann.label = label_from_name(label);
        std::string vertex;
        while (ss >> vertex) {
            const std::size_t comma = vertex.find(',');
            if (comma == std::string::npos)
                throw DataError(where + ": vertex '" + vertex + "' is not x,y");
            try {
                std::size_t px = 0, py = 0;
                const double x = std::stod(vertex.substr(0, comma), &px);
                const double y = std::stod(vertex.substr(comma + 1), &py);
                if (px != comma || py != vertex.size() - comma - 1) throw std::invalid_argument(vertex);
                ann.polygon.emplace_back(x, y);
            } catch (const std::exception&) {
                throw DataError(where + ": vertex '" + vertex + "' is not x,y");
            }
        }
        if (ann.polygon.size() < 3)
            throw DataError(where + ": polygon needs at least 3 vertices, got " +
                            std::to_string(ann.polygon.size()));
        out.push_back(std::move(ann));
    }
    return out;
}

void write_annotations(const std::string& path, const std::vector<Annotation>& annotations) {
    std::ofstream out(path);
    if (!out) throw DataError(path + ": cannot open for writing");
    for (const Annotation& ann : annotations) {
        out << ann.slice_id << " " << label_name(ann.label);
        for (const auto& [x, y] : ann.polygon) out << " " << x << "," << y;
        out << "\n";
    }
    if (!out) throw DataError(path + ": failed writing annotations");
}

// ---------------------------------------------------------------------------
// Augmentation primitives. Geometric transforms resample the source image at
// inverse-mapped pixel centers with bilinear interpolation and edge clamping,
// so all outputs stay inside the source value range.
// ---------------------------------------------------------------------------

namespace {

float bilinear(const TensorF& img, double sx, double sy, std::size_t c, double x_lo, double x_hi,
               double y_lo, double y_hi) {
    sx = std::min(x_hi, std::max(x_lo, sx));
    sy = std::min(y_hi, std::max(y_lo, sy));
    const double fx0 = std::floor(sx), fy0 = std::floor(sy);
    const std::size_t w = img.dim(1), h = img.dim(0);
    const auto clamp_x = [w](double v) {
        return static_cast<std::size_t>(std::min(static_cast<double>(w - 1), std::max(0.0, v)));
    };
    const auto clamp_y = [h](double v) {
        return static_cast<std::size_t>(std::min(static_cast<double>(h - 1), std::max(0.0, v)));
    };
    const std::size_t x0 = clamp_x(fx0), x1 = clamp_x(fx0 + 1);
    const std::size_t y0 = clamp_y(fy0), y1 = clamp_y(fy0 + 1);
    const double ax = sx - fx0, ay = sy - fy0;
    const double top = (1.0 - ax) * img.at3(y0, x0, c) + ax * img.at3(y0, x1, c);
    const double bot = (1.0 - ax) * img.at3(y1, x0, c) + ax * img.at3(y1, x1, c);
    return static_cast<float>((1.0 - ay) * top + ay * bot);
}

// Resamples every output pixel center through an inverse coordinate map
// (x, y) -> (sx, sy) given in index space.
template <typename MapFn>
TensorF resample(const TensorF& img, MapFn&& map) {
    require_rank(img, 3, "augment");
    const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    TensorF out(img.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const auto [sx, sy] = map(static_cast<double>(x), static_cast<double>(y));
            for (std::size_t ci = 0; ci < c; ++ci)
                out.at3(y, x, ci) = bilinear(img, sx, sy, ci, 0.0, static_cast<double>(w - 1), 0.0,
                                             static_cast<double>(h - 1));
        }
    return out;
}

}  // namespace

TensorF translate_image(const TensorF& img, int dx, int dy) {
    require_rank(img, 3, "augment");
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(img.dim(0));
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(img.dim(1));
    const std::size_t c = img.dim(2);
    TensorF out(img.shape());
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            const std::size_t sy = static_cast<std::size_t>(std::min(h - 1, std::max<std::ptrdiff_t>(0, y - dy)));
            const std::size_t sx = static_cast<std::size_t>(std::min(w - 1, std::max<std::ptrdiff_t>(0, x - dx)));
            for (std::size_t ci = 0; ci < c; ++ci)
                out.at3(static_cast<std::size_t>(y), static_cast<std::size_t>(x), ci) =
                    img.at3(sy, sx, ci);
        }
    return out;
}

TensorF hflip_image(const TensorF& img) {
    require_rank(img, 3, "augment");
    const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    TensorF out(img.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ci = 0; ci < c; ++ci) out.at3(y, x, ci) = img.at3(y, w - 1 - x, ci);
    return out;
}

TensorF rotate_image(const TensorF& img, double degrees) {
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cx = static_cast<double>(img.dim(1)) / 2.0;
    const double cy = static_cast<double>(img.dim(0)) / 2.0;
    return resample(img, [=](double x, double y) {
        const double u = x + 0.5 - cx, v = y + 0.5 - cy;
        return std::pair<double, double>(cx + cs * u + sn * v - 0.5, cy - sn * u + cs * v - 0.5);
    });
}

TensorF scale_image(const TensorF& img, double factor) {
    if (!(factor > 0.0)) throw ConfigError("scale: factor must be positive");
    const double cx = static_cast<double>(img.dim(1)) / 2.0;
    const double cy = static_cast<double>(img.dim(0)) / 2.0;
    return resample(img, [=](double x, double y) {
        return std::pair<double, double>(cx + (x + 0.5 - cx) / factor - 0.5,
                                         cy + (y + 0.5 - cy) / factor - 0.5);
    });
}

TensorF shade_image(const TensorF& img, double gain) {
    require_rank(img, 3, "augment");
    TensorF out(img.shape());
    for (std::size_t i = 0; i < img.size(); ++i)
        out[i] = static_cast<float>(std::min(1.0, std::max(0.0, static_cast<double>(img[i]) * gain)));
    return out;
}

TensorF crop_resize_image(const TensorF& img, std::size_t ox, std::size_t oy, std::size_t cw,
                          std::size_t ch) {
    require_rank(img, 3, "augment");
    const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (cw == 0 || ch == 0 || ox + cw > w || oy + ch > h)
        throw ConfigError("crop: window " + std::to_string(cw) + "x" + std::to_string(ch) + " at (" +
                          std::to_string(ox) + ", " + std::to_string(oy) + ") leaves " +
                          std::to_string(w) + "x" + std::to_string(h));
    TensorF out(img.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double sx = static_cast<double>(ox) +
                              (static_cast<double>(x) + 0.5) * static_cast<double>(cw) / static_cast<double>(w) - 0.5;
            const double sy = static_cast<double>(oy) +
                              (static_cast<double>(y) + 0.5) * static_cast<double>(ch) / static_cast<double>(h) - 0.5;
            for (std::size_t ci = 0; ci < c; ++ci)
                out.at3(y, x, ci) = bilinear(img, sx, sy, ci, static_cast<double>(ox),
                                             static_cast<double>(ox + cw - 1), static_cast<double>(oy),
                                             static_cast<double>(oy + ch - 1));
        }
    return out;
}

TensorF shear_image(const TensorF& img, double shx, double shy) {
    const double cx = static_cast<double>(img.dim(1)) / 2.0;
    const double cy = static_cast<double>(img.dim(0)) / 2.0;
    return resample(img, [=](double x, double y) {
        const double u = x + 0.5 - cx, v = y + 0.5 - cy;
        return std::pair<double, double>(cx + u + shx * v - 0.5, cy + v + shy * u - 0.5);
    });
}

std::string transform_name(TransformKind kind) {
    switch (kind) {
        case TransformKind::translation: return "translation";
        case TransformKind::horizontal_flip: return "horizontal-flip";
        case TransformKind::rotation: return "rotation";
        case TransformKind::scaling: return "scaling";
        case TransformKind::shading: return "shading";
        case TransformKind::cropping: return "cropping";
        case TransformKind::affine: return "affine";
    }
    throw ConfigError("unknown transform kind");
}

TransformKind parse_transform(const std::string& name) {
    for (TransformKind kind : all_transforms())
        if (transform_name(kind) == name) return kind;
    throw ConfigError("unknown transform '" + name + "'");
}

Patch augment(const Patch& patch, TransformKind kind, std::uint64_t seed) {
    require_rank(patch.pixels, 3, "augment");
    Rng rng(seed);
    Patch out = patch;
    out.transform = transform_name(kind);
    switch (kind) {
        case TransformKind::translation: {
            const int dx = static_cast<int>(rng.uniform_int(-4, 4));
            const int dy = static_cast<int>(rng.uniform_int(-4, 4));
            out.pixels = translate_image(patch.pixels, dx, dy);
            break;
        }
        case TransformKind::horizontal_flip:
            out.pixels = hflip_image(patch.pixels);
            break;
        case TransformKind::rotation:
            out.pixels = rotate_image(patch.pixels, rng.uniform(-15.0, 15.0));
            break;
        case TransformKind::scaling:
            out.pixels = scale_image(patch.pixels, rng.uniform(0.9, 1.1));
            break;
        case TransformKind::shading:
            out.pixels = shade_image(patch.pixels, rng.uniform(0.8, 1.2));
            break;
        case TransformKind::cropping: {
            const std::size_t h = patch.pixels.dim(0), w = patch.pixels.dim(1);
            const std::size_t cw = std::max<std::size_t>(1, w * 7 / 8);
            const std::size_t ch = std::max<std::size_t>(1, h * 7 / 8);
            const std::size_t ox = static_cast<std::size_t>(rng.below(w - cw + 1));
            const std::size_t oy = static_cast<std::size_t>(rng.below(h - ch + 1));
            out.pixels = crop_resize_image(patch.pixels, ox, oy, cw, ch);
            break;
        }
        case TransformKind::affine:
            out.pixels = shear_image(patch.pixels, rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
            break;
    }
    return out;
}

std::vector<Patch> expand_training_set(const std::vector<Patch>& sources,
                                       const std::vector<TransformKind>& transforms,
                                       std::size_t factor, std::uint64_t seed, bool keep_originals) {
    if (transforms.empty() && factor > 0)
        throw ConfigError("augment: no transforms configured");
    std::vector<Patch> out;
    out.reserve((keep_originals ? sources.size() : 0) + sources.size() * factor);
    if (keep_originals) out = sources;
    for (const Patch& src : sources)
        for (std::size_t v = 0; v < factor; ++v) {
            const TransformKind kind = transforms[v % transforms.size()];
            const std::uint64_t sub = derive_seed(
                seed, src.source_key() + "/" + transform_name(kind) + "/" + std::to_string(v));
            out.push_back(augment(src, kind, sub));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Splits.
// ---------------------------------------------------------------------------

namespace {

void require_unaugmented(const std::vector<Patch>& patches, const char* op) {
    for (const Patch& p : patches)
        if (!p.transform.empty())
            throw DataError(std::string(op) + ": must run before augmentation, found patch from " +
                            p.source_key() + " transformed by " + p.transform);
}

std::vector<std::vector<std::size_t>> indices_by_class(const std::vector<Patch>& patches,
                                                       std::size_t num_classes, const char* op) {
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        if (patches[i].label >= num_classes)
            throw DataError(std::string(op) + ": label " + std::to_string(patches[i].label) +
                            " outside " + std::to_string(num_classes) + " classes");
        by_class[patches[i].label].push_back(i);
    }
    return by_class;
}

}  // namespace

SplitResult stratified_split(const std::vector<Patch>& patches, std::size_t test_per_class,
                             std::uint64_t seed, std::size_t num_classes) {
    if (num_classes == 0) throw ConfigError("split: need at least one class");
    require_unaugmented(patches, "split");
    std::vector<std::vector<std::size_t>> by_class = indices_by_class(patches, num_classes, "split");

    Rng rng(derive_seed(seed, "split"));
    SplitResult result;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<std::size_t>& idx = by_class[c];
        if (idx.size() < test_per_class)
            throw DataError("split: class " + std::to_string(c) + " has only " +
                            std::to_string(idx.size()) + " patches, need " +
                            std::to_string(test_per_class) + " for the test set");
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < test_per_class ? result.test : result.train).push_back(patches[idx[i]]);
    }
    return result;
}

std::vector<std::size_t> kfold_assign(const std::vector<Patch>& patches, std::size_t k,
                                      bool stratified, std::uint64_t seed, std::size_t num_classes) {
    if (k < 2) throw ConfigError("kfold: need at least 2 folds");
    if (patches.size() < k)
        throw DataError("kfold: " + std::to_string(patches.size()) + " patches cannot fill " +
                        std::to_string(k) + " folds");
    require_unaugmented(patches, "kfold");

    std::vector<std::size_t> fold_of(patches.size());
    Rng rng(derive_seed(seed, "kfold"));
    if (stratified) {
        std::vector<std::vector<std::size_t>> by_class = indices_by_class(patches, num_classes, "kfold");
        for (std::vector<std::size_t>& idx : by_class) {
            rng.shuffle(idx);
            for (std::size_t i = 0; i < idx.size(); ++i) fold_of[idx[i]] = i % k;
        }
    } else {
        std::vector<std::size_t> idx(patches.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i) fold_of[idx[i]] = i % k;
    }
    return fold_of;
}

// ---------------------------------------------------------------------------
// Synthetic textures.
// ---------------------------------------------------------------------------

namespace {

// Base intensity of class c at (x, y), in [-1, 1] before scaling.
double texture_value(std::size_t cls, double x, double y, double phase) {
    const double pi2 = 2.0 * 3.14159265358979323846;
    switch (cls) {
        case 0: return std::sin(pi2 * y / 8.0 + phase);                    // horizontal stripes
        case 1: return std::sin(pi2 * x / 8.0 + phase);                    // vertical stripes
        case 2: return std::sin(pi2 * (x + y) / 11.0 + phase);            // diagonal stripes
        case 3: return std::sin(pi2 * x / 4.0 + phase) * std::sin(pi2 * y / 4.0 + phase);  // checks
        default: {
            const double r = std::sqrt((x - 16.0) * (x - 16.0) + (y - 16.0) * (y - 16.0));
            return std::sin(pi2 * r / 9.0 + phase);                        // rings
        }
    }
}

}  // namespace

std::vector<Patch> synthesize_dataset(std::size_t per_class, std::uint64_t seed,
                                      std::size_t patch_size, std::size_t channels) {
    if (patch_size == 0 || channels == 0) throw ConfigError("synthesize: empty patch shape");
    std::vector<Patch> out;
    out.reserve(per_class * kClassNames.size());
    for (std::size_t cls = 0; cls < kClassNames.size(); ++cls)
        for (std::size_t s = 0; s < per_class; ++s) {
            Rng rng(derive_seed(seed, "synth/" + std::to_string(cls) + "/" + std::to_string(s)));
            const double phase = rng.uniform(0.0, 0.7);
            Patch p;
            p.pixels = TensorF({patch_size, patch_size, channels});
            for (std::size_t y = 0; y < patch_size; ++y)
                for (std::size_t x = 0; x < patch_size; ++x) {
                    const double base = texture_value(cls, static_cast<double>(x),
                                                      static_cast<double>(y), phase);
                    for (std::size_t c = 0; c < channels; ++c) {
                        const double noise = rng.uniform(-0.08, 0.08);
                        const double v = 0.5 + 0.35 * base * (1.0 - 0.08 * static_cast<double>(c)) + noise;
                        p.pixels.at3(y, x, c) = static_cast<float>(std::min(1.0, std::max(0.0, v)));
                    }
                }
            p.label = cls;
            p.scan_id = "synth";
            p.slice_id = label_name(cls);
            p.gx = s;
            p.gy = 0;
            out.push_back(std::move(p));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Patch stores and single-patch files. Pixels are serialized as raw float32
// little-endian regardless of host byte order.
// ---------------------------------------------------------------------------

namespace {

void put_f32le(std::vector<unsigned char>& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    buf.push_back(static_cast<unsigned char>(bits & 0xff));
    buf.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
    buf.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
    buf.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
}

float get_f32le(const unsigned char* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) |
                         (static_cast<std::uint32_t>(p[3]) << 24);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

Shape parse_dim(const std::string& token, const std::string& path) {
    Shape dims;
    std::size_t pos = 0;
    while (pos <= token.size()) {
        const std::size_t next = token.find('x', pos);
        const std::string part = token.substr(pos, next == std::string::npos ? next : next - pos);
        try {
            std::size_t used = 0;
            dims.push_back(std::stoull(part, &used));
            if (used != part.size() || dims.back() == 0) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw DataError(path + ": bad patch dimensions '" + token + "'");
        }
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (dims.size() != 3) throw DataError(path + ": bad patch dimensions '" + token + "'");
    return dims;
}

}  // namespace

void write_patch_store(const std::string& dir, const std::vector<Patch>& patches) {
    if (patches.empty()) throw DataError("store: refusing to write an empty patch store");
    const Shape dims = patches[0].pixels.shape();
    for (const Patch& p : patches)
        if (p.pixels.shape() != dims)
            throw DataError("store: mixed patch shapes " + shape_str(dims) + " and " +
                            shape_str(p.pixels.shape()));
    fs::create_directories(dir);

    std::ofstream manifest(fs::path(dir) / "manifest.tsv");
    if (!manifest) throw DataError(dir + ": cannot write manifest.tsv");
    manifest << "index\tscan\tslice\tgx\tgy\ttransform\tlabel\n";
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const Patch& p = patches[i];
        manifest << i << '\t' << p.scan_id << '\t' << p.slice_id << '\t' << p.gx << '\t' << p.gy
                 << '\t' << p.transform << '\t' << label_name(p.label) << '\n';
    }
    if (!manifest) throw DataError(dir + ": failed writing manifest.tsv");

    std::ofstream bin(fs::path(dir) / "patches.bin", std::ios::binary);
    if (!bin) throw DataError(dir + ": cannot write patches.bin");
    bin << "ILDNET-PATCHES v1 count=" << patches.size() << " dim=" << shape_str(dims) << "\n";
    std::vector<unsigned char> buf;
    buf.reserve(patches[0].pixels.size() * 4);
    for (const Patch& p : patches) {
        buf.clear();
        for (std::size_t i = 0; i < p.pixels.size(); ++i) put_f32le(buf, p.pixels[i]);
        bin.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!bin) throw DataError(dir + ": failed writing patches.bin");
}

std::vector<Patch> load_patch_store(const std::string& dir) {
    const std::string manifest_path = (fs::path(dir) / "manifest.tsv").string();
    std::ifstream manifest(manifest_path);
    if (!manifest) throw DataError(manifest_path + ": cannot open patch store manifest");

    std::string line;
    if (!std::getline(manifest, line) ||
        line != "index\tscan\tslice\tgx\tgy\ttransform\tlabel")
        throw DataError(manifest_path + ": unrecognized manifest header");

    std::vector<Patch> out;
    std::size_t lineno = 1;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t pos = 0;
        while (true) {
            const std::size_t tab = line.find('\t', pos);
            cols.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
            if (tab == std::string::npos) break;
            pos = tab + 1;
        }
        if (cols.size() != 7)
            throw DataError(manifest_path + ":" + std::to_string(lineno) + ": expected 7 columns, got " +
                            std::to_string(cols.size()));
        Patch p;
        p.scan_id = cols[1];
        p.slice_id = cols[2];
        try {
            p.gx = std::stoull(cols[3]);
            p.gy = std::stoull(cols[4]);
        } catch (const std::exception&) {
            throw DataError(manifest_path + ":" + std::to_string(lineno) + ": bad grid coordinates");
        }
        p.transform = cols[5];
        p.label = label_from_name(cols[6]);
        out.push_back(std::move(p));
    }

    const std::string bin_path = (fs::path(dir) / "patches.bin").string();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError(bin_path + ": cannot open patch store pixels");
    if (!std::getline(bin, line)) throw DataError(bin_path + ": missing header");
    std::istringstream head(line);
    std::string magic, version, count_kv, dim_kv;
    head >> magic >> version >> count_kv >> dim_kv;
    if (magic != "ILDNET-PATCHES") throw DataError(bin_path + ": not a patch store");
    if (version != "v1") throw DataError(bin_path + ": unsupported version '" + version + "'");
    if (count_kv.rfind("count=", 0) != 0 || dim_kv.rfind("dim=", 0) != 0)
        throw DataError(bin_path + ": malformed header");
    std::size_t count = 0;
    try {
        count = std::stoull(count_kv.substr(6));
    } catch (const std::exception&) {
        throw DataError(bin_path + ": malformed header");
    }
    if (count != out.size())
        throw DataError(bin_path + ": holds " + std::to_string(count) + " patches but manifest lists " +
                        std::to_string(out.size()));
    const Shape dims = parse_dim(dim_kv.substr(4), bin_path);

    const std::size_t per_patch = shape_size(dims) * 4;
    std::vector<unsigned char> buf(per_patch);
    for (Patch& p : out) {
        bin.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(per_patch));
        if (static_cast<std::size_t>(bin.gcount()) != per_patch)
            throw DataError(bin_path + ": truncated pixel data");
        p.pixels = TensorF(dims);
        for (std::size_t i = 0; i < p.pixels.size(); ++i) p.pixels[i] = get_f32le(&buf[i * 4]);
    }
    if (bin.get() != EOF) throw DataError(bin_path + ": trailing bytes after pixel data");
    return out;
}

void write_patch_file(const std::string& path, const Patch& patch) {
    require_rank(patch.pixels, 3, "patch file");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << "ILDNET-PATCH v1 label=" << label_name(patch.label)
        << " dim=" << shape_str(patch.pixels.shape()) << "\n";
    std::vector<unsigned char> buf;
    for (std::size_t i = 0; i < patch.pixels.size(); ++i) put_f32le(buf, patch.pixels[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError(path + ": failed writing pixels");
}

Patch read_patch_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open patch file");
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": missing header");
    std::istringstream head(line);
    std::string magic, version, label_kv, dim_kv;
    head >> magic >> version >> label_kv >> dim_kv;
    if (magic != "ILDNET-PATCH") throw DataError(path + ": not a patch file");
    if (version != "v1") throw DataError(path + ": unsupported version '" + version + "'");
    if (label_kv.rfind("label=", 0) != 0 || dim_kv.rfind("dim=", 0) != 0)
        throw DataError(path + ": malformed header");

    Patch p;
    p.label = label_from_name(label_kv.substr(6));
    p.scan_id = fs::path(path).filename().string();
    const Shape dims = parse_dim(dim_kv.substr(4), path);
    const std::size_t bytes = shape_size(dims) * 4;
    std::vector<unsigned char> buf(bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) throw DataError(path + ": truncated pixel data");
    p.pixels = TensorF(dims);
    for (std::size_t i = 0; i < p.pixels.size(); ++i) p.pixels[i] = get_f32le(&buf[i * 4]);
    return p;
}

// ---------------------------------------------------------------------------
// Scan directory ingest.
// ---------------------------------------------------------------------------

std::vector<Patch> load_annotated_scans(const std::string& root, const std::vector<HUWindow>& windows,
                                        std::size_t patch_size, double coverage) {
    if (!fs::is_directory(root)) throw DataError(root + ": not a directory");
    std::vector<std::string> scan_dirs;
    for (const fs::directory_entry& entry : fs::directory_iterator(root))
        if (entry.is_directory()) scan_dirs.push_back(entry.path().filename().string());
    std::sort(scan_dirs.begin(), scan_dirs.end());
    if (scan_dirs.empty()) throw DataError(root + ": no scan directories found");

    std::vector<Patch> out;
    for (const std::string& scan : scan_dirs) {
        const fs::path dir = fs::path(root) / scan;
        const std::vector<Annotation> annotations = parse_annotations((dir / "annotations.txt").string());
        if (annotations.empty())
            throw DataError((dir / "annotations.txt").string() + ": no regions annotated");

        // Group by slice, keeping first-appearance order.
        std::vector<std::string> slice_order;
        std::map<std::string, std::vector<Annotation>> by_slice;
        for (const Annotation& ann : annotations) {
            if (by_slice.find(ann.slice_id) == by_slice.end()) slice_order.push_back(ann.slice_id);
            by_slice[ann.slice_id].push_back(ann);
        }
        for (const std::string& slice_id : slice_order) {
            const SliceImage slice = load_slice_pgm((dir / (slice_id + ".pgm")).string());
            const TensorF channels = hu_window(slice, windows);
            std::vector<Patch> patches =
                extract_patches(channels, by_slice[slice_id], scan, slice_id, patch_size, coverage);
            for (Patch& p : patches) out.push_back(std::move(p));
        }
    }
    return out;
}

Dataset stack_patches(const std::vector<Patch>& patches) {
    if (patches.empty()) throw DataError("stack: no patches");
    const Shape dims = patches[0].pixels.shape();
    Dataset d;
    d.x = TensorF({patches.size(), dims[0], dims[1], dims[2]});
    d.y.resize(patches.size());
    const std::size_t per = shape_size(dims);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        if (patches[i].pixels.shape() != dims)
            throw DataError("stack: mixed patch shapes " + shape_str(dims) + " and " +
                            shape_str(patches[i].pixels.shape()));
        float* dst = d.x.data() + i * per;
        const float* src = patches[i].pixels.data();
        for (std::size_t j = 0; j < per; ++j) dst[j] = src[j];
        d.y[i] = patches[i].label;
    }
    return d;
}

}  // namespace ildnet
