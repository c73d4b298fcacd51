#include "lwat/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lwat/errors.hpp"
#include "lwat/rng.hpp"

namespace lwat {

// ---------------------------------------------------------------------------
// CIFAR binary loaders
// ---------------------------------------------------------------------------

namespace {

Dataset load_cifar_binary(const std::vector<std::string>& paths, Split split, int labelBytes,
                          int classes, bool requireFullFiles) {
    const int64_t pixelBytes = 3 * 32 * 32;
    const int64_t recordBytes = labelBytes + pixelBytes;

    std::vector<std::vector<unsigned char>> files;
    int64_t total = 0;
    for (const std::string& path : paths) {
        std::ifstream is(path, std::ios::binary | std::ios::ate);
        if (!is) throw IoError("cannot open dataset file: " + path);
        const int64_t bytes = static_cast<int64_t>(is.tellg());
        if (bytes == 0) throw FormatError(path + ": empty file");
        if (bytes % recordBytes != 0)
            throw FormatError(path + ": truncated at byte offset " +
                              std::to_string((bytes / recordBytes) * recordBytes) + " (" +
                              std::to_string(bytes % recordBytes) + " trailing bytes)");
        const int64_t records = bytes / recordBytes;
        if (requireFullFiles && records != 10000)
            throw FormatError(path + ": expected 10000 records, found " + std::to_string(records));
        is.seekg(0);
        std::vector<unsigned char> buf(static_cast<size_t>(bytes));
        is.read(reinterpret_cast<char*>(buf.data()), bytes);
        if (!is) throw IoError(path + ": read failed");
        files.push_back(std::move(buf));
        total += records;
    }

    Dataset ds;
    ds.split = split;
    ds.classes = classes;
    ds.images = Tensor({total, 3, 32, 32});
    ds.labels.resize(static_cast<size_t>(total));
    int64_t rec = 0;
    for (size_t fi = 0; fi < files.size(); ++fi) {
        const auto& buf = files[fi];
        const int64_t records = static_cast<int64_t>(buf.size()) / recordBytes;
        for (int64_t r = 0; r < records; ++r, ++rec) {
            const unsigned char* p = buf.data() + r * recordBytes;
            const int label = p[labelBytes - 1]; // cifar100: fine label is the 2nd byte
            if (label >= classes)
                throw FormatError(paths[fi] + ": label byte " + std::to_string(label) +
                                  " out of range at offset " + std::to_string(r * recordBytes));
            ds.labels[static_cast<size_t>(rec)] = label;
            float* dst = ds.images.data() + rec * pixelBytes;
            const unsigned char* px = p + labelBytes;
            for (int64_t i = 0; i < pixelBytes; ++i)
                dst[i] = static_cast<float>(px[i]) * (1.0f / 255.0f);
        }
    }
    return ds;
}

} // namespace

Dataset load_cifar10_binary(const std::vector<std::string>& paths, Split split,
                            bool requireFullFiles) {
    return load_cifar_binary(paths, split, 1, 10, requireFullFiles);
}

Dataset load_cifar100_binary(const std::vector<std::string>& paths, Split split,
                             bool requireFullFiles) {
    return load_cifar_binary(paths, split, 2, 100, requireFullFiles);
}

// ---------------------------------------------------------------------------
// preprocessing
// ---------------------------------------------------------------------------

Dataset to_grayscale(const Dataset& ds) {
    if (ds.images.rank() != 4 || ds.images.extent(1) != 3)
        throw DimensionError("to_grayscale: expects [N x 3 x H x W], got " +
                             shape_str(ds.images.shape()));
    const int64_t n = ds.images.extent(0), h = ds.images.extent(2), w = ds.images.extent(3);
    const int64_t sp = h * w;
    Dataset out;
    out.split = ds.split;
    out.classes = ds.classes;
    out.labels = ds.labels;
    out.images = Tensor({n, 1, h, w});
    const float* src = ds.images.data();
    float* dst = out.images.data();
    for (int64_t i = 0; i < n; ++i) {
        const float* r = src + i * 3 * sp;
        const float* g = r + sp;
        const float* b = g + sp;
        float* o = dst + i * sp;
        for (int64_t k = 0; k < sp; ++k) o[k] = 0.299f * r[k] + 0.587f * g[k] + 0.114f * b[k];
    }
    return out;
}

DataStats compute_stats(const Dataset& train) {
    if (train.split != Split::Train)
        throw InputError("compute_stats: statistics must come from the train split");
    const Tensor& x = train.images;
    const int64_t n = x.extent(0);
    const int64_t c = x.rank() >= 2 ? x.extent(1) : 1;
    const int64_t sp = x.size() / (n * c);
    DataStats s{Tensor({c}), Tensor({c})};
    for (int64_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const float* p = x.data() + (i * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k) acc += p[k];
        }
        const double m = acc / static_cast<double>(n * sp);
        double v = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const float* p = x.data() + (i * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k) v += (p[k] - m) * (p[k] - m);
        }
        s.mean[ch] = static_cast<float>(m);
        s.stdev[ch] = static_cast<float>(std::sqrt(v / static_cast<double>(n * sp)));
    }
    return s;
}

namespace {
// guarded divisor; keeps constant channels finite
inline float stat_div(float stdev) { return stdev + 1e-8f; }
} // namespace

Dataset normalize(const Dataset& ds, const DataStats& stats) {
    const Tensor& x = ds.images;
    const int64_t n = x.extent(0);
    const int64_t c = x.extent(1);
    const int64_t sp = x.size() / (n * c);
    Dataset out;
    out.split = ds.split;
    out.classes = ds.classes;
    out.labels = ds.labels;
    out.images = Tensor(x.shape());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const float* p = x.data() + (i * c + ch) * sp;
            float* o = out.images.data() + (i * c + ch) * sp;
            const float m = stats.mean[ch], d = stat_div(stats.stdev[ch]);
            for (int64_t k = 0; k < sp; ++k) o[k] = (p[k] - m) / d;
        }
    out.stats = stats;
    return out;
}

Dataset denormalize(const Dataset& ds, const DataStats& stats) {
    const Tensor& x = ds.images;
    const int64_t n = x.extent(0);
    const int64_t c = x.extent(1);
    const int64_t sp = x.size() / (n * c);
    Dataset out;
    out.split = ds.split;
    out.classes = ds.classes;
    out.labels = ds.labels;
    out.images = Tensor(x.shape());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const float* p = x.data() + (i * c + ch) * sp;
            float* o = out.images.data() + (i * c + ch) * sp;
            const float m = stats.mean[ch], d = stat_div(stats.stdev[ch]);
            for (int64_t k = 0; k < sp; ++k) o[k] = p[k] * d + m;
        }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

Dataset synthetic_blobs(int nClasses, int nPerClass, int64_t dim, double spread, uint64_t seed,
                        double centerDistance) {
    if (nClasses < 1 || nPerClass < 1 || dim < 1) throw InputError("synthetic_blobs: bad sizes");
    const int64_t n = static_cast<int64_t>(nClasses) * nPerClass;
    Dataset ds;
    ds.classes = nClasses;
    ds.images = Tensor({n, dim});
    ds.labels.resize(static_cast<size_t>(n));
    Rng rng(mix64(seed) ^ 0xb10b5ULL);
    const double axis = centerDistance / std::sqrt(2.0);
    int64_t row = 0;
    for (int k = 0; k < nClasses; ++k) {
        const int64_t centerAxis = k % dim;
        for (int i = 0; i < nPerClass; ++i, ++row) {
            float* p = ds.images.data() + row * dim;
            for (int64_t d = 0; d < dim; ++d)
                p[d] = static_cast<float>((d == centerAxis ? axis : 0.0) + spread * rng.normal());
            ds.labels[static_cast<size_t>(row)] = k;
        }
    }
    return ds;
}

namespace {

// Smooth random field: a few low-frequency cosine waves per channel.
void fill_field(Rng& rng, float* img, int64_t channels, double amplitude) {
    for (int64_t ch = 0; ch < channels; ++ch) {
        const double base = 0.35 + 0.3 * rng.uniform();
        float* plane = img + ch * 32 * 32;
        double fx[3], fy[3], ph[3], am[3];
        for (int j = 0; j < 3; ++j) {
            fx[j] = 1.0 + rng.below(4);
            fy[j] = 1.0 + rng.below(4);
            ph[j] = rng.uniform(0, 6.2831853);
            am[j] = amplitude * (0.4 + 0.6 * rng.uniform());
        }
        for (int64_t y = 0; y < 32; ++y)
            for (int64_t x = 0; x < 32; ++x) {
                double v = base;
                for (int j = 0; j < 3; ++j)
                    v += am[j] * std::cos(2.0 * M_PI * (fx[j] * x + fy[j] * y) / 32.0 + ph[j]);
                plane[y * 32 + x] = static_cast<float>(v);
            }
    }
}

void shifted_add(float* dst, const float* src, int64_t dy, int64_t dx, double w) {
    for (int64_t ch = 0; ch < 3; ++ch)
        for (int64_t y = 0; y < 32; ++y)
            for (int64_t x = 0; x < 32; ++x) {
                const int64_t sy = (y + dy + 32) % 32;
                const int64_t sx = (x + dx + 32) % 32;
                dst[(ch * 32 + y) * 32 + x] +=
                    static_cast<float>(w * src[(ch * 32 + sy) * 32 + sx]);
            }
}

} // namespace

Dataset synthetic_images(const SynthImageOptions& opts) {
    const int64_t n = static_cast<int64_t>(opts.classes) * opts.perClass;
    Dataset ds;
    ds.classes = opts.classes;
    ds.split = opts.split;
    ds.images = Tensor({n, 3, 32, 32});
    ds.labels.resize(static_cast<size_t>(n));

    // templates depend only on the seed, so both splits share them
    std::vector<Tensor> templates;
    for (int k = 0; k < opts.classes; ++k) {
        Rng trng(mix64(opts.seed) ^ mix64(0x7e00 + static_cast<uint64_t>(k)));
        Tensor t({3, 32, 32});
        fill_field(trng, t.data(), 3, 0.22);
        templates.push_back(std::move(t));
    }
    const int nDistract = 8;
    std::vector<Tensor> distractors;
    for (int m = 0; m < nDistract; ++m) {
        Rng drng(mix64(opts.seed) ^ mix64(0xd150 + static_cast<uint64_t>(m)));
        Tensor t({3, 32, 32});
        fill_field(drng, t.data(), 3, 0.3);
        for (int64_t i = 0; i < t.size(); ++i) t[i] -= 0.5f; // zero-ish mean nuisance
        distractors.push_back(std::move(t));
    }

    Rng rng(mix64(opts.seed) ^ (opts.split == Split::Train ? 0x7121a11ULL : 0x7e57ULL));
    int64_t row = 0;
    for (int k = 0; k < opts.classes; ++k) {
        for (int64_t i = 0; i < opts.perClass; ++i, ++row) {
            float* img = ds.images.data() + row * 3 * 32 * 32;
            std::fill(img, img + 3 * 32 * 32, 0.f);
            const int64_t dy = static_cast<int64_t>(rng.below(2 * opts.maxShift + 1)) - opts.maxShift;
            const int64_t dx = static_cast<int64_t>(rng.below(2 * opts.maxShift + 1)) - opts.maxShift;
            const double contrast = 1.0 + opts.contrastJitter * rng.uniform(-1, 1);
            shifted_add(img, templates[static_cast<size_t>(k)].data(), dy, dx, contrast);
            const auto m = rng.below(nDistract);
            const int64_t ddy = static_cast<int64_t>(rng.below(9)) - 4;
            const int64_t ddx = static_cast<int64_t>(rng.below(9)) - 4;
            shifted_add(img, distractors[static_cast<size_t>(m)].data(), ddy, ddx,
                        opts.distractor * rng.uniform());
            for (int64_t p = 0; p < 3 * 32 * 32; ++p) {
                const double v = img[p] + opts.noise * rng.normal();
                img[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
            ds.labels[static_cast<size_t>(row)] = k;
        }
    }
    return ds;
}

Dataset take_per_class(const Dataset& ds, int64_t perClass) {
    std::vector<int64_t> keep;
    std::vector<int64_t> counts(static_cast<size_t>(ds.classes), 0);
    for (int64_t i = 0; i < ds.size(); ++i) {
        auto& c = counts[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])];
        if (c < perClass) {
            ++c;
            keep.push_back(i);
        }
    }
    Dataset out;
    out.split = ds.split;
    out.classes = ds.classes;
    out.stats = ds.stats;
    Shape s = ds.images.shape();
    s[0] = static_cast<int64_t>(keep.size());
    out.images = Tensor(s);
    out.labels.resize(keep.size());
    const int64_t rowLen = ds.images.size() / ds.size();
    for (size_t i = 0; i < keep.size(); ++i) {
        std::copy(ds.images.data() + keep[i] * rowLen, ds.images.data() + (keep[i] + 1) * rowLen,
                  out.images.data() + static_cast<int64_t>(i) * rowLen);
        out.labels[i] = ds.labels[static_cast<size_t>(keep[i])];
    }
    return out;
}

// ---------------------------------------------------------------------------
// shuffling and batching
// ---------------------------------------------------------------------------

std::vector<int64_t> shuffle_epoch(int64_t n, uint64_t globalSeed, int64_t epoch) {
    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    const uint64_t key = mix64(globalSeed) ^ mix64(0x5f0f + static_cast<uint64_t>(epoch));
    uint64_t ctr = 0;
    for (int64_t i = n - 1; i > 0; --i) {
        const uint64_t bound = static_cast<uint64_t>(i) + 1;
        const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % bound);
        uint64_t v;
        do {
            v = counter_hash(key, ctr++);
        } while (v >= limit);
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(v % bound)]);
    }
    return perm;
}

Tensor flip_width(const Tensor& images) {
    if (images.rank() != 4)
        throw DimensionError("flip_width: expects rank-4, got " + shape_str(images.shape()));
    Tensor out(images.shape());
    const int64_t n = images.extent(0), c = images.extent(1), h = images.extent(2),
                  w = images.extent(3);
    for (int64_t i = 0; i < n * c * h; ++i) {
        const float* src = images.data() + i * w;
        float* dst = out.data() + i * w;
        for (int64_t x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
    }
    return out;
}

BatchStream::BatchStream(const Dataset& ds, int64_t batchSize, bool dropLast, bool flip,
                         bool shuffled, uint64_t seed)
    : ds_(&ds), k_(batchSize), dropLast_(dropLast), flip_(flip), shuffled_(shuffled), seed_(seed) {
    if (k_ < 1) throw InputError("batch size must be >= 1");
    if (flip_ && ds.images.rank() != 4) throw InputError("flip augmentation needs image data");
    start_epoch(0);
}

void BatchStream::start_epoch(int64_t epoch) {
    epoch_ = epoch;
    pos_ = 0;
    batchIndex_ = 0;
    if (shuffled_) {
        perm_ = shuffle_epoch(ds_->size(), seed_, epoch);
    } else {
        perm_.resize(static_cast<size_t>(ds_->size()));
        std::iota(perm_.begin(), perm_.end(), 0);
    }
}

int64_t BatchStream::batches_per_epoch() const {
    const int64_t n = ds_->size();
    return dropLast_ ? n / k_ : (n + k_ - 1) / k_;
}

std::optional<Batch> BatchStream::next() {
    const int64_t n = ds_->size();
    if (pos_ >= n) return std::nullopt;
    int64_t take = std::min(k_, n - pos_);
    if (dropLast_ && take < k_) return std::nullopt;

    const int64_t rowLen = ds_->images.size() / n;
    Shape s = ds_->images.shape();
    s[0] = take;
    Batch b;
    b.x = Tensor(s);
    b.y.resize(static_cast<size_t>(take));
    b.index = batchIndex_++;
    const uint64_t flipKey = mix64(seed_ ^ 0xf11bULL);
    for (int64_t i = 0; i < take; ++i) {
        const int64_t src = perm_[static_cast<size_t>(pos_ + i)];
        std::copy(ds_->images.data() + src * rowLen, ds_->images.data() + (src + 1) * rowLen,
                  b.x.data() + i * rowLen);
        b.y[static_cast<size_t>(i)] = ds_->labels[static_cast<size_t>(src)];
        if (flip_ && (counter_hash(flipKey, static_cast<uint64_t>(epoch_ * n + src)) & 1)) {
            // flip this sample in place
            const int64_t c = b.x.extent(1), h = b.x.extent(2), w = b.x.extent(3);
            float* row = b.x.data() + i * rowLen;
            for (int64_t pl = 0; pl < c * h; ++pl) {
                float* line = row + pl * w;
                for (int64_t x = 0; x < w / 2; ++x) std::swap(line[x], line[w - 1 - x]);
            }
        }
    }
    pos_ += take;
    return b;
}

} // namespace lwat
