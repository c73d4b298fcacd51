#ifndef LWAT_DATA_HPP
#define LWAT_DATA_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lwat/tensor.hpp"

namespace lwat {

enum class Split { Train, Test };

struct DataStats {
    Tensor mean; // per channel
    Tensor stdev;
};

struct Dataset {
    Tensor images;           // [N x C x H x W] or [N x d]
    std::vector<int> labels; // in [0, classes)
    Split split = Split::Train;
    int classes = 10;
    std::optional<DataStats> stats; // present once normalized

    int64_t size() const { return images.extent(0); }
};

// CIFAR-10 binary: records of 3073 bytes (label byte, then 1024 R / 1024 G /
// 1024 B row-major), pixels scaled to [0,1]. When requireFullFiles is set,
// every file must hold exactly 10000 records (the published layout).
Dataset load_cifar10_binary(const std::vector<std::string>& paths, Split split,
                            bool requireFullFiles = false);

// CIFAR-100 binary: 3074-byte records (coarse byte, fine byte, pixels);
// fine labels are used.
Dataset load_cifar100_binary(const std::vector<std::string>& paths, Split split,
                             bool requireFullFiles = false);

// ITU-R BT.601 luminance, C: 3 -> 1.
Dataset to_grayscale(const Dataset& ds);

// Per-channel statistics; only meaningful (and only permitted) on the
// train split.
DataStats compute_stats(const Dataset& train);

Dataset normalize(const Dataset& ds, const DataStats& stats);
Dataset denormalize(const Dataset& ds, const DataStats& stats);

// Axis-aligned Gaussian clusters: class k centers on
// (centerDistance/sqrt(2)) * e_{k mod dim}, so distinct centers sit exactly
// centerDistance apart. Linearly separable (w.h.p.) for
// spread <= centerDistance / 8.
Dataset synthetic_blobs(int nClasses, int nPerClass, int64_t dim, double spread, uint64_t seed,
                        double centerDistance = 4.0);

// Procedural CIFAR-shaped image set: per-class smooth templates plus shared
// distractor fields, translation/contrast jitter and pixel noise. The seed
// fixes the class templates; train and test splits draw disjoint samples.
struct SynthImageOptions {
    int classes = 10;
    int64_t perClass = 500;
    uint64_t seed = 0;
    Split split = Split::Train;
    double noise = 0.22;
    double distractor = 0.45;
    int64_t maxShift = 3;
    double contrastJitter = 0.25;
};
Dataset synthetic_images(const SynthImageOptions& opts);

// Balanced head of a dataset: up to perClass samples of each class, in the
// original order.
Dataset take_per_class(const Dataset& ds, int64_t perClass);

// Fisher-Yates permutation of [0,n) from a counter-based stream keyed by
// (globalSeed, epoch): the order never depends on other RNG consumers.
std::vector<int64_t> shuffle_epoch(int64_t n, uint64_t globalSeed, int64_t epoch);

// Horizontal flip of the width axis (rank-4 only).
Tensor flip_width(const Tensor& images);

struct Batch {
    Tensor x;
    std::vector<int> y;
    int64_t index = 0; // batch ordinal within the epoch
};

// Iterates a dataset in permuted batches. With dropLast every yielded batch
// has extent exactly k. Flip decisions are per (epoch, sample) from the
// counter stream.
class BatchStream {
public:
    BatchStream(const Dataset& ds, int64_t batchSize, bool dropLast, bool flip, bool shuffled,
                uint64_t seed);

    void start_epoch(int64_t epoch);
    std::optional<Batch> next();
    int64_t batches_per_epoch() const;
    int64_t batch_size() const { return k_; }

private:
    const Dataset* ds_;
    int64_t k_;
    bool dropLast_;
    bool flip_;
    bool shuffled_;
    uint64_t seed_;
    int64_t epoch_ = 0;
    int64_t pos_ = 0;
    int64_t batchIndex_ = 0;
    std::vector<int64_t> perm_;
};

} // namespace lwat

#endif // LWAT_DATA_HPP
