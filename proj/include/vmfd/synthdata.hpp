// Deterministic synthetic scenes: imbalanced classes laid out as interleaved
// azimuth sectors, range-decaying point density, pinhole cameras, per-pixel
// descriptors and noisy weak labels.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmfd/common.hpp"
#include "vmfd/correspondence.hpp"

namespace vmfd {

struct SceneConfig {
    int num_points = 4096;
    int num_classes = 6;
    std::vector<double> class_frequencies;  // defaults applied when empty
    // Decaying radial profile: truncated exponential on [range_min, range_max].
    double range_min = 3.0;
    double range_max = 50.0;
    double range_decay = 12.0;
    double label_noise_rate = 0.10;
    double descriptor_noise = 0.6;
    uint64_t seed = 1;

    int image_height = 64;
    int image_width = 96;
    int num_cameras = 2;
    int pixel_descriptor_dim = 8;
    // Each class owns this many disjoint azimuth sectors, interleaved so
    // class identity is a fine-grained function of direction.
    int sectors_per_class = 3;

    void validate() const;
    std::vector<double> effective_frequencies() const;
};

// Row-major H x W x depth descriptor image.
struct DescriptorImage {
    int height = 0;
    int width = 0;
    int depth = 0;
    std::vector<double> data;

    DescriptorImage() = default;
    DescriptorImage(int h, int w, int d)
        : height(h), width(w), depth(d), data(size_t(h) * w * d, 0.0) {}
    double* at(int v, int u) { return data.data() + (size_t(v) * width + u) * depth; }
    const double* at(int v, int u) const {
        return data.data() + (size_t(v) * width + u) * depth;
    }
};

// One camera together with what it sees.
struct CameraView {
    CameraModel camera;
    DescriptorImage pixel_descriptors;
    LabelImage weak_labels;
};

struct Scene {
    Mat points;             // N x 3, LiDAR frame, meters
    Mat point_descriptors;  // N x 6: scaled coordinates + local class signal
    std::vector<int32_t> true_labels;
    std::vector<CameraView> views;

    int num_points() const { return static_cast<int>(points.rows()); }
};

Scene generate_scene(const SceneConfig& config);

// Versioned little-endian binary round trip. The stored hash ties the file
// back to the manifest of the run that produced it.
void save_scene(const std::string& path, const Scene& scene, uint64_t config_hash);
Scene load_scene(const std::string& path, uint64_t* config_hash = nullptr);

// Point-pixel pairs over all views; a point visible in several cameras is
// assigned to the first camera that sees it. Ordered by point_index.
std::vector<PointPixelPair> build_pairs(const Scene& scene);

}  // namespace vmfd
