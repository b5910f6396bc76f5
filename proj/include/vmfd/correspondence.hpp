// Pinhole geometry: pairing LiDAR points with image pixels and their weak
// semantic labels.

#pragma once

#include <cstdint>
#include <vector>

#include "vmfd/common.hpp"

namespace vmfd {

// Row-major H x W integer image of class labels.
struct LabelImage {
    int height = 0;
    int width = 0;
    std::vector<int32_t> data;

    LabelImage() = default;
    LabelImage(int h, int w) : height(h), width(w), data(size_t(h) * w, 0) {}
    int32_t& at(int v, int u) { return data[size_t(v) * width + u]; }
    int32_t at(int v, int u) const { return data[size_t(v) * width + u]; }
};

struct CameraModel {
    Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
    Eigen::Matrix4d extrinsics = Eigen::Matrix4d::Identity();  // LiDAR -> camera
    int width = 0;
    int height = 0;

    // Throws if the intrinsics are not a pinhole matrix or the extrinsics
    // rotation block is not a proper rotation.
    void validate() const;
};

struct PointPixelPair {
    int point_index = 0;
    int u = 0;
    int v = 0;
    int weak_label = 0;
    double distance = 0.0;  // Euclidean distance from the sensor, meters
    int camera_index = 0;   // which view produced the pair in multi-view scenes
};

double sensor_distance(const Eigen::Vector3d& point);

// Projects N x 3 LiDAR-frame points through the camera; keeps points with
// positive depth that round to an in-bounds pixel. Output is ordered by
// point_index and tagged with the pixel's weak label.
std::vector<PointPixelPair> project_points(const Mat& points,
                                           const CameraModel& camera,
                                           const LabelImage& labels_image);

}  // namespace vmfd
