#include "vmfd/correspondence.hpp"

#include <cmath>

namespace vmfd {

void CameraModel::validate() const {
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("CameraModel: image dimensions must be positive");
    if (intrinsics(0, 0) <= 0.0 || intrinsics(1, 1) <= 0.0)
        throw std::invalid_argument("CameraModel: focal entries must be positive");
    if (std::abs(intrinsics(2, 2) - 1.0) > 1e-12)
        throw std::invalid_argument("CameraModel: intrinsics(2,2) must be 1");
    const Eigen::Matrix3d rot = extrinsics.topLeftCorner<3, 3>();
    if ((rot * rot.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw std::invalid_argument("CameraModel: extrinsics rotation is not orthonormal");
    if (rot.determinant() < 0.0)
        throw std::invalid_argument("CameraModel: extrinsics rotation must have det +1");
    const Eigen::RowVector4d bottom = extrinsics.row(3);
    if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("CameraModel: extrinsics bottom row must be (0,0,0,1)");
}

double sensor_distance(const Eigen::Vector3d& point) { return point.norm(); }

std::vector<PointPixelPair> project_points(const Mat& points,
                                           const CameraModel& camera,
                                           const LabelImage& labels_image) {
    if (points.cols() != 3)
        throw std::invalid_argument("project_points: points must be N x 3");
    if (labels_image.height != camera.height || labels_image.width != camera.width)
        throw std::invalid_argument("project_points: label image does not match camera");
    camera.validate();

    const Eigen::Matrix3d rot = camera.extrinsics.topLeftCorner<3, 3>();
    const Eigen::Vector3d trans = camera.extrinsics.topRightCorner<3, 1>();
    const double fx = camera.intrinsics(0, 0);
    const double fy = camera.intrinsics(1, 1);
    const double cx = camera.intrinsics(0, 2);
    const double cy = camera.intrinsics(1, 2);

    std::vector<PointPixelPair> pairs;
    pairs.reserve(points.rows());
    for (int i = 0; i < points.rows(); ++i) {
        const Eigen::Vector3d p = points.row(i).transpose();
        const Eigen::Vector3d pc = rot * p + trans;
        if (pc.z() <= 0.0) continue;
        const long u = std::lround(fx * pc.x() / pc.z() + cx);
        const long v = std::lround(fy * pc.y() / pc.z() + cy);
        if (u < 0 || u >= camera.width || v < 0 || v >= camera.height) continue;
        PointPixelPair pair;
        pair.point_index = i;
        pair.u = static_cast<int>(u);
        pair.v = static_cast<int>(v);
        pair.weak_label = labels_image.at(pair.v, pair.u);
        pair.distance = sensor_distance(p);
        pairs.push_back(pair);
    }
    return pairs;
}

}  // namespace vmfd
