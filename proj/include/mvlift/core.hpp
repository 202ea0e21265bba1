#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvlift/common.hpp"

namespace mvlift {

// Motion tensors are stored frame-major: one row per frame, coordinates of
// joint j in columns [C*j, C*j+C). Screen convention is x right, y up in
// [-1, 1]; world convention is Y-up, meters.

struct Skeleton {
    Index joint_count = 0;
    Index root_index = 0;
    std::vector<std::string> joint_names;
    double fps = 0.0;

    void validate() const {
        detail::require(joint_count >= 2, "Skeleton: joint_count must be >= 2");
        detail::require(root_index >= 0 && root_index < joint_count,
                        "Skeleton: root_index out of range");
        detail::require(fps > 0.0, "Skeleton: fps must be positive");
        detail::require(joint_names.empty() ||
                            static_cast<Index>(joint_names.size()) == joint_count,
                        "Skeleton: joint_names size mismatch");
    }

    Index find_joint(const std::string& name) const {
        for (Index j = 0; j < static_cast<Index>(joint_names.size()); ++j)
            if (joint_names[static_cast<std::size_t>(j)] == name) return j;
        return -1;
    }
};

struct Motion2D {
    MatrixXd pts;  // N x 2J
    std::optional<MatrixXd> confidence;  // N x J, values in [0, 1]

    Index frames() const { return pts.rows(); }
    Index joints() const { return pts.cols() / 2; }
    Vec2 at(Index f, Index j) const { return pts.block<1, 2>(f, 2 * j).transpose(); }
    void set(Index f, Index j, const Vec2& p) { pts.block<1, 2>(f, 2 * j) = p.transpose(); }
};

struct LocalMotion2D {
    MatrixXd offsets;  // N x 2(J-1), root-relative, root joint excluded

    Index frames() const { return offsets.rows(); }
    Index joints() const { return offsets.cols() / 2; }  // = J-1
    Vec2 at(Index f, Index k) const { return offsets.block<1, 2>(f, 2 * k).transpose(); }
};

struct RootTrack2D {
    MatrixXd positions;   // N x 2
    MatrixXd velocities;  // N x 2, units per second, repeat-last convention

    Index frames() const { return positions.rows(); }
};

struct Motion3D {
    MatrixXd pts;  // N x 3J
    double fps = 0.0;

    Index frames() const { return pts.rows(); }
    Index joints() const { return pts.cols() / 3; }
    Vec3 at(Index f, Index j) const { return pts.block<1, 3>(f, 3 * j).transpose(); }
    void set(Index f, Index j, const Vec3& p) { pts.block<1, 3>(f, 3 * j) = p.transpose(); }
};

struct LocalMotion3D {
    MatrixXd offsets;  // N x 3(J-1)

    Index frames() const { return offsets.rows(); }
    Index joints() const { return offsets.cols() / 3; }
    Vec3 at(Index f, Index k) const { return offsets.block<1, 3>(f, 3 * k).transpose(); }
};

struct Trajectory3D {
    MatrixXd positions;   // N x 3
    MatrixXd velocities;  // N x 3, m/s, repeat-last convention
    double dt = 0.0;      // 1/fps

    Index frames() const { return positions.rows(); }
};

/// Sequence-level bounding-box normalization: out = (in - center) * scale.
struct BBoxNorm {
    Vec2 center = Vec2::Zero();
    double scale = 1.0;  // 1 / max half-extent

    Vec2 apply(const Vec2& p) const { return (p - center) * scale; }
    Vec2 invert(const Vec2& p) const { return p / scale + center; }
};

namespace detail {

// v[f] = (p[f+1] - p[f]) * fps for f < N-1, v[N-1] = v[N-2].
inline MatrixXd finite_diff_velocity(const MatrixXd& positions, double fps) {
    const Index n = positions.rows();
    require(n >= 2, "velocity: need at least 2 frames");
    MatrixXd v(n, positions.cols());
    v.topRows(n - 1) = (positions.bottomRows(n - 1) - positions.topRows(n - 1)) * fps;
    v.row(n - 1) = v.row(n - 2);
    return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Root / local decomposition
// ---------------------------------------------------------------------------

inline std::pair<RootTrack2D, LocalMotion2D> decompose_2d(const Motion2D& m,
                                                          const Skeleton& skel) {
    skel.validate();
    detail::require(m.joints() == skel.joint_count, "decompose_2d: joint count mismatch");
    detail::require(m.frames() >= 2, "decompose_2d: need at least 2 frames");
    const Index n = m.frames();
    const Index j = skel.joint_count;

    RootTrack2D root;
    root.positions = m.pts.middleCols(2 * skel.root_index, 2);
    root.velocities = detail::finite_diff_velocity(root.positions, skel.fps);

    LocalMotion2D local;
    local.offsets.resize(n, 2 * (j - 1));
    Index k = 0;
    for (Index jj = 0; jj < j; ++jj) {
        if (jj == skel.root_index) continue;
        local.offsets.middleCols(2 * k, 2) =
            m.pts.middleCols(2 * jj, 2) - root.positions;
        ++k;
    }
    return {std::move(root), std::move(local)};
}

inline Motion2D recompose_2d(const RootTrack2D& root, const LocalMotion2D& local,
                             const Skeleton& skel) {
    skel.validate();
    detail::require(root.frames() == local.frames(), "recompose_2d: frame count mismatch");
    detail::require(local.joints() == skel.joint_count - 1,
                    "recompose_2d: joint count mismatch");
    const Index n = root.frames();
    const Index j = skel.joint_count;

    Motion2D m;
    m.pts.resize(n, 2 * j);
    m.pts.middleCols(2 * skel.root_index, 2) = root.positions;
    Index k = 0;
    for (Index jj = 0; jj < j; ++jj) {
        if (jj == skel.root_index) continue;
        m.pts.middleCols(2 * jj, 2) =
            root.positions + local.offsets.middleCols(2 * k, 2);
        ++k;
    }
    return m;
}

struct Decomposed3D {
    Trajectory3D trajectory;
    LocalMotion3D local;
};

inline Decomposed3D decompose_3d(const Motion3D& m, const Skeleton& skel) {
    skel.validate();
    detail::require(m.joints() == skel.joint_count, "decompose_3d: joint count mismatch");
    detail::require(m.frames() >= 2, "decompose_3d: need at least 2 frames");
    const Index n = m.frames();
    const Index j = skel.joint_count;

    Decomposed3D out;
    out.trajectory.positions = m.pts.middleCols(3 * skel.root_index, 3);
    out.trajectory.velocities =
        detail::finite_diff_velocity(out.trajectory.positions, m.fps);
    out.trajectory.dt = 1.0 / m.fps;

    out.local.offsets.resize(n, 3 * (j - 1));
    Index k = 0;
    for (Index jj = 0; jj < j; ++jj) {
        if (jj == skel.root_index) continue;
        out.local.offsets.middleCols(3 * k, 3) =
            m.pts.middleCols(3 * jj, 3) - out.trajectory.positions;
        ++k;
    }
    return out;
}

/// Inverse of decompose_3d: root positions are re-accumulated from the first
/// position and the per-frame velocities, then offsets are added back.
inline Motion3D recompose_3d(const Trajectory3D& traj, const LocalMotion3D& local,
                             const Skeleton& skel) {
    skel.validate();
    detail::require(traj.frames() == local.frames(), "recompose_3d: frame count mismatch");
    detail::require(local.joints() == skel.joint_count - 1,
                    "recompose_3d: joint count mismatch");
    const Index n = traj.frames();
    const Index j = skel.joint_count;

    MatrixXd root(n, 3);
    root.row(0) = traj.positions.row(0);
    for (Index f = 0; f + 1 < n; ++f)
        root.row(f + 1) = root.row(f) + traj.velocities.row(f) * traj.dt;

    Motion3D m;
    m.fps = 1.0 / traj.dt;
    m.pts.resize(n, 3 * j);
    m.pts.middleCols(3 * skel.root_index, 3) = root;
    Index k = 0;
    for (Index jj = 0; jj < j; ++jj) {
        if (jj == skel.root_index) continue;
        m.pts.middleCols(3 * jj, 3) = root + local.offsets.middleCols(3 * k, 3);
        ++k;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Bounding-box normalization (sequence-level box over all frames and joints)
// ---------------------------------------------------------------------------

inline std::pair<Motion2D, BBoxNorm> normalize_bbox(const Motion2D& m) {
    detail::require(m.frames() >= 1, "normalize_bbox: empty motion");
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    bool any = false;
    for (Index f = 0; f < m.frames(); ++f) {
        for (Index j = 0; j < m.joints(); ++j) {
            const Vec2 p = m.at(f, j);
            if (!std::isfinite(p.x()) || !std::isfinite(p.y())) continue;
            any = true;
            xmin = std::min(xmin, p.x());
            xmax = std::max(xmax, p.x());
            ymin = std::min(ymin, p.y());
            ymax = std::max(ymax, p.y());
        }
    }
    detail::require(any, "normalize_bbox: no finite points");

    BBoxNorm norm;
    norm.center = Vec2(0.5 * (xmin + xmax), 0.5 * (ymin + ymax));
    // Max half-extent measured from the actual centered coordinates so the
    // extreme point divides to exactly +-1.
    double half = 0.0;
    for (Index f = 0; f < m.frames(); ++f) {
        for (Index j = 0; j < m.joints(); ++j) {
            const Vec2 p = m.at(f, j) - norm.center;
            if (!std::isfinite(p.x()) || !std::isfinite(p.y())) continue;
            half = std::max({half, std::abs(p.x()), std::abs(p.y())});
        }
    }
    detail::require(half > 0.0, "normalize_bbox: degenerate bounding box");
    norm.scale = 1.0 / half;

    Motion2D out;
    out.confidence = m.confidence;
    out.pts = m.pts;
    for (Index f = 0; f < m.frames(); ++f)
        for (Index j = 0; j < m.joints(); ++j)
            out.set(f, j, (m.at(f, j) - norm.center) / half);
    return {std::move(out), norm};
}

inline Motion2D denormalize_bbox(const Motion2D& m, const BBoxNorm& norm) {
    Motion2D out;
    out.confidence = m.confidence;
    out.pts.resizeLike(m.pts);
    for (Index f = 0; f < m.frames(); ++f)
        for (Index j = 0; j < m.joints(); ++j) out.set(f, j, norm.invert(m.at(f, j)));
    return out;
}

}  // namespace mvlift
