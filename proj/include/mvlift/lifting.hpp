#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "mvlift/camera.hpp"
#include "mvlift/core.hpp"

namespace mvlift {

struct TriangulationResult {
    Vec3 point = Vec3::Zero();
    double residual_rmse = 0.0;
};

namespace detail {

// Weighted stacked system: rows sqrt(w_v) * Pi_v, rhs sqrt(w_v) * obs_v.
// Solved by SVD; the rig is degenerate when the smallest singular value of
// the stack falls below 1e-10.
inline TriangulationResult triangulate_stacked(
    const CameraRig& rig, const Eigen::Matrix<double, Eigen::Dynamic, 2>& obs,
    const VectorXd* weights) {
    const Index v_count = rig.views();
    require(obs.rows() == v_count, "triangulate_point: observation count mismatch");
    double weight_sum = 0.0;
    if (weights != nullptr) {
        require(weights->size() == v_count, "triangulate_point: weight count mismatch");
        for (Index v = 0; v < v_count; ++v) {
            require((*weights)(v) >= 0.0, "triangulate_point: negative weight");
            weight_sum += (*weights)(v);
        }
        require(weight_sum > 0.0, "triangulate_point: all weights zero");
    } else {
        weight_sum = static_cast<double>(v_count);
    }

    Eigen::Matrix<double, Eigen::Dynamic, 3> a(2 * v_count, 3);
    VectorXd b(2 * v_count);
    for (Index v = 0; v < v_count; ++v) {
        const double sw = weights ? std::sqrt((*weights)(v)) : 1.0;
        a.middleRows<2>(2 * v) = sw * rig.cameras[static_cast<std::size_t>(v)].projection();
        b.segment<2>(2 * v) = sw * obs.row(v).transpose();
    }

    Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 3>> svd(
        a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.singularValues()(2) < 1e-10)
        throw DegenerateRigError("triangulate_point: camera stack has rank < 3");

    TriangulationResult out;
    out.point = svd.solve(b);
    out.residual_rmse = std::sqrt((a * out.point - b).squaredNorm() / weight_sum);
    return out;
}

}  // namespace detail

/// Least-squares triangulation of one point from per-view 2D observations:
/// argmin_X sum_v w_v ||Pi_v X - obs_v||^2. Throws DegenerateRigError when
/// the views do not constrain all three coordinates (e.g. a single camera).
inline TriangulationResult triangulate_point(
    const CameraRig& rig, const Eigen::Matrix<double, Eigen::Dynamic, 2>& obs,
    const std::optional<VectorXd>& weights = std::nullopt) {
    return detail::triangulate_stacked(rig, obs, weights ? &*weights : nullptr);
}

/// RMSE of a candidate 3D point against per-view observations:
/// sqrt(mean_v ||Pi_v X - obs_v||^2).
inline double reprojection_error(const CameraRig& rig, const Vec3& point,
                                 const Eigen::Matrix<double, Eigen::Dynamic, 2>& obs) {
    const Index v_count = rig.views();
    detail::require(v_count >= 1 && obs.rows() == v_count,
                    "reprojection_error: observation count mismatch");
    double acc = 0.0;
    for (Index v = 0; v < v_count; ++v) {
        const Vec2 r = rig.cameras[static_cast<std::size_t>(v)].project(point) -
                       obs.row(v).transpose();
        acc += r.squaredNorm();
    }
    return std::sqrt(acc / static_cast<double>(v_count));
}

struct LiftResult {
    LocalMotion3D local;      // N x 3(J-1)
    Trajectory3D trajectory;  // accumulated from the origin
    MatrixXd rmse;            // N x (J-1) per-joint triangulation residuals
};

/// Recovers 3D local motion and the global trajectory from multi-view 2D:
/// every (frame, joint) offset and every frame's root velocity is
/// triangulated, then the trajectory is accumulated from the origin via
/// x[f+1] = x[f] + v[f] * dt.
inline LiftResult lift_multiview(const CameraRig& rig, const MultiView2DMotion& mv,
                                 double fps) {
    mv.validate();
    detail::require(rig.views() == mv.views(), "lift_multiview: view count mismatch");
    detail::require(rig.views() >= 2, "lift_multiview: need at least 2 views");
    detail::require(fps > 0.0, "lift_multiview: fps must be positive");
    const Index n = mv.frames();
    const Index k_count = mv.joints();
    const Index v_count = mv.views();

    LiftResult out;
    out.local.offsets.resize(n, 3 * k_count);
    out.rmse.resize(n, k_count);
    Eigen::Matrix<double, Eigen::Dynamic, 2> obs(v_count, 2);
    for (Index f = 0; f < n; ++f) {
        for (Index k = 0; k < k_count; ++k) {
            for (Index v = 0; v < v_count; ++v)
                obs.row(v) = mv.local[static_cast<std::size_t>(v)].block<1, 2>(f, 2 * k);
            const TriangulationResult tri = detail::triangulate_stacked(rig, obs, nullptr);
            out.local.offsets.block<1, 3>(f, 3 * k) = tri.point.transpose();
            out.rmse(f, k) = tri.residual_rmse;
        }
    }

    out.trajectory.dt = 1.0 / fps;
    out.trajectory.velocities.resize(n, 3);
    for (Index f = 0; f < n; ++f) {
        for (Index v = 0; v < v_count; ++v)
            obs.row(v) = mv.root_vel[static_cast<std::size_t>(v)].row(f);
        out.trajectory.velocities.row(f) =
            detail::triangulate_stacked(rig, obs, nullptr).point.transpose();
    }
    out.trajectory.positions.resize(n, 3);
    out.trajectory.positions.row(0).setZero();
    for (Index f = 0; f + 1 < n; ++f) {
        out.trajectory.positions.row(f + 1) =
            out.trajectory.positions.row(f) +
            out.trajectory.velocities.row(f) * out.trajectory.dt;
    }
    return out;
}

/// Final 3D motion: trajectory plus local offsets (the root joint rides the
/// trajectory itself).
inline Motion3D compose_motion(const LiftResult& lift, const Skeleton& skel) {
    skel.validate();
    detail::require(lift.local.joints() == skel.joint_count - 1,
                    "compose_motion: joint count mismatch");
    const Index n = lift.trajectory.frames();
    Motion3D m;
    m.fps = 1.0 / lift.trajectory.dt;
    m.pts.resize(n, 3 * skel.joint_count);
    m.pts.middleCols(3 * skel.root_index, 3) = lift.trajectory.positions;
    Index k = 0;
    for (Index jj = 0; jj < skel.joint_count; ++jj) {
        if (jj == skel.root_index) continue;
        m.pts.middleCols(3 * jj, 3) =
            lift.trajectory.positions + lift.local.offsets.middleCols(3 * k, 3);
        ++k;
    }
    return m;
}

/// MAS-style consistency operator: triangulate every joint offset and root
/// velocity, then reproject into every view. The output is multi-view
/// consistent by construction and the operator is idempotent.
inline MultiView2DMotion consistency_project(const CameraRig& rig,
                                             const MultiView2DMotion& mv) {
    mv.validate();
    detail::require(rig.views() == mv.views(), "consistency_project: view count mismatch");
    detail::require(rig.views() >= 2, "consistency_project: need at least 2 views");
    const Index n = mv.frames();
    const Index k_count = mv.joints();
    const Index v_count = mv.views();

    MultiView2DMotion out;
    out.local.assign(static_cast<std::size_t>(v_count), MatrixXd(n, 2 * k_count));
    out.root_vel.assign(static_cast<std::size_t>(v_count), MatrixXd(n, 2));

    std::vector<Mat23> projections(static_cast<std::size_t>(v_count));
    for (Index v = 0; v < v_count; ++v)
        projections[static_cast<std::size_t>(v)] =
            rig.cameras[static_cast<std::size_t>(v)].projection();

    Eigen::Matrix<double, Eigen::Dynamic, 2> obs(v_count, 2);
    for (Index f = 0; f < n; ++f) {
        for (Index k = 0; k < k_count; ++k) {
            for (Index v = 0; v < v_count; ++v)
                obs.row(v) = mv.local[static_cast<std::size_t>(v)].block<1, 2>(f, 2 * k);
            const Vec3 x = detail::triangulate_stacked(rig, obs, nullptr).point;
            for (Index v = 0; v < v_count; ++v)
                out.local[static_cast<std::size_t>(v)].block<1, 2>(f, 2 * k) =
                    (projections[static_cast<std::size_t>(v)] * x).transpose();
        }
        for (Index v = 0; v < v_count; ++v)
            obs.row(v) = mv.root_vel[static_cast<std::size_t>(v)].row(f);
        const Vec3 rv = detail::triangulate_stacked(rig, obs, nullptr).point;
        for (Index v = 0; v < v_count; ++v)
            out.root_vel[static_cast<std::size_t>(v)].row(f) =
                (projections[static_cast<std::size_t>(v)] * rv).transpose();
    }
    return out;
}

}  // namespace mvlift
