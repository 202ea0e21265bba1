#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "mvlift/core.hpp"

namespace mvlift {

/// Orthographic camera on the horizontal ring, rotated about world Y by
/// `azimuth`. Projection keeps world Y as screen y and drops depth:
/// Pi(theta) = [[cos t, 0, -sin t], [0, 1, 0]].
struct OrthoCamera {
    double azimuth = 0.0;

    Mat23 projection() const {
        Mat23 p;
        const double c = std::cos(azimuth), s = std::sin(azimuth);
        p << c, 0.0, -s,
             0.0, 1.0, 0.0;
        return p;
    }

    Vec2 project(const Vec3& x) const { return projection() * x; }
};

struct CameraRig {
    std::vector<OrthoCamera> cameras;

    Index views() const { return static_cast<Index>(cameras.size()); }
};

/// V cameras at azimuths first_azimuth + v * 2*pi/V. The relative
/// arrangement is fixed; only the first view's azimuth varies per sample.
inline CameraRig make_rig(Index views, double first_azimuth) {
    detail::require(views >= 2, "make_rig: need at least 2 views");
    CameraRig rig;
    rig.cameras.resize(static_cast<std::size_t>(views));
    for (Index v = 0; v < views; ++v) {
        rig.cameras[static_cast<std::size_t>(v)].azimuth =
            first_azimuth + static_cast<double>(v) * (2.0 * M_PI / static_cast<double>(views));
    }
    return rig;
}

/// Unit quaternions (w, x, y, z) for the rotation of each view relative to
/// view 1, about world Y: row v = (cos(d/2), 0, sin(d/2), 0).
struct CameraEmbedding {
    MatrixXd quats;  // V x 4

    Index views() const { return quats.rows(); }
};

inline CameraEmbedding camera_embedding(const CameraRig& rig) {
    detail::require(rig.views() >= 1, "camera_embedding: empty rig");
    CameraEmbedding emb;
    emb.quats.resize(rig.views(), 4);
    const double base = rig.cameras[0].azimuth;
    for (Index v = 0; v < rig.views(); ++v) {
        const double half = 0.5 * (rig.cameras[static_cast<std::size_t>(v)].azimuth - base);
        emb.quats(v, 0) = std::cos(half);
        emb.quats(v, 1) = 0.0;
        emb.quats(v, 2) = std::sin(half);
        emb.quats(v, 3) = 0.0;
    }
    return emb;
}

/// Per-view root-relative 2D offsets plus per-view projected 2D root
/// velocities. Stored view-major: local[v] is N x 2(J-1), root_vel[v] is N x 2.
struct MultiView2DMotion {
    std::vector<MatrixXd> local;
    std::vector<MatrixXd> root_vel;

    Index views() const { return static_cast<Index>(local.size()); }
    Index frames() const { return local.empty() ? 0 : local[0].rows(); }
    Index joints() const { return local.empty() ? 0 : local[0].cols() / 2; }  // = J-1

    void validate() const {
        detail::require(!local.empty() && local.size() == root_vel.size(),
                        "MultiView2DMotion: view count mismatch");
        for (std::size_t v = 0; v < local.size(); ++v) {
            detail::require(local[v].rows() == frames() && local[v].cols() == local[0].cols(),
                            "MultiView2DMotion: inconsistent local shape");
            detail::require(root_vel[v].rows() == frames() && root_vel[v].cols() == 2,
                            "MultiView2DMotion: inconsistent root_vel shape");
        }
    }
};

/// Projects 3D motion into every view of a root-tracking rig. Each camera
/// follows the root, so the root projects to the screen center in every
/// frame; what remains per view is the projected local offsets and the
/// projected 3D root velocity.
inline MultiView2DMotion project_motion(const CameraRig& rig, const Motion3D& m,
                                        const Skeleton& skel) {
    detail::require(rig.views() >= 1, "project_motion: empty rig");
    const Decomposed3D dec = decompose_3d(m, skel);
    const Index n = m.frames();
    const Index k_count = skel.joint_count - 1;

    MultiView2DMotion mv;
    mv.local.resize(static_cast<std::size_t>(rig.views()));
    mv.root_vel.resize(static_cast<std::size_t>(rig.views()));
    for (Index v = 0; v < rig.views(); ++v) {
        const Mat23 pi = rig.cameras[static_cast<std::size_t>(v)].projection();
        MatrixXd local(n, 2 * k_count);
        MatrixXd rv(n, 2);
        for (Index f = 0; f < n; ++f) {
            for (Index k = 0; k < k_count; ++k)
                local.block<1, 2>(f, 2 * k) = (pi * dec.local.at(f, k)).transpose();
            rv.row(f) =
                (pi * Vec3(dec.trajectory.velocities.row(f).transpose())).transpose();
        }
        mv.local[static_cast<std::size_t>(v)] = std::move(local);
        mv.root_vel[static_cast<std::size_t>(v)] = std::move(rv);
    }
    return mv;
}

}  // namespace mvlift
