#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <utility>
#include <vector>

#include "mvlift/camera.hpp"
#include "mvlift/lifting.hpp"
#include "mvlift/rng.hpp"

namespace mvlift {

// ---------------------------------------------------------------------------
// Sample tensors. The sampler and the forward process are generic over any
// type made of dense blocks; visit_blocks enumerates them in a fixed order.
// ---------------------------------------------------------------------------

template <typename F>
void visit_blocks(MatrixXd& s, F&& f) {
    f(s);
}
template <typename F>
void visit_blocks(const MatrixXd& s, F&& f) {
    f(s);
}
template <typename F>
void visit_blocks(MultiView2DMotion& s, F&& f) {
    for (auto& m : s.local) f(m);
    for (auto& m : s.root_vel) f(m);
}
template <typename F>
void visit_blocks(const MultiView2DMotion& s, F&& f) {
    for (const auto& m : s.local) f(m);
    for (const auto& m : s.root_vel) f(m);
}

template <typename S>
S zeros_like(const S& ref) {
    S out = ref;
    visit_blocks(out, [](MatrixXd& m) { m.setZero(); });
    return out;
}

template <typename S>
S noise_like(Rng& rng, const S& ref) {
    S out = ref;
    visit_blocks(out, [&](MatrixXd& m) { fill_normal(rng, m); });
    return out;
}

template <typename S>
bool all_finite(const S& s) {
    bool ok = true;
    visit_blocks(s, [&](const MatrixXd& m) { ok = ok && m.allFinite(); });
    return ok;
}

/// out = a*x + b*y, elementwise over every block.
template <typename S>
S lincomb(double a, const S& x, double b, const S& y) {
    S out = x;
    std::vector<const MatrixXd*> yblocks;
    visit_blocks(y, [&](const MatrixXd& m) { yblocks.push_back(&m); });
    std::size_t i = 0;
    visit_blocks(out, [&](MatrixXd& m) {
        m = a * m + b * (*yblocks[i]);
        ++i;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Noise schedule
// ---------------------------------------------------------------------------

/// Cosine ^alpha-bar schedule with offset s = 0.008 and per-step beta clipped
/// at 0.999; alpha_bar has length T+1 with alpha_bar[0] = 1.
struct NoiseSchedule {
    int steps = 0;        // T
    VectorXd alpha_bar;   // T+1
    VectorXd beta;        // T+1; beta[0] unused

    double alpha(int t) const { return 1.0 - beta(t); }

    void validate() const {
        detail::require(steps >= 1 && alpha_bar.size() == steps + 1,
                        "NoiseSchedule: bad size");
        detail::require(alpha_bar(0) == 1.0, "NoiseSchedule: alpha_bar[0] != 1");
        for (int t = 1; t <= steps; ++t)
            detail::require(alpha_bar(t) < alpha_bar(t - 1) && alpha_bar(t) > 0.0,
                            "NoiseSchedule: alpha_bar not strictly decreasing");
    }
};

inline NoiseSchedule make_schedule(int steps) {
    detail::require(steps >= 1, "make_schedule: T must be >= 1");
    const double s = 0.008;
    auto f = [&](double u) {
        const double c = std::cos((u + s) / (1.0 + s) * M_PI / 2.0);
        return c * c;
    };
    NoiseSchedule sched;
    sched.steps = steps;
    sched.alpha_bar.resize(steps + 1);
    sched.beta.resize(steps + 1);
    sched.alpha_bar(0) = 1.0;
    sched.beta(0) = 0.0;
    const double f0 = f(0.0);
    double prev_raw = 1.0;
    for (int t = 1; t <= steps; ++t) {
        const double raw = f(static_cast<double>(t) / steps) / f0;
        const double beta = std::min(1.0 - raw / prev_raw, 0.999);
        sched.beta(t) = beta;
        sched.alpha_bar(t) = sched.alpha_bar(t - 1) * (1.0 - beta);
        prev_raw = raw;
    }
    sched.validate();
    return sched;
}

/// Forward process: x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
template <typename S>
S q_sample(const S& x0, int t, const S& eps, const NoiseSchedule& sched) {
    detail::require(t >= 0 && t <= sched.steps, "q_sample: t out of range");
    const double ab = sched.alpha_bar(t);
    return lincomb(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

// ---------------------------------------------------------------------------
// Ancestral sampling with clean-sample (x0-hat) parameterization
// ---------------------------------------------------------------------------

template <typename S>
struct SampleHooks {
    /// Adjustment applied to the guided x0-hat each step (consistency block).
    std::function<void(S&, int)> adjust_x0;
    /// Diagnostic observer, called after adjust_x0.
    std::function<void(int, const S&)> observe_x0;
};

/// Runs the reverse process from pure noise. `denoise_cond` / `denoise_uncond`
/// predict the clean sample under the conditional / empty-text conditioning;
/// classifier-free guidance combines them as u + s*(c - u). With s == 1 the
/// unconditional branch is skipped entirely, so the trajectory is bitwise
/// identical to conditional-only denoising.
template <typename S, typename DenoiseC, typename DenoiseU>
S sample_loop(DenoiseC&& denoise_cond, DenoiseU&& denoise_uncond,
              const NoiseSchedule& sched, double guidance_scale, Rng& rng,
              const S& shape_ref, const SampleHooks<S>& hooks = {}) {
    sched.validate();
    detail::require(guidance_scale >= 0.0, "sample_loop: guidance scale must be >= 0");

    S x = noise_like(rng, shape_ref);
    for (int t = sched.steps; t >= 1; --t) {
        S x0 = denoise_cond(x, t);
        if (guidance_scale != 1.0) {
            const S x0_uncond = denoise_uncond(x, t);
            x0 = lincomb(1.0, x0_uncond, guidance_scale, lincomb(1.0, x0, -1.0, x0_uncond));
        }
        if (!all_finite(x0)) {
            std::ostringstream msg;
            msg << "sample_loop: non-finite denoiser output at t=" << t;
            throw std::runtime_error(msg.str());
        }
        if (hooks.adjust_x0) hooks.adjust_x0(x0, t);
        if (hooks.observe_x0) hooks.observe_x0(t, x0);

        // Posterior mean with x0-hat parameterization:
        //   mu = sqrt(ab_{t-1}) b_t / (1-ab_t) * x0
        //      + sqrt(a_t) (1-ab_{t-1}) / (1-ab_t) * x_t,  var = b~_t
        const double ab_t = sched.alpha_bar(t);
        const double ab_prev = sched.alpha_bar(t - 1);
        const double beta_t = sched.beta(t);
        const double c0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
        const double ct = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab_t);
        x = lincomb(c0, x0, ct, x);
        if (t > 1) {
            const double post_var = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t;
            const S noise = noise_like(rng, shape_ref);
            x = lincomb(1.0, x, std::sqrt(post_var), noise);
        }
    }
    return x;
}

/// Consistency-block hook for multi-view sampling: triangulates the
/// intermediate prediction and reprojects it whenever t lies in
/// [t_lo, t_hi]. Matching the paper's ablation, the default range covers
/// every step.
inline SampleHooks<MultiView2DMotion> consistency_hooks(const CameraRig& rig, int t_lo,
                                                        int t_hi) {
    SampleHooks<MultiView2DMotion> hooks;
    hooks.adjust_x0 = [rig, t_lo, t_hi](MultiView2DMotion& x0, int t) {
        if (t >= t_lo && t <= t_hi) x0 = consistency_project(rig, x0);
    };
    return hooks;
}

}  // namespace mvlift
