#pragma once

// DDPM arithmetic on latents: noise schedule, closed-form forward diffusion, the
// x0 estimator, the backward step and the view-weight ramp.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/grid.hpp"
#include "mvtex/vec.hpp"

namespace mvtex {

/// Inference schedule of T steps, indexed 1..T. Entry 0 is the convention
/// alpha_bar[0] = 1 used by the final step.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha;      // size T + 1, alpha[0] unused (1)
  std::vector<double> beta;       // 1 - alpha
  std::vector<double> alpha_bar;  // cumulative, alpha_bar[0] = 1
  std::vector<int> train_step;    // training timestep behind each inference step

  void check_step(int t) const
  {
    require(t >= 1 && t <= T, ErrorCode::out_of_range,
            "step " + std::to_string(t) + " outside 1.." + std::to_string(T));
  }
};

struct ScheduleParams {
  int training_steps = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
};

/// Cumulative products of the scaled-linear training ramp (betas linear in sqrt).
inline std::vector<double> training_alpha_bar(const ScheduleParams& p = {})
{
  std::vector<double> out(p.training_steps);
  const double a = std::sqrt(p.beta_start);
  const double b = std::sqrt(p.beta_end);
  double prod = 1.0;
  for (int i = 0; i < p.training_steps; ++i) {
    const double s = p.training_steps == 1 ? a : a + (b - a) * i / (p.training_steps - 1);
    prod *= 1.0 - s * s;
    out[i] = prod;
  }
  return out;
}

/// Subsamples the training ramp: step t uses training timestep round(t * N / T) - 1.
inline NoiseSchedule make_schedule(int T, const ScheduleParams& p = {})
{
  require(T >= 1 && T <= p.training_steps, ErrorCode::out_of_range,
          "step count " + std::to_string(T) + " outside 1.." + std::to_string(p.training_steps));
  const auto train = training_alpha_bar(p);
  NoiseSchedule s;
  s.T = T;
  s.alpha.assign(T + 1, 1.0);
  s.beta.assign(T + 1, 0.0);
  s.alpha_bar.assign(T + 1, 1.0);
  s.train_step.assign(T + 1, -1);
  for (int t = 1; t <= T; ++t) {
    const int k = static_cast<int>(std::lround(static_cast<double>(t) * p.training_steps / T)) - 1;
    s.train_step[t] = k;
    s.alpha_bar[t] = train[k];
    s.alpha[t] = s.alpha_bar[t] / s.alpha_bar[t - 1];
    s.beta[t] = 1.0 - s.alpha[t];
  }
  return s;
}

// Scalar kernels.

inline double forward_diffuse(double z0, double alpha_bar, double eps)
{
  return std::sqrt(alpha_bar) * z0 + std::sqrt(1.0 - alpha_bar) * eps;
}

inline double predict_x0(double zt, double eps_hat, double alpha_bar)
{
  return (zt - std::sqrt(1.0 - alpha_bar) * eps_hat) / std::sqrt(alpha_bar);
}

struct StepCoefficients {
  double x0;     // sqrt(abar_{t-1}) beta_t / (1 - abar_t)
  double outer;  // (1 - abar_{t-1}) / (1 - abar_t)
  double sqrt_alpha;
  double beta;
};

inline StepCoefficients step_coefficients(const NoiseSchedule& s, int t)
{
  s.check_step(t);
  const double ab = s.alpha_bar[t];
  const double ab_prev = s.alpha_bar[t - 1];
  return {std::sqrt(ab_prev) * s.beta[t] / (1.0 - ab), (1.0 - ab_prev) / (1.0 - ab), std::sqrt(s.alpha[t]),
          s.beta[t]};
}

/// z_{t-1} = c_x0 x0 + c_outer (sqrt(alpha_t) z_t + beta_t eps).
inline double ddpm_step(double x0_hat, double zt, double noise, const StepCoefficients& c)
{
  return c.x0 * x0_hat + c.outer * (c.sqrt_alpha * zt + c.beta * noise);
}

// Image forms, elementwise.

inline Image forward_diffuse(const Image& z0, int t, const Image& eps, const NoiseSchedule& s)
{
  s.check_step(t);
  require_same_shape(z0, eps, "forward_diffuse");
  Image out(z0.width(), z0.height(), z0.channels());
  for (std::size_t i = 0; i < z0.size(); ++i) {
    out.data()[i] = static_cast<float>(forward_diffuse(z0.data()[i], s.alpha_bar[t], eps.data()[i]));
  }
  return out;
}

inline Image predict_x0(const Image& zt, const Image& eps_hat, int t, const NoiseSchedule& s)
{
  s.check_step(t);
  require_same_shape(zt, eps_hat, "predict_x0");
  Image out(zt.width(), zt.height(), zt.channels());
  for (std::size_t i = 0; i < zt.size(); ++i) {
    out.data()[i] = static_cast<float>(predict_x0(zt.data()[i], eps_hat.data()[i], s.alpha_bar[t]));
  }
  return out;
}

inline Image ddpm_step(const Image& x0_hat, const Image& zt, int t, const Image& noise, const NoiseSchedule& s)
{
  const auto c = step_coefficients(s, t);
  require_same_shape(x0_hat, zt, "ddpm_step");
  require_same_shape(noise, zt, "ddpm_step");
  Image out(zt.width(), zt.height(), zt.channels());
  for (std::size_t i = 0; i < zt.size(); ++i) {
    out.data()[i] = static_cast<float>(ddpm_step(x0_hat.data()[i], zt.data()[i], noise.data()[i], c));
  }
  return out;
}

struct ViewWeightSchedule {
  int T = 25;
  double gamma = 8.0;
  double omega_min = 1e-3;
  int interp_steps = 8;  // omega reaches its final value after this many steps

  void validate() const
  {
    require(T >= 1, ErrorCode::parameter_domain, "view weight schedule needs T >= 1");
    require(gamma >= 0.0, ErrorCode::parameter_domain, "gamma must be non-negative");
    require(omega_min > 0.0 && omega_min <= 1.0, ErrorCode::parameter_domain, "omega_min must be in (0, 1]");
    require(interp_steps >= 0, ErrorCode::parameter_domain, "interp_steps must be non-negative");
  }
};

/// max(|cos theta|^gamma, omega_min), theta in degrees.
inline double final_view_weight(double theta_deg, double gamma, double omega_min)
{
  return std::max(std::pow(std::abs(std::cos(deg_to_rad(theta_deg))), gamma), omega_min);
}

/// 1 at t = T, linear in the number of completed steps down to the final weight at
/// t = T - interp_steps, constant after that. interp_steps = 0 means the final weight
/// throughout.
inline double view_weight(int t, double theta_deg, const ViewWeightSchedule& s)
{
  const double w_final = final_view_weight(theta_deg, s.gamma, s.omega_min);
  const int done = s.T - t;
  if (done >= s.interp_steps) {
    return w_final;
  }
  return 1.0 + (w_final - 1.0) * static_cast<double>(done) / s.interp_steps;
}

}  // namespace mvtex
