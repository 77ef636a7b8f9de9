#pragma once

// Bundled planning problems: the four plants used in the examples with
// analogous target waveforms (the plants and parameters are fixed; the
// waveforms are ours since none are tabulated).

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "nuvlevel/ikie.hpp"
#include "nuvlevel/levels.hpp"
#include "nuvlevel/statespace.hpp"

namespace nuvlevel {

/// Everything a planning run needs.
struct Problem {
  std::string description;
  Lssm model;
  TargetSpec target;
  LevelSpec levels;
  IkieConfig config;
  /// Window length for receding-horizon runs; 0 means a single full plan.
  std::size_t horizon = 0;
};

namespace scenarios {

/// Third-order low-pass from the digital-to-analog conversion example.
inline Lssm dac_plant() {
  MatrixXd a(3, 3);
  a << 0.7967, -6.3978, -94.2123,
       0.0027, 0.9902, -0.1467,
       0.0, 0.0030, 0.9999;
  MatrixXd b(3, 1);
  b << 0.0027, 0.0, 0.0;
  MatrixXd c(1, 3);
  c << 0.0, 0.0, 35037.9;
  return Lssm(a, b, c);
}

/// State reached after holding a constant input forever: (I - A)^{-1} (B u + drift).
inline VectorXd steady_state(const Lssm& model, double u) {
  const MatrixXd I = MatrixXd::Identity(model.states(), model.states());
  return (I - model.A).partialPivLu().solve(model.B.col(0) * u + model.drift);
}

/// Sinusoid  offset + amplitude sin(2 pi k / period), k = 1..K.
inline MatrixXd sinusoid(Eigen::Index steps, double offset, double amplitude, double period,
                         double phase = 0.0) {
  MatrixXd y(steps, 1);
  for (Eigen::Index k = 0; k < steps; ++k) {
    y(k, 0) = offset + amplitude * std::sin(2.0 * std::numbers::pi *
                                                static_cast<double>(k + 1) / period +
                                            phase);
  }
  return y;
}

/// K = 450, s^2 = 0.045, levels {0, 1}. First half: an in-band sinusoid
/// (period 150 steps); second half: a sinusoid far above the filter's pass
/// band (period 20). The plant starts at the steady state of u = 1/2.
inline Problem dac(Eigen::Index steps = 450, double s_sq = 0.045) {
  Lssm plant = dac_plant();
  const VectorXd x0 = steady_state(plant, 0.5);
  Lssm model(plant.A, plant.B, plant.C, plant.drift, x0);
  MatrixXd y(steps, 1);
  const Eigen::Index half = steps / 2;
  y.topRows(half) = sinusoid(half, 0.45, 0.3, 150.0);
  y.bottomRows(steps - half) = sinusoid(steps - half, 0.45, 0.3, 20.0);
  Problem p{"digital-to-analog conversion through a 3rd-order low-pass",
            std::move(model), TargetSpec::uniform(std::move(y), s_sq),
            LevelSpec::binary(0.0, 1.0), IkieConfig{}, 0};
  p.config.max_iters = 1000;
  return p;
}

/// In-band variant used for tracking comparisons: a sinusoid with the
/// given period, phase and amplitude around 0.45 for the whole horizon.
inline Problem dac_inband(Eigen::Index steps, double s_sq, double period, double amplitude,
                          double phase = 0.0) {
  Lssm plant = dac_plant();
  const VectorXd x0 = steady_state(plant, 0.5);
  Lssm model(plant.A, plant.B, plant.C, plant.drift, x0);
  return Problem{"in-band sinusoid through the 3rd-order low-pass", std::move(model),
                 TargetSpec::uniform(sinusoid(steps, 0.45, amplitude, period, phase), s_sq),
                 LevelSpec::binary(0.0, 1.0), IkieConfig{}, 0};
}

inline constexpr double kFlappyMass = 0.5;
inline constexpr double kFlappyPeriod = 0.1;
inline constexpr double kFlappyGravity = 0.25;

/// Point mass with state (height, vertical speed), falling with g and
/// receiving an upward momentum kick 1 whenever u_k = 1.
inline Lssm flappy_plant(double m = kFlappyMass, double T = kFlappyPeriod,
                         double g = kFlappyGravity) {
  MatrixXd a(2, 2);
  a << 1.0, T, 0.0, 1.0;
  MatrixXd b(2, 1);
  b << 0.0, 1.0 / m;
  MatrixXd c(1, 2);
  c << 1.0, 0.0;
  VectorXd drift(2);
  drift << 0.0, -T * g;
  return Lssm(a, b, c, drift);
}

/// K = 250, s^2 = 0.1, checkpoints at k = 60, 120, 180, 240 (weight 1,
/// every other step weight 0). The heights are those reached with kicks at
/// k = 36 and 57: the bird climbs, then glides down.
inline Problem flappy() {
  const Eigen::Index steps = 250;
  MatrixXd y = MatrixXd::Zero(steps, 1);
  VectorXd w = VectorXd::Zero(steps);
  const int checkpoints[] = {60, 120, 180, 240};
  const double heights[] = {0.975, 11.55, 13.125, 5.7};
  for (int i = 0; i < 4; ++i) {
    y(checkpoints[i] - 1, 0) = heights[i];
    w(checkpoints[i] - 1) = 1.0;
  }
  return Problem{"flappy bird: pass near four checkpoints", flappy_plant(),
                 TargetSpec::uniform(std::move(y), 0.1, std::move(w)),
                 LevelSpec::binary(0.0, 1.0), IkieConfig{}, 0};
}

/// Electric motor coil current: an integrator driven by a 3-level voltage.
inline Lssm motor_plant() {
  return Lssm(MatrixXd::Constant(1, 1, 1.0), MatrixXd::Constant(1, 1, 0.1),
              MatrixXd::Constant(1, 1, 1.0));
}

struct MotorSetting {
  double s_sq;
  double switching_s_sq;
};

/// The three (s^2, switching s^2) pairs of the sparse-switching example.
inline constexpr MotorSetting kMotorSettings[] = {{4.0, 10.0}, {1.0, 100.0}, {0.01, 10000.0}};

inline Problem motor(const MotorSetting& setting) {
  const Eigen::Index steps = 300;
  IkieConfig config;
  config.max_iters = 1000;
  config.switching_s_sq = setting.switching_s_sq;
  return Problem{"sparse level switching for a motor current",
                 motor_plant(),
                 TargetSpec::uniform(sinusoid(steps, 0.0, 2.0, 150.0), setting.s_sq),
                 LevelSpec::equidistant(-1.0, 1.0, 3), config, 0};
}

/// First-order plant of the M-level example.
inline Lssm integrator_plant() {
  return Lssm(MatrixXd::Constant(1, 1, 0.98), MatrixXd::Constant(1, 1, 0.05),
              MatrixXd::Constant(1, 1, 1.0));
}

/// K = 200, s^2 = 0.015, 7 equidistant levels -3..3. The target is a slow
/// swing over most of the reachable range with a faster ripple on top.
inline Problem mlevel() {
  const Eigen::Index steps = 200;
  MatrixXd y(steps, 1);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k + 1);
    y(k, 0) = 4.0 * std::sin(2.0 * std::numbers::pi * t / 200.0) +
              0.5 * std::sin(2.0 * std::numbers::pi * t / 40.0);
  }
  IkieConfig config;
  config.max_iters = 1000;
  return Problem{"7-level control of a leaky integrator", integrator_plant(),
                 TargetSpec::uniform(std::move(y), 0.015), LevelSpec::equidistant(-3.0, 3.0, 7),
                 config, 0};
}

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> n{"dac", "flappy", "motor", "mlevel"};
  return n;
}

}  // namespace scenarios
}  // namespace nuvlevel
