#pragma once

// Task policies: scripted goal-seeking stand-ins and an external process
// speaking a line protocol ("S x1 ... xn" out, "A u1 ... um" back).

#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmps/dynamics.hpp"

namespace rmps {

class PolicyFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  // Control for state x, already clamped to the model's bounds.
  virtual ControlVec act(const StateVec& x) = 0;
};

struct GreedyGoalGains {
  double cruise_speed = 1.0;
  double speed_gain = 2.0;
  double heading_gain = 3.0;
  double approach_gain = 1.0;  // speed target shrinks to approach_gain * distance near the goal
};

// Obstacle-blind navigation toward the model's goal; for either particle.
std::unique_ptr<Policy> greedy_goal_policy(std::shared_ptr<const ParticleBase> model, GreedyGoalGains gains = {});

// Gains in the stabilizing sign convention; the position and velocity gains
// are well above what the angle gains can absorb, so the pole overshoots.
struct CartPoleGains {
  double position = 5.0;
  double velocity = 6.0;
  double angle = 40.0;
  double angular_velocity = 10.0;
  double bang_distance = 2.0;  // full force toward x_target beyond this distance
};

// Fast drive toward x_target with too little pole compensation:
// u = clamp(kx (x - x_target) + kv v + ktheta theta + komega omega), and
// u = +-u_max toward the target while farther than bang_distance.
std::unique_ptr<Policy> aggressive_cartpole_policy(std::shared_ptr<const CartPole> model, CartPoleGains gains = {});

// Constant control (clamped); handy for tests and as a null policy.
std::unique_ptr<Policy> constant_policy(std::shared_ptr<const DynamicsModel> model, ControlVec u);

// Protocol helpers. Numbers are written with %.17g.
std::string encode_state_line(const StateVec& x);
std::string encode_action_line(const ControlVec& u);
// Parses "A u1 ... um"; throws PolicyFault on any deviation.
ControlVec decode_action_line(const std::string& line, int control_dim);
// Parses "S x1 ... xn"; throws PolicyFault on any deviation.
StateVec decode_state_line(const std::string& line, int state_dim);

// Spawns `argv` and exchanges one line pair per evaluation. Any protocol
// error, timeout or exit of the child raises PolicyFault.
std::unique_ptr<Policy> external_policy(std::shared_ptr<const DynamicsModel> model, std::vector<std::string> argv,
                                        std::chrono::milliseconds timeout = std::chrono::milliseconds(100));

}  // namespace rmps
