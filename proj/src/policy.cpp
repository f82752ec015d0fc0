#include "rmps/policy.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <sstream>

namespace rmps {

namespace {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0.0) a += two_pi;
  return a - std::numbers::pi;
}

class GreedyHolonomic final : public Policy {
 public:
  GreedyHolonomic(std::shared_ptr<const ParticleBase> m, GreedyGoalGains g) : model_(std::move(m)), g_(g) {}
  std::string name() const override { return "greedy-goal"; }
  ControlVec act(const StateVec& x) override {
    const StateVec to_goal = model_->goal() - x.head(2);
    const double dist = to_goal.norm();
    const double speed = std::min(g_.cruise_speed, g_.approach_gain * dist);
    StateVec v_des = StateVec::Zero(2);
    if (dist > 1e-12) v_des = to_goal / dist * speed;
    const StateVec a = g_.speed_gain * (v_des - x.segment(2, 2));
    return model_->clamp_control(ControlVec(a));
  }

 private:
  std::shared_ptr<const ParticleBase> model_;
  GreedyGoalGains g_;
};

class GreedyNonholonomic final : public Policy {
 public:
  GreedyNonholonomic(std::shared_ptr<const ParticleBase> m, GreedyGoalGains g) : model_(std::move(m)), g_(g) {}
  std::string name() const override { return "greedy-goal"; }
  ControlVec act(const StateVec& x) override {
    const StateVec to_goal = model_->goal() - x.head(2);
    const double dist = to_goal.norm();
    ControlVec u = ControlVec::Zero(2);
    if (dist > 1e-12) {
      const double err = wrap_angle(std::atan2(to_goal[1], to_goal[0]) - x[3]);
      const double speed = std::min(g_.cruise_speed, g_.approach_gain * dist) * std::max(0.0, std::cos(err));
      u[0] = g_.speed_gain * (speed - x[2]);
      u[1] = g_.heading_gain * err;
    } else {
      u[0] = -g_.speed_gain * x[2];
    }
    return model_->clamp_control(u);
  }

 private:
  std::shared_ptr<const ParticleBase> model_;
  GreedyGoalGains g_;
};

class AggressiveCartPole final : public Policy {
 public:
  AggressiveCartPole(std::shared_ptr<const CartPole> m, CartPoleGains g) : model_(std::move(m)), g_(g) {}
  std::string name() const override { return "aggressive-cartpole"; }
  ControlVec act(const StateVec& x) override {
    ControlVec u(1);
    const double offset = x[0] - model_->params().x_target;
    if (std::abs(offset) > g_.bang_distance) {
      u[0] = offset < 0.0 ? model_->control_bounds().hi()[0] : model_->control_bounds().lo()[0];
    } else {
      u[0] = g_.position * offset + g_.velocity * x[1] + g_.angle * x[2] + g_.angular_velocity * x[3];
    }
    return model_->clamp_control(u);
  }

 private:
  std::shared_ptr<const CartPole> model_;
  CartPoleGains g_;
};

class ConstantPolicy final : public Policy {
 public:
  ConstantPolicy(std::shared_ptr<const DynamicsModel> m, ControlVec u) : u_(m->clamp_control(u)) {}
  std::string name() const override { return "constant"; }
  ControlVec act(const StateVec&) override { return u_; }

 private:
  ControlVec u_;
};

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Vec>
Vec decode_line(const std::string& line, char tag, int dim) {
  std::istringstream is(line);
  std::string head;
  if (!(is >> head) || head.size() != 1 || head[0] != tag) {
    throw PolicyFault(std::string("protocol: expected '") + tag + "' line, got: " + line);
  }
  Vec v(dim);
  for (int i = 0; i < dim; ++i) {
    std::string tok;
    if (!(is >> tok)) throw PolicyFault("protocol: too few values in: " + line);
    char* end = nullptr;
    errno = 0;
    const double d = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(d)) {
      throw PolicyFault("protocol: bad number '" + tok + "'");
    }
    v[i] = d;
  }
  std::string extra;
  if (is >> extra) throw PolicyFault("protocol: too many values in: " + line);
  return v;
}

class ExternalPolicy final : public Policy {
 public:
  ExternalPolicy(std::shared_ptr<const DynamicsModel> model, std::vector<std::string> argv,
                 std::chrono::milliseconds timeout)
      : model_(std::move(model)), timeout_(timeout) {
    if (argv.empty()) throw std::invalid_argument("external_policy: empty command");
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw PolicyFault("external_policy: pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw PolicyFault("external_policy: fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      std::vector<char*> args;
      for (auto& a : argv) args.push_back(a.data());
      args.push_back(nullptr);
      execvp(args[0], args.data());
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }

  ~ExternalPolicy() override {
    if (write_fd_ >= 0) close(write_fd_);
    if (read_fd_ >= 0) close(read_fd_);
    if (pid_ > 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, nullptr, 0);
    }
  }

  std::string name() const override { return "external"; }

  ControlVec act(const StateVec& x) override {
    const std::string out = encode_state_line(x) + "\n";
    std::size_t sent = 0;
    while (sent < out.size()) {
      const ssize_t n = write(write_fd_, out.data() + sent, out.size() - sent);
      if (n <= 0) throw PolicyFault("external policy: write failed");
      sent += static_cast<std::size_t>(n);
    }
    const std::string line = read_line();
    const ControlVec u = decode_action_line(line, model_->control_dim());
    return model_->clamp_control(u);
  }

 private:
  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw PolicyFault("external policy: timeout");
      pollfd pfd{read_fd_, POLLIN, 0};
      const int r = poll(&pfd, 1, static_cast<int>(left.count()));
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) throw PolicyFault("external policy: timeout");
      char buf[512];
      const ssize_t n = read(read_fd_, buf, sizeof buf);
      if (n <= 0) throw PolicyFault("external policy: process closed its output");
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }

  std::shared_ptr<const DynamicsModel> model_;
  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
};

}  // namespace

std::unique_ptr<Policy> greedy_goal_policy(std::shared_ptr<const ParticleBase> model, GreedyGoalGains gains) {
  if (std::dynamic_pointer_cast<const NonholonomicParticle>(model)) {
    return std::make_unique<GreedyNonholonomic>(std::move(model), gains);
  }
  return std::make_unique<GreedyHolonomic>(std::move(model), gains);
}

std::unique_ptr<Policy> aggressive_cartpole_policy(std::shared_ptr<const CartPole> model, CartPoleGains gains) {
  return std::make_unique<AggressiveCartPole>(std::move(model), gains);
}

std::unique_ptr<Policy> constant_policy(std::shared_ptr<const DynamicsModel> model, ControlVec u) {
  return std::make_unique<ConstantPolicy>(std::move(model), std::move(u));
}

std::string encode_state_line(const StateVec& x) {
  std::string s = "S";
  for (Eigen::Index i = 0; i < x.size(); ++i) s += " " + format_number(x[i]);
  return s;
}

std::string encode_action_line(const ControlVec& u) {
  std::string s = "A";
  for (Eigen::Index i = 0; i < u.size(); ++i) s += " " + format_number(u[i]);
  return s;
}

ControlVec decode_action_line(const std::string& line, int control_dim) {
  return decode_line<ControlVec>(line, 'A', control_dim);
}

StateVec decode_state_line(const std::string& line, int state_dim) {
  return decode_line<StateVec>(line, 'S', state_dim);
}

std::unique_ptr<Policy> external_policy(std::shared_ptr<const DynamicsModel> model, std::vector<std::string> argv,
                                        std::chrono::milliseconds timeout) {
  return std::make_unique<ExternalPolicy>(std::move(model), std::move(argv), timeout);
}

}  // namespace rmps
