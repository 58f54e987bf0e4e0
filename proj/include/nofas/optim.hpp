#ifndef NOFAS_OPTIM_HPP
#define NOFAS_OPTIM_HPP

#include <vector>

#include "nofas/tensor.hpp"

namespace nofas::ad {

/// lr0 * gamma^t
double exp_decay_lr(double lr0, double gamma, long t);

/// One RMSprop update over a parameter list. `state` holds the running
/// second moment per parameter, zero-initialized on first use.
/// state <- rho*state + (1-rho)*g^2;  param <- param - lr*g/sqrt(state+eps)
void rmsprop_step(std::vector<Tensor>& params, const GradientMap& grads,
                  std::vector<std::vector<double>>& state, double lr, double rho, double eps);

/// Convenience wrapper tying parameters, RMSprop state and the exponential
/// schedule together. reset_schedule() restarts the decay (and moments).
class RmspropOptimizer {
public:
    RmspropOptimizer(std::vector<Tensor> params, double lr0, double gamma, double rho = 0.9,
                     double eps = 1e-8);

    double current_lr() const { return exp_decay_lr(lr0_, gamma_, step_); }
    void step(const GradientMap& grads);
    void reset_schedule();
    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> state_;
    double lr0_, gamma_, rho_, eps_;
    long step_ = 0;
};

}  // namespace nofas::ad

#endif
