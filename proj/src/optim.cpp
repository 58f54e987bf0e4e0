#include "nofas/optim.hpp"

#include <cmath>

namespace nofas::ad {

double exp_decay_lr(double lr0, double gamma, long t) {
    if (lr0 <= 0.0) throw Error("scheduler: lr0 must be positive");
    if (gamma <= 0.0 || gamma > 1.0) throw Error("scheduler: gamma must be in (0, 1]");
    return lr0 * std::pow(gamma, static_cast<double>(t));
}

void rmsprop_step(std::vector<Tensor>& params, const GradientMap& grads,
                  std::vector<std::vector<double>>& state, double lr, double rho, double eps) {
    if (lr <= 0.0) throw Error("rmsprop: lr must be positive");
    if (rho <= 0.0 || rho >= 1.0) throw Error("rmsprop: rho must be in (0, 1)");
    if (eps <= 0.0) throw Error("rmsprop: eps must be positive");
    if (state.size() != params.size()) state.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& param = params[p];
        if (!grads.contains(param))
            throw Error("rmsprop: missing gradient for parameter " + std::to_string(p));
        const Tensor& g = grads.at(param);
        auto& sq = state[p];
        if (sq.size() != param.size()) sq.assign(param.size(), 0.0);
        auto pv = param.mutable_data();
        auto gv = g.data();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            sq[i] = rho * sq[i] + (1.0 - rho) * gv[i] * gv[i];
            pv[i] -= lr * gv[i] / std::sqrt(sq[i] + eps);
        }
    }
}

RmspropOptimizer::RmspropOptimizer(std::vector<Tensor> params, double lr0, double gamma,
                                   double rho, double eps)
    : params_(std::move(params)), lr0_(lr0), gamma_(gamma), rho_(rho), eps_(eps) {}

void RmspropOptimizer::step(const GradientMap& grads) {
    rmsprop_step(params_, grads, state_, current_lr(), rho_, eps_);
    ++step_;
}

void RmspropOptimizer::reset_schedule() {
    step_ = 0;
    state_.clear();
}

}  // namespace nofas::ad
