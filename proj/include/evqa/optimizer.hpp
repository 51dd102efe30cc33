#pragma once

// Adam with bias-corrected moments, decoupled weight decay with per-parameter
// exclusions, and a linear warmup / linear decay learning-rate schedule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "evqa/errors.hpp"
#include "evqa/tensor.hpp"

namespace evqa {

template <class T>
struct Param {
    std::string name;
    Tensor<T> tensor;
    bool decay = true;  // normalization weights and biases opt out
};

template <class T>
class ParamSet {
public:
    void add(std::string name, Tensor<T> t, bool decay) {
        params_.push_back({std::move(name), std::move(t), decay});
    }
    void append(const ParamSet& other) {
        for (const auto& p : other.params_) params_.push_back(p);
    }
    std::vector<Param<T>>& items() { return params_; }
    const std::vector<Param<T>>& items() const { return params_; }
    size_t count() const { return params_.size(); }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& p : params_) n += p.tensor.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

private:
    std::vector<Param<T>> params_;
};

template <class T>
struct AdamConfig {
    T lr = T(5e-5);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-6);
    T weight_decay = T(0.95);
    double warmup_fraction = 0.1;
    long total_steps = 1;
};

// Linear warmup from zero over the first warmup fraction of steps, then
// linear decay to zero. `step` is 0-based.
template <class T>
T scheduled_lr(const AdamConfig<T>& cfg, long step) {
    const long warmup = std::max<long>(0, long(cfg.warmup_fraction * double(cfg.total_steps)));
    if (step < warmup) return cfg.lr * T(step + 1) / T(warmup);
    if (cfg.total_steps <= warmup) return cfg.lr;
    const double remain = double(cfg.total_steps - step) / double(cfg.total_steps - warmup);
    return cfg.lr * T(std::max(0.0, remain));
}

template <class T>
class Adam {
public:
    Adam(AdamConfig<T> cfg, const ParamSet<T>& params) : cfg_(cfg) {
        for (const auto& p : params.items()) {
            moments_.push_back({std::vector<T>(p.tensor.size(), T(0)),
                                std::vector<T>(p.tensor.size(), T(0))});
        }
    }

    long step_count() const { return step_; }
    const AdamConfig<T>& config() const { return cfg_; }

    // One update over all parameters; gradients must have been populated by
    // at least one backward() since the last zero_grad().
    void step(ParamSet<T>& params) {
        if (params.count() != moments_.size())
            throw ContractError("adam: parameter set changed size");
        ++step_;
        const T lr_t = scheduled_lr(cfg_, step_ - 1);
        const T bc1 = T(1) - T(std::pow(double(cfg_.beta1), double(step_)));
        const T bc2 = T(1) - T(std::pow(double(cfg_.beta2), double(step_)));
        for (size_t pi = 0; pi < moments_.size(); ++pi) {
            auto& p = params.items()[pi];
            if (!p.tensor.has_grad())
                throw ContractError("adam: parameter '" + p.name +
                                    "' has no gradient; call backward() before step()");
            auto& vals = p.tensor.mutable_values();
            const auto& g = p.tensor.grad();
            auto& m = moments_[pi].m;
            auto& v = moments_[pi].v;
            const bool decay = p.decay && cfg_.weight_decay != T(0);
            for (size_t i = 0; i < vals.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (T(1) - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (T(1) - cfg_.beta2) * g[i] * g[i];
                T update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
                if (decay) update += cfg_.weight_decay * vals[i];
                vals[i] -= lr_t * update;
            }
        }
    }

private:
    struct Moments {
        std::vector<T> m, v;
    };
    AdamConfig<T> cfg_;
    std::vector<Moments> moments_;
    long step_ = 0;
};

}  // namespace evqa
