#include "lobdif/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lobdif::num {

Tensor& ParamSet::add(std::string name, Tensor value) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
    return tensors_.back();
}

bool ParamSet::contains(const std::string& name) const noexcept {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t ParamSet::index_of(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return static_cast<std::size_t>(it - names_.begin());
}

Tensor& ParamSet::get(const std::string& name) { return tensors_[index_of(name)]; }
const Tensor& ParamSet::get(const std::string& name) const { return tensors_[index_of(name)]; }

std::size_t ParamSet::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const Tensor& t : tensors_) n += t.size();
    return n;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], Tensor(tensors_[i].shape()));
    return out;
}

void ParamSet::set_zero() {
    for (Tensor& t : tensors_) t.fill(0.0);
}

bool ParamSet::all_finite() const noexcept {
    return std::all_of(tensors_.begin(), tensors_.end(), [](const Tensor& t) { return t.all_finite(); });
}

void ParamSet::axpy(double scale, const ParamSet& other) {
    if (other.size() != size()) throw std::invalid_argument("ParamSet::axpy: size mismatch");
    for (std::size_t k = 0; k < size(); ++k) {
        Tensor& dst = tensors_[k];
        const Tensor& src = other.tensors_[k];
        if (dst.shape() != src.shape()) {
            throw std::invalid_argument("ParamSet::axpy: shape mismatch for '" + names_[k] + "'");
        }
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
    }
}

std::vector<Tensor*> ParamSet::pointers() {
    std::vector<Tensor*> out;
    out.reserve(tensors_.size());
    for (Tensor& t : tensors_) out.push_back(&t);
    return out;
}

AdamState AdamState::for_params(const ParamSet& params, double lr) {
    AdamState s;
    s.lr = lr;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].shape() != params[k].shape() || state.m[k].shape() != params[k].shape() ||
            state.v[k].shape() != params[k].shape()) {
            throw std::invalid_argument("adam_step: shape mismatch for '" + params.name(k) + "'");
        }
    }
    ++state.step;
    const double step = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, step);
    const double correction2 = 1.0 - std::pow(state.beta2, step);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = params[k];
        const Tensor& g = grads[k];
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

} // namespace lobdif::num
