#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lobdif/tensor.hpp"

namespace lobdif::num {

/// Ordered collection of named tensors. Order is insertion order and is the
/// order used for checkpoints and optimizer state.
class ParamSet {
public:
    Tensor& add(std::string name, Tensor value);

    [[nodiscard]] std::size_t size() const noexcept { return tensors_.size(); }
    [[nodiscard]] const std::string& name(std::size_t i) const { return names_.at(i); }
    [[nodiscard]] Tensor& operator[](std::size_t i) { return tensors_.at(i); }
    [[nodiscard]] const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
    [[nodiscard]] Tensor& get(const std::string& name);
    [[nodiscard]] const Tensor& get(const std::string& name) const;
    [[nodiscard]] bool contains(const std::string& name) const noexcept;
    [[nodiscard]] std::size_t index_of(const std::string& name) const;
    [[nodiscard]] std::size_t scalar_count() const noexcept;

    /// Same names and shapes, zero-filled.
    [[nodiscard]] ParamSet zeros_like() const;
    void set_zero();
    [[nodiscard]] bool all_finite() const noexcept;
    /// Elementwise this += scale * other.
    void axpy(double scale, const ParamSet& other);

    [[nodiscard]] std::vector<Tensor*> pointers();
    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::vector<std::string> names_;
    // Graphs keep pointers into this storage; adding tensors after binding invalidates them.
    std::vector<Tensor> tensors_;
};

/// Adaptive-moment optimizer state (bias-corrected first/second moments).
struct AdamState {
    double lr = 2.0e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    ParamSet m;
    ParamSet v;

    static AdamState for_params(const ParamSet& params, double lr);
};

/// One update: increments the step counter, then applies
/// p -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state);

} // namespace lobdif::num
