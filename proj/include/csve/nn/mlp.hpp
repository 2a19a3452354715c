#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csve/core/error.hpp"
#include "csve/core/random.hpp"

namespace csve::nn {

enum class Activation { relu, tanh };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw InputError("unknown activation '" + s + "'");
}

/// Multilayer perceptron with a hidden activation and an identity output layer.
///
/// All weights and biases live in one flat parameter vector, laid out layer by layer as
/// W_0 (column-major, out x in), b_0, W_1, b_1, ... Batched inputs are matrices whose columns
/// are samples.
class Mlp {
public:
    /// Cached intermediates of a batched forward pass.
    struct Tape {
        std::vector<Eigen::MatrixXd> inputs;  // input to each layer
        std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
    };

    Mlp() = default;

    Mlp(std::vector<std::size_t> layer_sizes, Activation activation)
        : sizes_(std::move(layer_sizes)), activation_(activation) {
        if (sizes_.size() < 2) throw InputError("Mlp: need at least input and output sizes");
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw InputError("Mlp: layer sizes must be positive");
            offsets_.push_back(total);
            total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
        }
        params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
    }

    /// Fan-in uniform initialization: limit sqrt(6/fan_in) for relu hidden layers, sqrt(3/fan_in)
    /// for tanh hidden layers and the output layer; output weights scaled by output_scale.
    Mlp(std::vector<std::size_t> layer_sizes, Activation activation, Rng& rng, double output_scale = 1.0)
        : Mlp(std::move(layer_sizes), activation) {
        for (std::size_t l = 0; l < num_layers(); ++l) {
            const bool last = l + 1 == num_layers();
            const double gain = (!last && activation_ == Activation::relu) ? 6.0 : 3.0;
            const double limit = std::sqrt(gain / static_cast<double>(sizes_[l])) * (last ? output_scale : 1.0);
            auto W = weight(l);
            for (Eigen::Index j = 0; j < W.cols(); ++j)
                for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = uniform(rng, -limit, limit);
        }
    }

    std::size_t num_layers() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
    Activation activation() const { return activation_; }
    std::size_t input_size() const { return sizes_.front(); }
    std::size_t output_size() const { return sizes_.back(); }
    std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }

    Eigen::Map<Eigen::MatrixXd> weight(std::size_t l) {
        return {params_.data() + offsets_[l], rows(l), cols(l)};
    }
    Eigen::Map<const Eigen::MatrixXd> weight(std::size_t l) const {
        return {params_.data() + offsets_[l], rows(l), cols(l)};
    }
    Eigen::Map<Eigen::VectorXd> bias(std::size_t l) { return {params_.data() + bias_offset(l), rows(l)}; }
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const { return {params_.data() + bias_offset(l), rows(l)}; }

    Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
        Eigen::MatrixXd X = x;
        return forward(X).col(0);
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const {
        check_input(X);
        Eigen::MatrixXd h = X;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Eigen::MatrixXd z = weight(l) * h;
            z.colwise() += bias(l);
            h = l + 1 == num_layers() ? std::move(z) : activate(z);
        }
        return h;
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& X, Tape& tape) const {
        check_input(X);
        tape.inputs.resize(num_layers());
        tape.pre.resize(num_layers());
        Eigen::MatrixXd h = X;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            tape.inputs[l] = h;
            Eigen::MatrixXd z = weight(l) * h;
            z.colwise() += bias(l);
            tape.pre[l] = z;
            h = l + 1 == num_layers() ? std::move(z) : activate(z);
        }
        return h;
    }

    /// Reverse pass for <output, cotangent>. Parameter gradients are added into grad (sized
    /// num_params); the input gradient is returned.
    Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& cotangent, Eigen::VectorXd& grad) const {
        if (grad.size() != params_.size()) throw InputError("Mlp::backward: gradient buffer size mismatch");
        return reverse(tape, cotangent, &grad);
    }

    /// Input gradient only; parameter gradients are not formed.
    Eigen::MatrixXd backward_input(const Tape& tape, const Eigen::MatrixXd& cotangent) const {
        return reverse(tape, cotangent, nullptr);
    }

    Eigen::VectorXd zero_grad() const { return Eigen::VectorXd::Zero(params_.size()); }

private:
    Eigen::MatrixXd reverse(const Tape& tape, const Eigen::MatrixXd& cotangent, Eigen::VectorXd* grad) const {
        if (tape.pre.size() != num_layers()) throw InputError("Mlp::backward: tape does not match network");
        if (cotangent.rows() != static_cast<Eigen::Index>(output_size()) || cotangent.cols() != tape.inputs[0].cols())
            throw InputError("Mlp::backward: cotangent shape mismatch");
        Eigen::MatrixXd g = cotangent;
        for (std::size_t l = num_layers(); l-- > 0;) {
            if (l + 1 != num_layers()) {
                if (activation_ == Activation::relu)
                    g.array() *= (tape.pre[l].array() > 0.0).cast<double>();
                else
                    g.array() *= 1.0 - tape.inputs[l + 1].array().square();
            }
            if (grad != nullptr) {
                Eigen::Map<Eigen::MatrixXd>(grad->data() + offsets_[l], rows(l), cols(l)).noalias() += g * tape.inputs[l].transpose();
                Eigen::Map<Eigen::VectorXd>(grad->data() + bias_offset(l), rows(l)) += g.rowwise().sum();
            }
            g = weight(l).transpose() * g;
        }
        return g;
    }

    Eigen::Index rows(std::size_t l) const { return static_cast<Eigen::Index>(sizes_[l + 1]); }
    Eigen::Index cols(std::size_t l) const { return static_cast<Eigen::Index>(sizes_[l]); }
    std::size_t bias_offset(std::size_t l) const { return offsets_[l] + sizes_[l + 1] * sizes_[l]; }

    void check_input(const Eigen::MatrixXd& X) const {
        if (num_layers() == 0) throw InputError("Mlp: network has no layers");
        if (X.rows() != static_cast<Eigen::Index>(input_size()))
            throw InputError("Mlp: input has " + std::to_string(X.rows()) + " rows, expected " +
                             std::to_string(input_size()));
    }

    Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
        if (activation_ == Activation::relu) return z.cwiseMax(0.0);
        return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();  // tanh through the vectorized exp
    }


    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    Activation activation_ = Activation::relu;
    Eigen::VectorXd params_;
};

/// Polyak blend target <- (1 - omega) target + omega source.
inline void soft_update(Mlp& target, const Mlp& source, double omega) {
    if (target.layer_sizes() != source.layer_sizes()) throw InputError("soft_update: network shapes differ");
    if (omega == 1.0) {
        target.params() = source.params();
        return;
    }
    if (omega == 0.0) return;
    target.params() = (1.0 - omega) * target.params() + omega * source.params();
}

}  // namespace csve::nn
