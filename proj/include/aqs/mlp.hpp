#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aqs/common.hpp"
#include "aqs/linalg.hpp"

namespace aqs {

enum class Activation { relu, tanh_ };

struct MlpSpec {
    std::vector<int> layer_widths = {32, 32};  // hidden layers
    Activation activation = Activation::tanh_;
    double learning_rate = 1e-3;
    int epochs = 200;
    int batch_size = 32;
    std::uint64_t init_seed = 1;

    void validate() const {
        if (layer_widths.empty()) throw ValidationError("mlp: at least one hidden layer required");
        for (int w : layer_widths)
            if (w < 1) throw ValidationError("mlp: layer widths must be >= 1");
        if (!(learning_rate > 0)) throw ValidationError("mlp: learning_rate must be > 0");
        if (epochs < 1) throw ValidationError("mlp: epochs must be >= 1");
        if (batch_size < 1) throw ValidationError("mlp: batch_size must be >= 1");
    }
};

/// Scalar-output feed-forward network with analytic backpropagation.
/// Everything is seeded and sequential, so training replays bit-identically.
class Mlp {
public:
    Mlp() = default;
    /// Xavier-uniform init of input_dim -> widths... -> 1.
    static Mlp init(const MlpSpec& spec, int input_dim);

    double forward(std::span<const double> x) const;

    /// Mean-squared-error loss over the batch plus its gradient with respect to
    /// every parameter, flattened in layer order (weights row-major, then bias).
    double loss_and_gradient(const std::vector<std::vector<double>>& xs,
                             const std::vector<double>& ys, std::vector<double>& grad) const;

    std::vector<double> flatten() const;
    void unflatten(std::span<const double> params);
    std::size_t parameter_count() const;

    /// Mini-batch gradient descent; batches reshuffled each epoch from the
    /// spec seed. Returns the final epoch's mean loss. Throws NonConvergence
    /// naming the epoch if the loss turns non-finite.
    double train(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
                 const MlpSpec& spec);

    /// Folds y = scale*y' + shift into the output layer, so a network trained
    /// on normalized labels emits raw ones.
    void rescale_output(double scale, double shift);

    int input_dim() const { return input_dim_; }
    const std::vector<Matrix>& weights() const { return w_; }
    const std::vector<std::vector<double>>& biases() const { return b_; }

    std::string to_json() const;
    static Mlp from_json(const std::string& text);

private:
    int input_dim_ = 0;
    Activation act_ = Activation::tanh_;
    std::vector<Matrix> w_;               // w_[l] is (out x in)
    std::vector<std::vector<double>> b_;

    double act(double v) const;
    double act_deriv(double pre) const;
};

}  // namespace aqs
