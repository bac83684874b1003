#include "aqs/mlp.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "aqs/rng.hpp"

namespace aqs {

double Mlp::act(double v) const {
    return act_ == Activation::relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
}

double Mlp::act_deriv(double pre) const {
    if (act_ == Activation::relu) return pre > 0.0 ? 1.0 : 0.0;
    double t = std::tanh(pre);
    return 1.0 - t * t;
}

Mlp Mlp::init(const MlpSpec& spec, int input_dim) {
    spec.validate();
    if (input_dim < 1) throw ValidationError("mlp: input_dim must be >= 1");
    Mlp net;
    net.input_dim_ = input_dim;
    net.act_ = spec.activation;
    Rng rng(spec.init_seed);
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int w : spec.layer_widths) dims.push_back(w);
    dims.push_back(1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        int fan_in = dims[l], fan_out = dims[l + 1];
        double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Matrix w(static_cast<std::size_t>(fan_out), static_cast<std::size_t>(fan_in));
        for (double& v : w.a) v = rng.uniform(-limit, limit);
        net.w_.push_back(std::move(w));
        net.b_.emplace_back(static_cast<std::size_t>(fan_out), 0.0);
    }
    return net;
}

double Mlp::forward(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != input_dim_)
        throw RuntimeFailure("mlp forward: feature dimension mismatch");
    std::vector<double> cur(x.begin(), x.end());
    for (std::size_t l = 0; l < w_.size(); ++l) {
        const Matrix& w = w_[l];
        std::vector<double> next(w.rows);
        for (std::size_t r = 0; r < w.rows; ++r) {
            double s = b_[l][r];
            for (std::size_t c = 0; c < w.cols; ++c) s += w(r, c) * cur[c];
            next[r] = (l + 1 < w_.size()) ? act(s) : s;  // linear output layer
        }
        cur = std::move(next);
    }
    return cur[0];
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) n += w_[l].a.size() + b_[l].size();
    return n;
}

std::vector<double> Mlp::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (std::size_t l = 0; l < w_.size(); ++l) {
        out.insert(out.end(), w_[l].a.begin(), w_[l].a.end());
        out.insert(out.end(), b_[l].begin(), b_[l].end());
    }
    return out;
}

void Mlp::unflatten(std::span<const double> params) {
    std::size_t pos = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        for (double& v : w_[l].a) v = params[pos++];
        for (double& v : b_[l]) v = params[pos++];
    }
    if (pos != params.size()) throw RuntimeFailure("mlp unflatten: size mismatch");
}

double Mlp::loss_and_gradient(const std::vector<std::vector<double>>& xs,
                              const std::vector<double>& ys, std::vector<double>& grad) const {
    const std::size_t n = xs.size();
    if (n == 0 || ys.size() != n) throw RuntimeFailure("mlp loss: empty or mismatched batch");
    grad.assign(parameter_count(), 0.0);

    const std::size_t layers = w_.size();
    std::vector<Matrix> gw;
    std::vector<std::vector<double>> gb;
    for (std::size_t l = 0; l < layers; ++l) {
        gw.emplace_back(w_[l].rows, w_[l].cols);
        gb.emplace_back(b_[l].size(), 0.0);
    }

    double loss = 0.0;
    std::vector<std::vector<double>> pre(layers), post(layers + 1);
    for (std::size_t s = 0; s < n; ++s) {
        post[0].assign(xs[s].begin(), xs[s].end());
        for (std::size_t l = 0; l < layers; ++l) {
            const Matrix& w = w_[l];
            pre[l].assign(w.rows, 0.0);
            post[l + 1].assign(w.rows, 0.0);
            for (std::size_t r = 0; r < w.rows; ++r) {
                double acc = b_[l][r];
                for (std::size_t c = 0; c < w.cols; ++c) acc += w(r, c) * post[l][c];
                pre[l][r] = acc;
                post[l + 1][r] = (l + 1 < layers) ? act(acc) : acc;
            }
        }
        double err = post[layers][0] - ys[s];
        loss += err * err;

        // backward: dL/d(pre) per layer, starting from d(err^2)/d(out) = 2 err
        std::vector<double> delta(1, 2.0 * err / static_cast<double>(n));
        for (std::size_t li = layers; li-- > 0;) {
            const Matrix& w = w_[li];
            for (std::size_t r = 0; r < w.rows; ++r) {
                double d = delta[r];
                gb[li][r] += d;
                for (std::size_t c = 0; c < w.cols; ++c) gw[li](r, c) += d * post[li][c];
            }
            if (li == 0) break;
            std::vector<double> prev(w.cols, 0.0);
            for (std::size_t c = 0; c < w.cols; ++c) {
                double acc = 0.0;
                for (std::size_t r = 0; r < w.rows; ++r) acc += w(r, c) * delta[r];
                prev[c] = acc * act_deriv(pre[li - 1][c]);
            }
            delta = std::move(prev);
        }
    }

    std::size_t pos = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        for (double v : gw[l].a) grad[pos++] = v;
        for (double v : gb[l]) grad[pos++] = v;
    }
    return loss / static_cast<double>(n);
}

double Mlp::train(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
                  const MlpSpec& spec) {
    if (xs.empty()) throw ValidationError("mlp train: need at least one pair");
    Rng shuffle_rng(derive_seed(spec.init_seed, "shuffle"));
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> grad;
    std::vector<std::vector<double>> bx;
    std::vector<double> by;
    double epoch_loss = 0.0;
    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        // Fisher-Yates on our own rng; std::shuffle's draw pattern is not pinned
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(shuffle_rng.below(i));
            std::swap(order[i - 1], order[j]);
        }
        epoch_loss = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(spec.batch_size),
                                                     order.size() - done);
            bx.clear();
            by.clear();
            for (std::size_t i = 0; i < take; ++i) {
                bx.push_back(xs[order[done + i]]);
                by.push_back(ys[order[done + i]]);
            }
            double bl = loss_and_gradient(bx, by, grad);
            epoch_loss += bl * static_cast<double>(take);
            std::size_t pos = 0;
            for (std::size_t l = 0; l < w_.size(); ++l) {
                for (double& v : w_[l].a) v -= spec.learning_rate * grad[pos++];
                for (double& v : b_[l]) v -= spec.learning_rate * grad[pos++];
            }
            done += take;
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss))
            throw NonConvergence("mlp train: loss diverged at epoch " + std::to_string(epoch));
    }
    return epoch_loss;
}

void Mlp::rescale_output(double scale, double shift) {
    Matrix& w = w_.back();
    for (double& v : w.a) v *= scale;
    b_.back()[0] = b_.back()[0] * scale + shift;
}

std::string Mlp::to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["input_dim"] = input_dim_;
    j["activation"] = act_ == Activation::relu ? "relu" : "tanh";
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < w_.size(); ++l) {
        layers.push_back({{"rows", w_[l].rows}, {"cols", w_[l].cols}, {"w", w_[l].a}, {"b", b_[l]}});
    }
    j["layers"] = std::move(layers);
    return j.dump();
}

Mlp Mlp::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != 1) throw ValidationError("mlp: unknown model version");
    Mlp net;
    net.input_dim_ = j.at("input_dim").get<int>();
    net.act_ = j.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::tanh_;
    for (const auto& layer : j.at("layers")) {
        Matrix w(layer.at("rows").get<std::size_t>(), layer.at("cols").get<std::size_t>());
        std::vector<double> wa = layer.at("w").get<std::vector<double>>();
        if (wa.size() != w.a.size()) throw ValidationError("mlp: layer shape mismatch");
        w.a = std::move(wa);
        net.w_.push_back(std::move(w));
        net.b_.push_back(layer.at("b").get<std::vector<double>>());
    }
    return net;
}

}  // namespace aqs
