#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hnn/hnn.hpp"

namespace hnn::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative error between the analytic gradient of f with respect to
/// each input and a central difference with step h.
inline double max_grad_error(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-5,
                             double floor = 1e-8) {
    for (auto& t : inputs) t.zero_grad();
    backward(f());
    double worst = 0.0;
    for (auto& t : inputs) {
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto w = t.mutable_data();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double orig = w[k];
            w[k] = orig + h;
            const double up = f().item();
            w[k] = orig - h;
            const double down = f().item();
            w[k] = orig;
            worst = std::max(worst, rel_err(analytic[k], (up - down) / (2.0 * h), floor));
        }
    }
    return worst;
}

/// Weighted sum with fixed random weights, so every output entry matters.
inline Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
    Rng rng(seed);
    return sum(mul(y, random_tensor(y.shape(), rng, -1.0, 1.0, false)));
}

inline Instance make_instance(const std::string& id, const std::string& sentence, const std::string& pronoun,
                              std::vector<Candidate> candidates, Source source = Source::wsc) {
    Instance inst;
    inst.id = id;
    inst.sentence = sentence;
    const auto at = sentence.find(" " + pronoun + " ");
    const std::size_t start = at == std::string::npos ? sentence.find(pronoun) : at + 1;
    inst.pronoun = {pronoun, start, start + pronoun.size()};
    inst.candidates = std::move(candidates);
    inst.source = source;
    inst.validate();
    return inst;
}

inline Instance trophy_instance() {
    return make_instance("trophy", "The trophy does not fit into the brown suitcase because it is too large.", "it",
                         {{"the trophy", Label::positive}, {"the brown suitcase", Label::negative}});
}

inline EncoderConfig tiny_encoder(std::size_t vocab_size, std::size_t d = 8, std::size_t layers = 1,
                                  std::size_t heads = 1) {
    EncoderConfig c;
    c.vocab_size = vocab_size;
    c.d_model = d;
    c.num_layers = layers;
    c.num_heads = heads;
    c.max_positions = 32;
    c.init_stddev = 0.3;
    return c;
}

}  // namespace hnn::testing
