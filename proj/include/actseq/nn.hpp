#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "actseq/rng.hpp"
#include "actseq/tensor.hpp"

namespace actseq::nn {

using ad::Tensor;

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) parameter initialization.
inline Tensor init_param(Rng& rng, std::vector<int> shape, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    std::vector<double> v(ad::shape_size(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor::leaf(std::move(shape), std::move(v), /*requires_grad=*/true);
}

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Affine map stored as W (in x out) so both vectors and row-major frame
// matrices apply with a plain matmul.
struct Linear {
    Tensor weight;  // (in, out)
    Tensor bias;    // (out)

    Linear() = default;
    Linear(Rng& rng, int in, int out)
        : weight(init_param(rng, {in, out}, in)), bias(init_param(rng, {out}, in)) {}

    Tensor operator()(const Tensor& x) const {
        if (x.rank() == 1) return ad::add(ad::matmul(x, weight), bias);
        return ad::add_rowvec(ad::matmul(x, weight), bias);
    }

    void collect(const std::string& prefix, NamedParams& out) const {
        out.emplace_back(prefix + ".weight", weight);
        out.emplace_back(prefix + ".bias", bias);
    }
};

struct GruParams {
    Linear update;     // z gate over [x, s]
    Linear reset;      // r gate over [x, s]
    Linear candidate;  // h~ over [x, r*s]

    GruParams() = default;
    GruParams(Rng& rng, int input_dim, int hidden_dim)
        : update(rng, input_dim + hidden_dim, hidden_dim),
          reset(rng, input_dim + hidden_dim, hidden_dim),
          candidate(rng, input_dim + hidden_dim, hidden_dim) {}

    void collect(const std::string& prefix, NamedParams& out) const {
        update.collect(prefix + ".update", out);
        reset.collect(prefix + ".reset", out);
        candidate.collect(prefix + ".candidate", out);
    }
};

// Standard gated recurrent update:
//   z = sigma(Wz [x, s]), r = sigma(Wr [x, s])
//   h~ = tanh(Wh [x, r*s]),  s' = (1-z)*s + z*h~
inline Tensor gru_cell(const Tensor& x_t, const Tensor& s_prev, const GruParams& p) {
    if (x_t.rank() != 1 || s_prev.rank() != 1) throw ShapeError("gru: expects rank-1 inputs");
    const Tensor xs = ad::concat(x_t, s_prev);
    const Tensor z = ad::sigmoid(p.update(xs));
    const Tensor r = ad::sigmoid(p.reset(xs));
    const Tensor h = ad::tanh(p.candidate(ad::concat(x_t, ad::mul(r, s_prev))));
    const Tensor one_minus_z = ad::add_const(ad::scale(z, -1.0), 1.0);
    return ad::add(ad::mul(one_minus_z, s_prev), ad::mul(z, h));
}

struct AttentionResult {
    Tensor context;  // weighted sum of values
    Tensor weights;  // length-T simplex
};

// Single-head scaled dot-product attention. Query dim must equal key dim;
// scores are scaled by 1/sqrt(d).
inline AttentionResult attention(const Tensor& query, const Tensor& keys, const Tensor& values) {
    if (query.rank() != 1 || keys.rank() != 2 || values.rank() != 2)
        throw ShapeError("attention: expects query(d), keys(T,d), values(T,dv)");
    if (keys.dim(1) != query.dim(0)) throw ShapeError("attention: query/key dims disagree");
    if (keys.dim(0) != values.dim(0)) throw ShapeError("attention: key/value lengths disagree");
    const double scale = 1.0 / std::sqrt(static_cast<double>(query.dim(0)));
    const Tensor scores = ad::scale(ad::matmul(keys, query), scale);
    const Tensor weights = ad::softmax(scores);
    const Tensor context = ad::matmul(weights, values);
    return {context, weights};
}

// Token embedding table; lookup is a differentiable row slice.
struct Embedding {
    Tensor table;  // (vocab, dim)

    Embedding() = default;
    Embedding(Rng& rng, int vocab, int dim) : table(init_param(rng, {vocab, dim}, dim)) {}

    Tensor operator()(int token) const {
        if (token < 0 || token >= table.dim(0)) throw ShapeError("embedding: token out of range");
        return ad::row(table, token);
    }

    void collect(const std::string& prefix, NamedParams& out) const {
        out.emplace_back(prefix + ".table", table);
    }
};

// One dilated residual block of a temporal convolution stage:
//   y = x + pointwise(dropout(relu(conv_dilated(x))))
struct DilatedResidualLayer {
    Tensor conv_weight;  // (C, C, 3)
    Tensor conv_bias;    // (C)
    Linear pointwise;    // C -> C
    int dilation = 1;

    DilatedResidualLayer() = default;
    DilatedResidualLayer(Rng& rng, int channels, int dil)
        : conv_weight(init_param(rng, {channels, channels, 3}, channels * 3)),
          conv_bias(init_param(rng, {channels}, channels * 3)),
          pointwise(rng, channels, channels),
          dilation(dil) {}

    Tensor operator()(const Tensor& x, double dropout_p, Rng* dropout_rng) const {
        Tensor h = ad::relu(ad::conv1d_dilated(x, conv_weight, conv_bias, dilation));
        h = pointwise(h);
        if (dropout_rng && dropout_p > 0.0) h = ad::dropout(h, dropout_p, *dropout_rng);
        return ad::add(x, h);
    }

    void collect(const std::string& prefix, NamedParams& out) const {
        out.emplace_back(prefix + ".conv.weight", conv_weight);
        out.emplace_back(prefix + ".conv.bias", conv_bias);
        pointwise.collect(prefix + ".pointwise", out);
    }
};

}  // namespace actseq::nn
