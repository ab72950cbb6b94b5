#pragma once

// Forward activations and reverse-mode gradients of TinyLm. Shared by the
// gradient engine and the pretraining loop.

#include "kedit/tiny_lm.hpp"

#include <Eigen/Dense>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace kedit::kernels {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatF = Mat<float>;

template <class S>
struct LayerTrace {
    Mat<S> x_in;         // residual stream entering the layer [T,D]
    Mat<S> ln1_xhat;     // normalized input before gain/bias
    std::vector<S> ln1_rstd;
    Mat<S> ln1_out;
    Mat<S> q, k, v;      // [T,D]
    std::vector<Mat<S>> probs;  // per head [T,T], causal softmax
    Mat<S> attn_cat;     // [T,D] concatenated head outputs
    Mat<S> x_mid;        // after attention residual
    Mat<S> ln2_xhat;
    std::vector<S> ln2_rstd;
    Mat<S> ln2_out;
    Mat<S> pre_act;      // [T,F]
    Mat<S> act;          // gelu(pre_act)
};

template <class S>
struct ForwardTrace {
    std::vector<int> tokens;
    std::vector<LayerTrace<S>> layers;
    Mat<S> x_final;
    Mat<S> lnf_xhat;
    std::vector<S> lnf_rstd;
    Mat<S> lnf_out;
    Mat<S> logits;  // [T,V]
};

// Activations of one forward pass at precision S (weights are cast from float).
template <class S>
ForwardTrace<S> forward_trace(const TinyLm & m, std::span<const int> tokens);

// Double-precision logits, used by the finite-difference oracle.
Mat<double> forward_logits_f64(const TinyLm & m, std::span<const int> tokens);

// Accumulation targets keyed by tensor name. Only named tensors receive
// gradients; backpropagation stops below the lowest requested block.
using GradSink = std::map<std::string, Tensor *>;

// Gradients are computed at precision S and accumulated into float tensors.
template <class S>
void backward(const TinyLm & m, const ForwardTrace<S> & tr, const Mat<S> & dlogits, const GradSink & sink);

// Mean NLL of `target` given `prompt` from a trace of prompt ++ target[:-1],
// and (optionally) the logits gradient of that mean.
template <class S>
double target_nll(const ForwardTrace<S> & tr, std::size_t prompt_len, std::span<const int> target, Mat<S> * dlogits);

// Concatenation used as model input for a supervised example.
std::vector<int> example_input(const SupervisedExample & ex);

}  // namespace kedit::kernels
