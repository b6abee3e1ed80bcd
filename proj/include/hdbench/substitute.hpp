#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace hdbench::substitute {

// WDCNN-style 1D classifier: one wide-kernel convolution stage, one
// small-kernel stage, each followed by relu and max pooling, then two dense
// layers. Convolutions are valid-padding, stride 1.
struct NetworkConfig {
    int input_length = 100;
    int wide_kernel = 64;
    int wide_filters = 16;
    int small_kernel = 3;
    int small_filters = 32;
    int pool_width = 2;
    int dense_units = 100;
    int num_classes = 10;
    std::uint64_t seed = 0;
};

// Output length after each stage; construction fails if any stage collapses
// below length 1.
struct LayerShapes {
    int wide_out = 0;
    int wide_pooled = 0;
    int small_out = 0;
    int small_pooled = 0;
    int flat = 0;
};

LayerShapes compute_shapes(const NetworkConfig& config);

struct SubstituteNet {
    NetworkConfig config;
    std::vector<double> conv_wide_w;    // wide_filters x wide_kernel
    std::vector<double> conv_wide_b;    // wide_filters
    std::vector<double> conv_small_w;   // small_filters x wide_filters x small_kernel
    std::vector<double> conv_small_b;   // small_filters
    std::vector<double> dense_hidden_w; // dense_units x flat
    std::vector<double> dense_hidden_b; // dense_units
    std::vector<double> dense_out_w;    // num_classes x dense_units
    std::vector<double> dense_out_b;    // num_classes
};

// He-style init: weights ~ N(0, 1) * sqrt(2 / fan_in), biases zero,
// deterministic from config.seed.
SubstituteNet init_net(const NetworkConfig& config);

std::vector<double> forward(const SubstituteNet& net, const std::vector<double>& x);

int predict(const SubstituteNet& net, const std::vector<double>& x);

// Softmax cross-entropy of forward(net, x) against the label.
double loss(const SubstituteNet& net, const std::vector<double>& x, int label);

// Reverse-mode gradients of the loss w.r.t. every parameter and w.r.t. the
// input. Max-pool routes gradient to the first maximal element; the relu
// subgradient at 0 is 0.
struct GradientBundle {
    std::vector<double> conv_wide_w, conv_wide_b;
    std::vector<double> conv_small_w, conv_small_b;
    std::vector<double> dense_hidden_w, dense_hidden_b;
    std::vector<double> dense_out_w, dense_out_b;
    std::vector<double> input_grad;
};

GradientBundle backward(const SubstituteNet& net, const std::vector<double>& x, int label);

// Gradient of the loss w.r.t. the input only (cheaper path used by the
// attack crafters).
std::vector<double> input_gradient(const SubstituteNet& net, const std::vector<double>& x,
                                   int label);

struct TrainConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_stab = 1e-8;
    int batch_size = 16;
    int max_epochs = 100;
    int patience = 10;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    SubstituteNet net;  // parameters from the best-validation-accuracy epoch
    std::vector<EpochStats> history;
    int best_epoch = 0;  // 1-based epoch index of the restored parameters
};

// Adam over seeded-shuffled minibatches with a held-out validation split and
// early stopping on validation accuracy (stops after `patience` consecutive
// epochs without improvement).
TrainResult train(SubstituteNet net, const std::vector<std::vector<double>>& xs,
                  const std::vector<int>& ys, const TrainConfig& config);

// Fraction of samples whose argmax logit equals the label (ties -> lowest
// class index).
double evaluate(const SubstituteNet& net, const std::vector<std::vector<double>>& xs,
                const std::vector<int>& ys);

double mean_loss(const SubstituteNet& net, const std::vector<std::vector<double>>& xs,
                 const std::vector<int>& ys);

// Versioned binary checkpoint: NetworkConfig plus all parameters as
// little-endian 64-bit floats; round trips are bit-exact.
void save_checkpoint(const std::filesystem::path& path, const SubstituteNet& net);

SubstituteNet load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the serialized checkpoint bytes; identifies a trained net in
// provenance records.
std::uint64_t checkpoint_hash(const SubstituteNet& net);

namespace detail {

// Replaces a training instance just before its gradient contribution is
// computed (the robust-training hook). Must not consume shared RNG state.
using InstanceTransform =
    std::function<std::vector<double>(const SubstituteNet&, const std::vector<double>&, int)>;

TrainResult train_with_transform(SubstituteNet net,
                                 const std::vector<std::vector<double>>& xs,
                                 const std::vector<int>& ys, const TrainConfig& config,
                                 const InstanceTransform* transform);

}  // namespace detail

}  // namespace hdbench::substitute
