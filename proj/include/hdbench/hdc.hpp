#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace hdbench::hdc {

// Two flavours of the nonlinear random-projection encoder.
//   PaperProduct: h_i = cos(x.B_i + b_i) * sin(x.B_i)
//   StandardRFF:  h_i = cos(x.B_i + b_i)
// Both map into [-1, 1] per component. StandardRFF is the classic
// random-Fourier-feature map whose pairwise cosine similarity tracks the
// Gaussian kernel exp(-|x-y|^2 / 2).
enum class EncoderVariant { PaperProduct, StandardRFF };

const char* to_string(EncoderVariant variant);

// Frozen random projection defining the input -> hyperspace map.
// rows is D x n row-major with standard-normal entries; offsets are phases
// drawn uniformly from [0, 2*pi). Regenerating with the same seed reproduces
// the basis bit-for-bit.
struct EncoderBasis {
    int input_length = 0;  // n
    int dimension = 0;     // D
    EncoderVariant variant = EncoderVariant::PaperProduct;
    std::uint64_t seed = 0;
    std::vector<double> rows;
    std::vector<double> offsets;
};

EncoderBasis new_basis(int input_length, int dimension, EncoderVariant variant,
                       std::uint64_t seed);

std::vector<double> encode(const EncoderBasis& basis, const std::vector<double>& x);

// Batch encoding; order of results matches the input order regardless of
// internal parallelism.
std::vector<std::vector<double>> encode_all(const EncoderBasis& basis,
                                            const std::vector<std::vector<double>>& xs);

struct HdcConfig {
    int dimension = 10000;
    double learning_rate = 0.005;
    int retrain_epochs = 100;
    // Similarity metric is cosine; there is no alternative implemented.
};

// One accumulated hypervector per class, stored unnormalized (cosine
// prediction is scale-invariant).
struct HdcModel {
    std::vector<std::vector<double>> class_vectors;
    int num_classes = 0;
    HdcConfig config;
};

// One-pass training: C_j = sum over class-j samples of eta * H. Every class
// in [0, num_classes) must have at least one sample.
HdcModel train_initial(const std::vector<std::vector<double>>& encoded,
                       const std::vector<int>& labels, int num_classes,
                       const HdcConfig& config);

// Online perceptron-style correction: for config.retrain_epochs epochs, visit
// samples in a seeded-shuffle order fixed before the first epoch; on a
// misclassification of a class-j sample as class k, add eta*H to C_j and
// subtract it from C_k immediately. Zero epochs returns the model unchanged.
HdcModel retrain(HdcModel model, const std::vector<std::vector<double>>& encoded,
                 const std::vector<int>& labels, std::uint64_t shuffle_seed);

// (a.b) / (|a||b|); returns 0 when either norm is zero.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// argmax over classes of cosine similarity, ties broken by lowest index.
int predict(const HdcModel& model, const std::vector<double>& h);

std::vector<int> predict_all(const HdcModel& model,
                             const std::vector<std::vector<double>>& hs);

double evaluate(const HdcModel& model, const std::vector<std::vector<double>>& hs,
                const std::vector<int>& labels);

// Versioned binary model file: basis identity (n, D, variant, seed), training
// config, and class vectors as little-endian 64-bit floats. The basis is
// regenerated from its seed on load; round trips are bit-exact.
void save_model(const std::filesystem::path& path, const EncoderBasis& basis,
                const HdcModel& model);

std::pair<EncoderBasis, HdcModel> load_model(const std::filesystem::path& path);

}  // namespace hdbench::hdc
