#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hdbench/data.hpp"
#include "hdbench/substitute.hpp"

namespace hdbench::attacks {

enum class AttackMethod { Fgsm, Bim, Mim, Rom };

const char* to_string(AttackMethod method);
AttackMethod parse_attack(std::string_view name);

struct AttackConfig {
    AttackMethod method = AttackMethod::Fgsm;
    double epsilon = 0.1;
    int iterations = 100;
    double decay = 1.0;

    // Step size alpha = epsilon / iterations.
    double step() const { return epsilon / iterations; }

    void validate() const;  // throws std::invalid_argument
};

// Single sign-gradient step: x + epsilon * sign(grad), with sign(0) = 0.
std::vector<double> fgsm(const substitute::SubstituteNet& net, const std::vector<double>& x,
                         int label, double epsilon);

// `iterations` steps of size epsilon/iterations in the sign direction of the
// gradient at the current iterate, clipped into [x - epsilon, x + epsilon]
// after every step.
std::vector<double> bim(const substitute::SubstituteNet& net, const std::vector<double>& x,
                        int label, double epsilon, int iterations);

// Momentum variant: the accumulator gathers L1-normalized gradients with
// decay factor mu, and steps follow sign(accumulator). Gradients with L1 norm
// below 1e-12 contribute nothing. mu = 0 reduces to bim.
std::vector<double> mim(const substitute::SubstituteNet& net, const std::vector<double>& x,
                        int label, double epsilon, int iterations, double decay);

// g <- decay * g + grad / |grad|_1, with the zero-gradient guard.
void momentum_update(std::vector<double>& g, const std::vector<double>& grad, double decay);

// Min-max robust training: the standard training loop, except every minibatch
// instance is replaced by its FGSM-perturbed counterpart (crafted with the
// current parameters) before the gradient step. epsilon = 0 reproduces
// substitute::train exactly.
substitute::TrainResult rom_train(const std::vector<std::vector<double>>& xs,
                                  const std::vector<int>& ys,
                                  const substitute::NetworkConfig& net_config,
                                  const substitute::TrainConfig& train_config,
                                  double epsilon);

struct AttackProvenance {
    AttackMethod method = AttackMethod::Fgsm;
    double epsilon = 0.0;
    double step = 0.0;
    int iterations = 0;
    double decay = 0.0;
    std::uint64_t checkpoint_hash = 0;
    std::uint64_t seed = 0;
};

// Adversarial copy of a test set: same cardinality, same labels, every window
// within the L-inf epsilon ball of its source.
struct PerturbedDataset {
    std::vector<std::vector<double>> windows;
    std::vector<int> labels;
    AttackProvenance provenance;
};

// Applies the configured method per sample. For Rom the caller passes the
// robustly trained net and the crafted examples are its FGSM examples.
// Samples are independent, so crafting may run in parallel; output order
// always matches the input order.
PerturbedDataset craft(const substitute::SubstituteNet& net,
                       const data::SignalDataset& test_set, const AttackConfig& config);

// Writes the perturbed windows in dataset CSV format plus a JSON sidecar
// (`<path>.provenance.json`) recording the attack parameters and the
// substitute checkpoint identity.
void save_perturbed(const std::filesystem::path& path, const PerturbedDataset& perturbed);

}  // namespace hdbench::attacks
