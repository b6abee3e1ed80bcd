#include "hdbench/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hdbench/common.hpp"
#include "nlohmann/json.hpp"

namespace hdbench::attacks {

namespace {

inline double sign_of(double v) {
    if (v > 0.0) return 1.0;
    if (v < 0.0) return -1.0;
    return 0.0;
}

inline void clip_to_ball(std::vector<double>& candidate, const std::vector<double>& center,
                         double epsilon) {
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        candidate[i] = std::min(center[i] + epsilon, std::max(center[i] - epsilon, candidate[i]));
    }
}

constexpr double kGradientFloor = 1e-12;

}  // namespace

const char* to_string(AttackMethod method) {
    switch (method) {
        case AttackMethod::Fgsm: return "fgsm";
        case AttackMethod::Bim: return "bim";
        case AttackMethod::Mim: return "mim";
        case AttackMethod::Rom: return "rom";
    }
    return "unknown";
}

AttackMethod parse_attack(std::string_view name) {
    if (name == "fgsm") return AttackMethod::Fgsm;
    if (name == "bim") return AttackMethod::Bim;
    if (name == "mim") return AttackMethod::Mim;
    if (name == "rom") return AttackMethod::Rom;
    throw std::invalid_argument("unknown attack method '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (decay < 0.0) throw std::invalid_argument("decay must be >= 0");
}

std::vector<double> fgsm(const substitute::SubstituteNet& net, const std::vector<double>& x,
                         int label, double epsilon) {
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    const auto grad = substitute::input_gradient(net, x, label);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] + epsilon * sign_of(grad[i]);
    }
    return out;
}

std::vector<double> bim(const substitute::SubstituteNet& net, const std::vector<double>& x,
                        int label, double epsilon, int iterations) {
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    const double alpha = epsilon / iterations;
    std::vector<double> current = x;
    for (int it = 0; it < iterations; ++it) {
        const auto grad = substitute::input_gradient(net, current, label);
        for (std::size_t i = 0; i < current.size(); ++i) {
            current[i] += alpha * sign_of(grad[i]);
        }
        clip_to_ball(current, x, epsilon);
    }
    return current;
}

void momentum_update(std::vector<double>& g, const std::vector<double>& grad, double decay) {
    if (g.size() != grad.size()) throw std::invalid_argument("accumulator size mismatch");
    double l1 = 0.0;
    for (double v : grad) l1 += std::abs(v);
    if (l1 < kGradientFloor) {
        for (double& v : g) v *= decay;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = decay * g[i] + grad[i] / l1;
    }
}

std::vector<double> mim(const substitute::SubstituteNet& net, const std::vector<double>& x,
                        int label, double epsilon, int iterations, double decay) {
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (decay < 0.0) throw std::invalid_argument("decay must be >= 0");
    const double alpha = epsilon / iterations;
    std::vector<double> current = x;
    std::vector<double> momentum(x.size(), 0.0);
    for (int it = 0; it < iterations; ++it) {
        const auto grad = substitute::input_gradient(net, current, label);
        momentum_update(momentum, grad, decay);
        for (std::size_t i = 0; i < current.size(); ++i) {
            current[i] += alpha * sign_of(momentum[i]);
        }
        clip_to_ball(current, x, epsilon);
    }
    return current;
}

substitute::TrainResult rom_train(const std::vector<std::vector<double>>& xs,
                                  const std::vector<int>& ys,
                                  const substitute::NetworkConfig& net_config,
                                  const substitute::TrainConfig& train_config,
                                  double epsilon) {
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    substitute::detail::InstanceTransform inner_max =
        [epsilon](const substitute::SubstituteNet& current, const std::vector<double>& x,
                  int y) { return fgsm(current, x, y, epsilon); };
    return substitute::detail::train_with_transform(substitute::init_net(net_config), xs, ys,
                                                    train_config, &inner_max);
}

PerturbedDataset craft(const substitute::SubstituteNet& net,
                       const data::SignalDataset& test_set, const AttackConfig& config) {
    config.validate();
    if (test_set.window_length != net.config.input_length) {
        throw std::invalid_argument("test window length " +
                                    std::to_string(test_set.window_length) +
                                    " incompatible with substitute input length " +
                                    std::to_string(net.config.input_length));
    }

    PerturbedDataset out;
    out.labels = test_set.labels;
    out.windows.resize(test_set.windows.size());
    out.provenance = AttackProvenance{config.method,
                                      config.epsilon,
                                      config.step(),
                                      config.iterations,
                                      config.decay,
                                      substitute::checkpoint_hash(net),
                                      net.config.seed};

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(test_set.windows.size()); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto& x = test_set.windows[idx];
        const int y = test_set.labels[idx];
        switch (config.method) {
            case AttackMethod::Fgsm:
                out.windows[idx] = fgsm(net, x, y, config.epsilon);
                break;
            case AttackMethod::Bim:
                out.windows[idx] = bim(net, x, y, config.epsilon, config.iterations);
                break;
            case AttackMethod::Mim:
                out.windows[idx] = mim(net, x, y, config.epsilon, config.iterations, config.decay);
                break;
            case AttackMethod::Rom:
                // Transfer semantics: FGSM examples crafted from the robustly
                // trained substitute the caller passed in.
                out.windows[idx] = fgsm(net, x, y, config.epsilon);
                break;
        }
    }
    return out;
}

void save_perturbed(const std::filesystem::path& path, const PerturbedDataset& perturbed) {
    data::SignalDataset ds;
    ds.windows = perturbed.windows;
    ds.labels = perturbed.labels;
    ds.window_length = perturbed.windows.empty() ? 0 : static_cast<int>(perturbed.windows[0].size());
    ds.num_classes = 0;
    for (int label : ds.labels) ds.num_classes = std::max(ds.num_classes, label + 1);
    data::save_csv(path, ds);

    nlohmann::json sidecar = {
        {"method", to_string(perturbed.provenance.method)},
        {"epsilon", perturbed.provenance.epsilon},
        {"step", perturbed.provenance.step},
        {"iterations", perturbed.provenance.iterations},
        {"decay", perturbed.provenance.decay},
        {"checkpoint_hash", hex64(perturbed.provenance.checkpoint_hash)},
        {"seed", perturbed.provenance.seed},
    };
    std::ofstream out(path.string() + ".provenance.json");
    if (!out) throw DataError("cannot write provenance sidecar for " + path.string());
    out << sidecar.dump(2) << '\n';
}

}  // namespace hdbench::attacks
