#include "hdbench/hdc.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "hdbench/common.hpp"

namespace hdbench::hdc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

void check_input(const EncoderBasis& basis, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != basis.input_length) {
        throw std::invalid_argument("input length " + std::to_string(x.size()) +
                                    " does not match basis n=" +
                                    std::to_string(basis.input_length));
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite input value");
    }
}

void encode_into(const EncoderBasis& basis, const std::vector<double>& x, double* out) {
    const int d = basis.dimension;
    ConstMatMap rows(basis.rows.data(), d, basis.input_length);
    ConstVecMap xv(x.data(), basis.input_length);
    Eigen::VectorXd projected = rows * xv;
    if (basis.variant == EncoderVariant::PaperProduct) {
        for (int i = 0; i < d; ++i) {
            out[i] = std::cos(projected[i] + basis.offsets[static_cast<std::size_t>(i)]) *
                     std::sin(projected[i]);
        }
    } else {
        for (int i = 0; i < d; ++i) {
            out[i] = std::cos(projected[i] + basis.offsets[static_cast<std::size_t>(i)]);
        }
    }
}

int argmax_similarity(const std::vector<double>& dots, const std::vector<double>& norms,
                      double h_norm) {
    int best = 0;
    double best_sim = -2.0;
    for (std::size_t j = 0; j < dots.size(); ++j) {
        const double denom = norms[j] * h_norm;
        const double sim = denom > 0.0 ? dots[j] / denom : 0.0;
        if (sim > best_sim) {
            best_sim = sim;
            best = static_cast<int>(j);
        }
    }
    return best;
}

void check_labels(const std::vector<std::vector<double>>& encoded,
                  const std::vector<int>& labels, int num_classes) {
    if (encoded.size() != labels.size()) {
        throw std::invalid_argument("encoded/labels size mismatch");
    }
    for (int label : labels) {
        if (label < 0 || label >= num_classes) {
            throw std::invalid_argument("label " + std::to_string(label) +
                                        " out of range [0, " + std::to_string(num_classes) + ")");
        }
    }
}

}  // namespace

const char* to_string(EncoderVariant variant) {
    return variant == EncoderVariant::PaperProduct ? "paper_product" : "standard_rff";
}

EncoderBasis new_basis(int input_length, int dimension, EncoderVariant variant,
                       std::uint64_t seed) {
    if (input_length < 1) throw std::invalid_argument("input_length must be >= 1");
    if (dimension < 1) throw std::invalid_argument("dimension must be >= 1");
    EncoderBasis basis;
    basis.input_length = input_length;
    basis.dimension = dimension;
    basis.variant = variant;
    basis.seed = seed;
    basis.rows.resize(static_cast<std::size_t>(dimension) * static_cast<std::size_t>(input_length));
    basis.offsets.resize(static_cast<std::size_t>(dimension));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : basis.rows) v = normal(rng);
    std::uniform_real_distribution<double> uniform(0.0, 2.0 * 3.14159265358979323846);
    for (double& v : basis.offsets) v = uniform(rng);
    return basis;
}

std::vector<double> encode(const EncoderBasis& basis, const std::vector<double>& x) {
    check_input(basis, x);
    std::vector<double> h(static_cast<std::size_t>(basis.dimension));
    encode_into(basis, x, h.data());
    return h;
}

std::vector<std::vector<double>> encode_all(const EncoderBasis& basis,
                                            const std::vector<std::vector<double>>& xs) {
    std::vector<std::vector<double>> out(xs.size());
    for (auto& h : out) h.resize(static_cast<std::size_t>(basis.dimension));
    for (const auto& x : xs) check_input(basis, x);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(xs.size()); ++i) {
        encode_into(basis, xs[static_cast<std::size_t>(i)],
                    out[static_cast<std::size_t>(i)].data());
    }
    return out;
}

HdcModel train_initial(const std::vector<std::vector<double>>& encoded,
                       const std::vector<int>& labels, int num_classes,
                       const HdcConfig& config) {
    if (num_classes < 2) throw std::invalid_argument("need at least 2 classes");
    if (config.learning_rate <= 0.0) throw std::invalid_argument("learning rate must be > 0");
    check_labels(encoded, labels, num_classes);

    const int d = config.dimension;
    HdcModel model;
    model.num_classes = num_classes;
    model.config = config;
    model.class_vectors.assign(static_cast<std::size_t>(num_classes),
                               std::vector<double>(static_cast<std::size_t>(d), 0.0));

    std::vector<std::size_t> per_class(static_cast<std::size_t>(num_classes), 0);
    const double eta = config.learning_rate;
    for (std::size_t m = 0; m < encoded.size(); ++m) {
        if (static_cast<int>(encoded[m].size()) != d) {
            throw std::invalid_argument("hypervector dimension mismatch");
        }
        const auto j = static_cast<std::size_t>(labels[m]);
        VecMap cj(model.class_vectors[j].data(), d);
        ConstVecMap h(encoded[m].data(), d);
        cj += eta * h;
        per_class[j]++;
    }
    for (int j = 0; j < num_classes; ++j) {
        if (per_class[static_cast<std::size_t>(j)] == 0) {
            throw TrainingError("empty class " + std::to_string(j));
        }
    }
    return model;
}

HdcModel retrain(HdcModel model, const std::vector<std::vector<double>>& encoded,
                 const std::vector<int>& labels, std::uint64_t shuffle_seed) {
    check_labels(encoded, labels, model.num_classes);
    if (model.config.retrain_epochs <= 0) return model;

    const int d = model.config.dimension;
    const int num_classes = model.num_classes;
    const double eta = model.config.learning_rate;

    // Visit order: one seeded shuffle fixed before epoch 1, reused every epoch.
    std::vector<std::size_t> order(encoded.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> class_norms(static_cast<std::size_t>(num_classes));
    for (int j = 0; j < num_classes; ++j) {
        ConstVecMap cj(model.class_vectors[static_cast<std::size_t>(j)].data(), d);
        class_norms[static_cast<std::size_t>(j)] = cj.norm();
    }
    std::vector<double> sample_norms(encoded.size());
    for (std::size_t m = 0; m < encoded.size(); ++m) {
        sample_norms[m] = ConstVecMap(encoded[m].data(), d).norm();
    }

    std::vector<double> dots(static_cast<std::size_t>(num_classes));
    for (int epoch = 0; epoch < model.config.retrain_epochs; ++epoch) {
        for (std::size_t m : order) {
            ConstVecMap h(encoded[m].data(), d);
            for (int j = 0; j < num_classes; ++j) {
                ConstVecMap cj(model.class_vectors[static_cast<std::size_t>(j)].data(), d);
                dots[static_cast<std::size_t>(j)] = cj.dot(h);
            }
            const int predicted = argmax_similarity(dots, class_norms, sample_norms[m]);
            const int truth = labels[m];
            if (predicted != truth) {
                VecMap ct(model.class_vectors[static_cast<std::size_t>(truth)].data(), d);
                VecMap cp(model.class_vectors[static_cast<std::size_t>(predicted)].data(), d);
                ct += eta * h;
                cp -= eta * h;
                class_norms[static_cast<std::size_t>(truth)] = ct.norm();
                class_norms[static_cast<std::size_t>(predicted)] = cp.norm();
            }
        }
    }
    return model;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
    ConstVecMap av(a.data(), static_cast<Eigen::Index>(a.size()));
    ConstVecMap bv(b.data(), static_cast<Eigen::Index>(b.size()));
    const double denom = av.norm() * bv.norm();
    if (denom == 0.0) return 0.0;
    return av.dot(bv) / denom;
}

int predict(const HdcModel& model, const std::vector<double>& h) {
    const int d = model.config.dimension;
    if (static_cast<int>(h.size()) != d) throw std::invalid_argument("dimension mismatch");
    ConstVecMap hv(h.data(), d);
    const double h_norm = hv.norm();
    std::vector<double> dots(static_cast<std::size_t>(model.num_classes));
    std::vector<double> norms(static_cast<std::size_t>(model.num_classes));
    for (int j = 0; j < model.num_classes; ++j) {
        ConstVecMap cj(model.class_vectors[static_cast<std::size_t>(j)].data(), d);
        dots[static_cast<std::size_t>(j)] = cj.dot(hv);
        norms[static_cast<std::size_t>(j)] = cj.norm();
    }
    return argmax_similarity(dots, norms, h_norm);
}

std::vector<int> predict_all(const HdcModel& model,
                             const std::vector<std::vector<double>>& hs) {
    std::vector<int> out(hs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(hs.size()); ++i) {
        out[static_cast<std::size_t>(i)] = predict(model, hs[static_cast<std::size_t>(i)]);
    }
    return out;
}

double evaluate(const HdcModel& model, const std::vector<std::vector<double>>& hs,
                const std::vector<int>& labels) {
    if (hs.empty() || hs.size() != labels.size()) {
        throw std::invalid_argument("bad evaluation set");
    }
    auto predictions = predict_all(model, hs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(hs.size());
}

namespace {

constexpr char kMagic[4] = {'H', 'D', 'B', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
}

}  // namespace

void save_model(const std::filesystem::path& path, const EncoderBasis& basis,
                const HdcModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kMagic, 4);
    write_raw(out, kVersion);
    write_raw(out, static_cast<std::int32_t>(basis.input_length));
    write_raw(out, static_cast<std::int32_t>(basis.dimension));
    write_raw(out, static_cast<std::uint8_t>(basis.variant));
    write_raw(out, basis.seed);
    write_raw(out, model.config.learning_rate);
    write_raw(out, static_cast<std::int32_t>(model.config.retrain_epochs));
    write_raw(out, static_cast<std::int32_t>(model.num_classes));
    for (const auto& cv : model.class_vectors) {
        out.write(reinterpret_cast<const char*>(cv.data()),
                  static_cast<std::streamsize>(cv.size() * sizeof(double)));
    }
    if (!out) throw DataError("write failed for " + path.string());
}

std::pair<EncoderBasis, HdcModel> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError(path.string() + " is not an HDC model file");
    }
    const auto version = read_raw<std::uint32_t>(in);
    if (version != kVersion) {
        throw DataError("unsupported model version " + std::to_string(version));
    }
    const auto n = read_raw<std::int32_t>(in);
    const auto d = read_raw<std::int32_t>(in);
    const auto variant = static_cast<EncoderVariant>(read_raw<std::uint8_t>(in));
    const auto seed = read_raw<std::uint64_t>(in);
    const auto eta = read_raw<double>(in);
    const auto epochs = read_raw<std::int32_t>(in);
    const auto num_classes = read_raw<std::int32_t>(in);
    if (!in || n < 1 || d < 1 || num_classes < 2) {
        throw DataError("corrupt model header in " + path.string());
    }

    HdcModel model;
    model.num_classes = num_classes;
    model.config.dimension = d;
    model.config.learning_rate = eta;
    model.config.retrain_epochs = epochs;
    model.class_vectors.assign(static_cast<std::size_t>(num_classes),
                               std::vector<double>(static_cast<std::size_t>(d)));
    for (auto& cv : model.class_vectors) {
        in.read(reinterpret_cast<char*>(cv.data()),
                static_cast<std::streamsize>(cv.size() * sizeof(double)));
    }
    if (!in) throw DataError("truncated model file " + path.string());

    return {new_basis(n, d, variant, seed), std::move(model)};
}

}  // namespace hdbench::hdc
