#include "hdbench/substitute.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "hdbench/common.hpp"

namespace hdbench::substitute {

namespace {

// Cached activations of one forward pass, reused by the backward pass.
struct Trace {
    std::vector<double> conv_wide_pre;   // wide_filters x wide_out
    std::vector<double> pool1_out;       // wide_filters x wide_pooled
    std::vector<int> pool1_arg;          // chosen index within wide_out
    std::vector<double> conv_small_pre;  // small_filters x small_out
    std::vector<double> pool2_out;       // small_filters x small_pooled (the flatten)
    std::vector<int> pool2_arg;
    std::vector<double> dense_pre;       // dense_units
    std::vector<double> dense_act;       // dense_units
    std::vector<double> logits;          // num_classes

    void resize(const NetworkConfig& c, const LayerShapes& s) {
        conv_wide_pre.resize(static_cast<std::size_t>(c.wide_filters) * s.wide_out);
        pool1_out.resize(static_cast<std::size_t>(c.wide_filters) * s.wide_pooled);
        pool1_arg.resize(pool1_out.size());
        conv_small_pre.resize(static_cast<std::size_t>(c.small_filters) * s.small_out);
        pool2_out.resize(static_cast<std::size_t>(c.small_filters) * s.small_pooled);
        pool2_arg.resize(pool2_out.size());
        dense_pre.resize(static_cast<std::size_t>(c.dense_units));
        dense_act.resize(static_cast<std::size_t>(c.dense_units));
        logits.resize(static_cast<std::size_t>(c.num_classes));
    }
};

// relu followed by max pooling; the pool keeps the first maximal element.
void relu_pool(const double* pre, int pooled, int pool_width, double* out, int* arg) {
    for (int t = 0; t < pooled; ++t) {
        const int start = t * pool_width;
        int best_idx = start;
        double best = std::max(0.0, pre[start]);
        for (int k = 1; k < pool_width; ++k) {
            const double v = std::max(0.0, pre[start + k]);
            if (v > best) {
                best = v;
                best_idx = start + k;
            }
        }
        out[t] = best;
        arg[t] = best_idx;
    }
}

void run_forward(const SubstituteNet& net, const LayerShapes& s, const double* x,
                 Trace& tr) {
    const NetworkConfig& c = net.config;
    tr.resize(c, s);

    for (int f = 0; f < c.wide_filters; ++f) {
        const double* w = net.conv_wide_w.data() + static_cast<std::size_t>(f) * c.wide_kernel;
        const double b = net.conv_wide_b[static_cast<std::size_t>(f)];
        double* pre = tr.conv_wide_pre.data() + static_cast<std::size_t>(f) * s.wide_out;
        for (int t = 0; t < s.wide_out; ++t) {
            double acc = b;
            for (int k = 0; k < c.wide_kernel; ++k) acc += w[k] * x[t + k];
            pre[t] = acc;
        }
        relu_pool(pre, s.wide_pooled, c.pool_width,
                  tr.pool1_out.data() + static_cast<std::size_t>(f) * s.wide_pooled,
                  tr.pool1_arg.data() + static_cast<std::size_t>(f) * s.wide_pooled);
    }

    for (int g = 0; g < c.small_filters; ++g) {
        double* pre = tr.conv_small_pre.data() + static_cast<std::size_t>(g) * s.small_out;
        const double b = net.conv_small_b[static_cast<std::size_t>(g)];
        for (int t = 0; t < s.small_out; ++t) pre[t] = b;
        for (int f = 0; f < c.wide_filters; ++f) {
            const double* w = net.conv_small_w.data() +
                              (static_cast<std::size_t>(g) * c.wide_filters + f) * c.small_kernel;
            const double* in = tr.pool1_out.data() + static_cast<std::size_t>(f) * s.wide_pooled;
            for (int t = 0; t < s.small_out; ++t) {
                double acc = 0.0;
                for (int k = 0; k < c.small_kernel; ++k) acc += w[k] * in[t + k];
                pre[t] += acc;
            }
        }
        relu_pool(pre, s.small_pooled, c.pool_width,
                  tr.pool2_out.data() + static_cast<std::size_t>(g) * s.small_pooled,
                  tr.pool2_arg.data() + static_cast<std::size_t>(g) * s.small_pooled);
    }

    const double* z = tr.pool2_out.data();
    for (int u = 0; u < c.dense_units; ++u) {
        const double* w = net.dense_hidden_w.data() + static_cast<std::size_t>(u) * s.flat;
        double acc = net.dense_hidden_b[static_cast<std::size_t>(u)];
        for (int i = 0; i < s.flat; ++i) acc += w[i] * z[i];
        tr.dense_pre[static_cast<std::size_t>(u)] = acc;
        tr.dense_act[static_cast<std::size_t>(u)] = std::max(0.0, acc);
    }
    for (int cl = 0; cl < c.num_classes; ++cl) {
        const double* w = net.dense_out_w.data() + static_cast<std::size_t>(cl) * c.dense_units;
        double acc = net.dense_out_b[static_cast<std::size_t>(cl)];
        for (int u = 0; u < c.dense_units; ++u) acc += w[u] * tr.dense_act[static_cast<std::size_t>(u)];
        tr.logits[static_cast<std::size_t>(cl)] = acc;
    }
}

// Numerically stable softmax cross-entropy; optionally fills d(loss)/d(logits).
double softmax_ce(const std::vector<double>& logits, int label, std::vector<double>* dlogits) {
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - max_logit);
    const double lse = max_logit + std::log(sum);
    if (dlogits) {
        dlogits->resize(logits.size());
        for (std::size_t c = 0; c < logits.size(); ++c) {
            (*dlogits)[c] = std::exp(logits[c] - lse) -
                            (static_cast<int>(c) == label ? 1.0 : 0.0);
        }
    }
    return lse - logits[static_cast<std::size_t>(label)];
}

void zero_bundle_params(const NetworkConfig& c, const LayerShapes& s, GradientBundle& g) {
    g.conv_wide_w.assign(static_cast<std::size_t>(c.wide_filters) * c.wide_kernel, 0.0);
    g.conv_wide_b.assign(static_cast<std::size_t>(c.wide_filters), 0.0);
    g.conv_small_w.assign(
        static_cast<std::size_t>(c.small_filters) * c.wide_filters * c.small_kernel, 0.0);
    g.conv_small_b.assign(static_cast<std::size_t>(c.small_filters), 0.0);
    g.dense_hidden_w.assign(static_cast<std::size_t>(c.dense_units) * s.flat, 0.0);
    g.dense_hidden_b.assign(static_cast<std::size_t>(c.dense_units), 0.0);
    g.dense_out_w.assign(static_cast<std::size_t>(c.num_classes) * c.dense_units, 0.0);
    g.dense_out_b.assign(static_cast<std::size_t>(c.num_classes), 0.0);
}

// Reverse pass from d(loss)/d(logits). Parameter gradients and the input
// gradient are each optional so the attack path can skip the former and the
// training path the latter.
void run_backward(const SubstituteNet& net, const LayerShapes& s, const double* x,
                  const Trace& tr, const std::vector<double>& dlogits,
                  GradientBundle* param_grads, std::vector<double>* input_grad) {
    const NetworkConfig& c = net.config;

    // dense out -> hidden activation
    std::vector<double> dact(static_cast<std::size_t>(c.dense_units), 0.0);
    for (int cl = 0; cl < c.num_classes; ++cl) {
        const double d = dlogits[static_cast<std::size_t>(cl)];
        const double* w = net.dense_out_w.data() + static_cast<std::size_t>(cl) * c.dense_units;
        if (param_grads) {
            param_grads->dense_out_b[static_cast<std::size_t>(cl)] += d;
            double* gw = param_grads->dense_out_w.data() +
                         static_cast<std::size_t>(cl) * c.dense_units;
            for (int u = 0; u < c.dense_units; ++u) {
                gw[u] += d * tr.dense_act[static_cast<std::size_t>(u)];
            }
        }
        for (int u = 0; u < c.dense_units; ++u) dact[static_cast<std::size_t>(u)] += w[u] * d;
    }

    // hidden relu + dense hidden -> flatten
    std::vector<double> dz(static_cast<std::size_t>(s.flat), 0.0);
    for (int u = 0; u < c.dense_units; ++u) {
        if (tr.dense_pre[static_cast<std::size_t>(u)] <= 0.0) continue;
        const double d = dact[static_cast<std::size_t>(u)];
        const double* w = net.dense_hidden_w.data() + static_cast<std::size_t>(u) * s.flat;
        if (param_grads) {
            param_grads->dense_hidden_b[static_cast<std::size_t>(u)] += d;
            double* gw = param_grads->dense_hidden_w.data() + static_cast<std::size_t>(u) * s.flat;
            for (int i = 0; i < s.flat; ++i) gw[i] += d * tr.pool2_out[static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < s.flat; ++i) dz[static_cast<std::size_t>(i)] += w[i] * d;
    }

    // unpool + relu into the small conv pre-activations
    std::vector<double> dpre2(tr.conv_small_pre.size(), 0.0);
    for (int g = 0; g < c.small_filters; ++g) {
        for (int t = 0; t < s.small_pooled; ++t) {
            const std::size_t pooled_idx = static_cast<std::size_t>(g) * s.small_pooled + t;
            const int src = tr.pool2_arg[pooled_idx];
            if (tr.conv_small_pre[static_cast<std::size_t>(g) * s.small_out + src] > 0.0) {
                dpre2[static_cast<std::size_t>(g) * s.small_out + src] += dz[pooled_idx];
            }
        }
    }

    // small conv backward
    std::vector<double> dpool1(tr.pool1_out.size(), 0.0);
    for (int g = 0; g < c.small_filters; ++g) {
        const double* d = dpre2.data() + static_cast<std::size_t>(g) * s.small_out;
        if (param_grads) {
            double acc = 0.0;
            for (int t = 0; t < s.small_out; ++t) acc += d[t];
            param_grads->conv_small_b[static_cast<std::size_t>(g)] += acc;
        }
        for (int f = 0; f < c.wide_filters; ++f) {
            const std::size_t w_base =
                (static_cast<std::size_t>(g) * c.wide_filters + f) * c.small_kernel;
            const double* in = tr.pool1_out.data() + static_cast<std::size_t>(f) * s.wide_pooled;
            double* dout = dpool1.data() + static_cast<std::size_t>(f) * s.wide_pooled;
            const double* w = net.conv_small_w.data() + w_base;
            for (int t = 0; t < s.small_out; ++t) {
                const double dt = d[t];
                if (dt == 0.0) continue;
                for (int k = 0; k < c.small_kernel; ++k) {
                    if (param_grads) param_grads->conv_small_w[w_base + k] += dt * in[t + k];
                    dout[t + k] += w[k] * dt;
                }
            }
        }
    }

    // unpool + relu into the wide conv pre-activations
    std::vector<double> dpre1(tr.conv_wide_pre.size(), 0.0);
    for (int f = 0; f < c.wide_filters; ++f) {
        for (int t = 0; t < s.wide_pooled; ++t) {
            const std::size_t pooled_idx = static_cast<std::size_t>(f) * s.wide_pooled + t;
            const int src = tr.pool1_arg[pooled_idx];
            if (tr.conv_wide_pre[static_cast<std::size_t>(f) * s.wide_out + src] > 0.0) {
                dpre1[static_cast<std::size_t>(f) * s.wide_out + src] += dpool1[pooled_idx];
            }
        }
    }

    // wide conv backward
    if (input_grad) input_grad->assign(static_cast<std::size_t>(c.input_length), 0.0);
    for (int f = 0; f < c.wide_filters; ++f) {
        const double* d = dpre1.data() + static_cast<std::size_t>(f) * s.wide_out;
        const double* w = net.conv_wide_w.data() + static_cast<std::size_t>(f) * c.wide_kernel;
        if (param_grads) {
            double acc = 0.0;
            for (int t = 0; t < s.wide_out; ++t) acc += d[t];
            param_grads->conv_wide_b[static_cast<std::size_t>(f)] += acc;
        }
        for (int t = 0; t < s.wide_out; ++t) {
            const double dt = d[t];
            if (dt == 0.0) continue;
            if (param_grads) {
                double* gw = param_grads->conv_wide_w.data() +
                             static_cast<std::size_t>(f) * c.wide_kernel;
                for (int k = 0; k < c.wide_kernel; ++k) gw[k] += dt * x[t + k];
            }
            if (input_grad) {
                double* gx = input_grad->data();
                for (int k = 0; k < c.wide_kernel; ++k) gx[t + k] += w[k] * dt;
            }
        }
    }
}

void check_sample(const NetworkConfig& c, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != c.input_length) {
        throw std::invalid_argument("input length " + std::to_string(x.size()) +
                                    " does not match network input_length " +
                                    std::to_string(c.input_length));
    }
}

void check_label(const NetworkConfig& c, int label) {
    if (label < 0 || label >= c.num_classes) {
        throw std::invalid_argument("label " + std::to_string(label) + " out of range");
    }
}

int argmax_lowest(const std::vector<double>& values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

// ---- Adam ---------------------------------------------------------------

struct ParamRefs {
    std::array<std::vector<double>*, 8> params;
    std::array<const std::vector<double>*, 8> grads;
};

ParamRefs make_refs(SubstituteNet& net, const GradientBundle& g) {
    return ParamRefs{
        {&net.conv_wide_w, &net.conv_wide_b, &net.conv_small_w, &net.conv_small_b,
         &net.dense_hidden_w, &net.dense_hidden_b, &net.dense_out_w, &net.dense_out_b},
        {&g.conv_wide_w, &g.conv_wide_b, &g.conv_small_w, &g.conv_small_b,
         &g.dense_hidden_w, &g.dense_hidden_b, &g.dense_out_w, &g.dense_out_b}};
}

struct AdamState {
    std::array<std::vector<double>, 8> m;
    std::array<std::vector<double>, 8> v;
    long step = 0;

    void init(const SubstituteNet& net, const GradientBundle& g) {
        auto refs = make_refs(const_cast<SubstituteNet&>(net), g);
        for (std::size_t i = 0; i < 8; ++i) {
            m[i].assign(refs.params[i]->size(), 0.0);
            v[i].assign(refs.params[i]->size(), 0.0);
        }
    }

    void apply(SubstituteNet& net, const GradientBundle& g, const TrainConfig& tc) {
        ++step;
        const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
        auto refs = make_refs(net, g);
        for (std::size_t i = 0; i < 8; ++i) {
            auto& p = *refs.params[i];
            const auto& gr = *refs.grads[i];
            for (std::size_t k = 0; k < p.size(); ++k) {
                m[i][k] = tc.beta1 * m[i][k] + (1.0 - tc.beta1) * gr[k];
                v[i][k] = tc.beta2 * v[i][k] + (1.0 - tc.beta2) * gr[k] * gr[k];
                const double m_hat = m[i][k] / bc1;
                const double v_hat = v[i][k] / bc2;
                p[k] -= tc.learning_rate * m_hat / (std::sqrt(v_hat) + tc.eps_stab);
            }
        }
    }
};

void accumulate(GradientBundle& dst, const GradientBundle& src) {
    auto add = [](std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    add(dst.conv_wide_w, src.conv_wide_w);
    add(dst.conv_wide_b, src.conv_wide_b);
    add(dst.conv_small_w, src.conv_small_w);
    add(dst.conv_small_b, src.conv_small_b);
    add(dst.dense_hidden_w, src.dense_hidden_w);
    add(dst.dense_hidden_b, src.dense_hidden_b);
    add(dst.dense_out_w, src.dense_out_w);
    add(dst.dense_out_b, src.dense_out_b);
}

void scale(GradientBundle& g, double s) {
    for (auto* arr : {&g.conv_wide_w, &g.conv_wide_b, &g.conv_small_w, &g.conv_small_b,
                      &g.dense_hidden_w, &g.dense_hidden_b, &g.dense_out_w, &g.dense_out_b}) {
        for (double& v : *arr) v *= s;
    }
}

}  // namespace

LayerShapes compute_shapes(const NetworkConfig& c) {
    if (c.input_length < 1 || c.wide_kernel < 1 || c.wide_filters < 1 || c.small_kernel < 1 ||
        c.small_filters < 1 || c.pool_width < 1 || c.dense_units < 1 || c.num_classes < 1) {
        throw ConfigError("all network sizes must be >= 1");
    }
    if (c.wide_kernel > c.input_length) {
        throw ConfigError("wide_kernel " + std::to_string(c.wide_kernel) +
                          " exceeds input_length " + std::to_string(c.input_length));
    }
    LayerShapes s;
    s.wide_out = c.input_length - c.wide_kernel + 1;
    s.wide_pooled = s.wide_out / c.pool_width;
    if (s.wide_pooled < 1) throw ConfigError("wide stage collapses below length 1 after pooling");
    if (c.small_kernel > s.wide_pooled) {
        throw ConfigError("small_kernel exceeds pooled wide stage length " +
                          std::to_string(s.wide_pooled));
    }
    s.small_out = s.wide_pooled - c.small_kernel + 1;
    s.small_pooled = s.small_out / c.pool_width;
    if (s.small_pooled < 1) throw ConfigError("small stage collapses below length 1 after pooling");
    s.flat = c.small_filters * s.small_pooled;
    return s;
}

SubstituteNet init_net(const NetworkConfig& config) {
    const LayerShapes s = compute_shapes(config);
    SubstituteNet net;
    net.config = config;
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto fill = [&](std::vector<double>& w, std::size_t count, int fan_in) {
        const double scale_factor = std::sqrt(2.0 / static_cast<double>(fan_in));
        w.resize(count);
        for (double& v : w) v = scale_factor * normal(rng);
    };
    fill(net.conv_wide_w, static_cast<std::size_t>(config.wide_filters) * config.wide_kernel,
         config.wide_kernel);
    fill(net.conv_small_w,
         static_cast<std::size_t>(config.small_filters) * config.wide_filters * config.small_kernel,
         config.wide_filters * config.small_kernel);
    fill(net.dense_hidden_w, static_cast<std::size_t>(config.dense_units) * s.flat, s.flat);
    fill(net.dense_out_w, static_cast<std::size_t>(config.num_classes) * config.dense_units,
         config.dense_units);
    net.conv_wide_b.assign(static_cast<std::size_t>(config.wide_filters), 0.0);
    net.conv_small_b.assign(static_cast<std::size_t>(config.small_filters), 0.0);
    net.dense_hidden_b.assign(static_cast<std::size_t>(config.dense_units), 0.0);
    net.dense_out_b.assign(static_cast<std::size_t>(config.num_classes), 0.0);
    return net;
}

std::vector<double> forward(const SubstituteNet& net, const std::vector<double>& x) {
    check_sample(net.config, x);
    const LayerShapes s = compute_shapes(net.config);
    Trace tr;
    run_forward(net, s, x.data(), tr);
    return tr.logits;
}

int predict(const SubstituteNet& net, const std::vector<double>& x) {
    return argmax_lowest(forward(net, x));
}

double loss(const SubstituteNet& net, const std::vector<double>& x, int label) {
    check_sample(net.config, x);
    check_label(net.config, label);
    const LayerShapes s = compute_shapes(net.config);
    Trace tr;
    run_forward(net, s, x.data(), tr);
    return softmax_ce(tr.logits, label, nullptr);
}

GradientBundle backward(const SubstituteNet& net, const std::vector<double>& x, int label) {
    check_sample(net.config, x);
    check_label(net.config, label);
    const LayerShapes s = compute_shapes(net.config);
    Trace tr;
    run_forward(net, s, x.data(), tr);
    std::vector<double> dlogits;
    softmax_ce(tr.logits, label, &dlogits);
    GradientBundle g;
    zero_bundle_params(net.config, s, g);
    run_backward(net, s, x.data(), tr, dlogits, &g, &g.input_grad);
    return g;
}

std::vector<double> input_gradient(const SubstituteNet& net, const std::vector<double>& x,
                                   int label) {
    check_sample(net.config, x);
    check_label(net.config, label);
    const LayerShapes s = compute_shapes(net.config);
    Trace tr;
    run_forward(net, s, x.data(), tr);
    std::vector<double> dlogits;
    softmax_ce(tr.logits, label, &dlogits);
    std::vector<double> grad;
    run_backward(net, s, x.data(), tr, dlogits, nullptr, &grad);
    return grad;
}

double evaluate(const SubstituteNet& net, const std::vector<std::vector<double>>& xs,
                const std::vector<int>& ys) {
    if (xs.empty() || xs.size() != ys.size()) throw std::invalid_argument("bad evaluation set");
    const LayerShapes s = compute_shapes(net.config);
    for (const auto& x : xs) check_sample(net.config, x);
    std::size_t correct = 0;
    Trace tr;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        run_forward(net, s, xs[i].data(), tr);
        if (argmax_lowest(tr.logits) == ys[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(xs.size());
}

double mean_loss(const SubstituteNet& net, const std::vector<std::vector<double>>& xs,
                 const std::vector<int>& ys) {
    if (xs.empty() || xs.size() != ys.size()) throw std::invalid_argument("bad evaluation set");
    const LayerShapes s = compute_shapes(net.config);
    double total = 0.0;
    Trace tr;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        check_sample(net.config, xs[i]);
        check_label(net.config, ys[i]);
        run_forward(net, s, xs[i].data(), tr);
        total += softmax_ce(tr.logits, ys[i], nullptr);
    }
    return total / static_cast<double>(xs.size());
}

namespace detail {

TrainResult train_with_transform(SubstituteNet net,
                                 const std::vector<std::vector<double>>& xs,
                                 const std::vector<int>& ys, const TrainConfig& tc,
                                 const InstanceTransform* transform) {
    if (tc.batch_size < 1 || tc.max_epochs < 1) {
        throw std::invalid_argument("batch_size and max_epochs must be >= 1");
    }
    if (tc.validation_fraction <= 0.0 || tc.validation_fraction >= 1.0) {
        throw std::invalid_argument("validation_fraction must lie in (0, 1)");
    }
    if (tc.patience < 0 || tc.patience > tc.max_epochs) {
        throw std::invalid_argument("patience must lie in [0, max_epochs]");
    }
    const std::size_t n = xs.size();
    if (n != ys.size()) throw std::invalid_argument("xs/ys size mismatch");
    if (n < 2 * static_cast<std::size_t>(tc.batch_size)) {
        throw TrainingError("dataset too small: need at least twice the batch size");
    }
    std::vector<bool> seen(static_cast<std::size_t>(net.config.num_classes), false);
    for (std::size_t i = 0; i < n; ++i) {
        check_sample(net.config, xs[i]);
        check_label(net.config, ys[i]);
        seen[static_cast<std::size_t>(ys[i])] = true;
    }
    if (std::count(seen.begin(), seen.end(), true) < 2) {
        throw TrainingError("degenerate dataset: fewer than 2 classes present");
    }

    const LayerShapes shapes = compute_shapes(net.config);
    std::mt19937_64 rng(tc.seed);

    // Validation split: seeded shuffle, first chunk held out.
    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    std::shuffle(indices.begin(), indices.end(), rng);
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * tc.validation_fraction)));
    std::vector<std::size_t> val_idx(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(indices.begin() + static_cast<std::ptrdiff_t>(n_val), indices.end());
    if (train_idx.empty()) throw TrainingError("validation split leaves no training data");

    GradientBundle batch_grad;
    zero_bundle_params(net.config, shapes, batch_grad);
    AdamState adam;
    adam.init(net, batch_grad);

    const std::size_t batch_size = static_cast<std::size_t>(tc.batch_size);
    std::vector<GradientBundle> sample_grads(batch_size);
    std::vector<double> sample_losses(batch_size, 0.0);
    std::vector<std::vector<double>> batch_inputs(batch_size);

    TrainResult result;
    SubstituteNet best = net;
    double best_val = -1.0;
    int stale_epochs = 0;

    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < train_idx.size(); start += batch_size) {
            const std::size_t count = std::min(batch_size, train_idx.size() - start);
            // The transform (if any) sees the pre-update parameters for the
            // whole minibatch.
            for (std::size_t b = 0; b < count; ++b) {
                const std::size_t idx = train_idx[start + b];
                batch_inputs[b] = transform ? (*transform)(net, xs[idx], ys[idx]) : xs[idx];
            }
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(count); ++b) {
                const std::size_t idx = train_idx[start + static_cast<std::size_t>(b)];
                auto& g = sample_grads[static_cast<std::size_t>(b)];
                zero_bundle_params(net.config, shapes, g);
                static thread_local Trace tr;
                run_forward(net, shapes, batch_inputs[static_cast<std::size_t>(b)].data(), tr);
                std::vector<double> dlogits;
                sample_losses[static_cast<std::size_t>(b)] =
                    softmax_ce(tr.logits, ys[idx], &dlogits);
                run_backward(net, shapes, batch_inputs[static_cast<std::size_t>(b)].data(), tr,
                             dlogits, &g, nullptr);
            }
            zero_bundle_params(net.config, shapes, batch_grad);
            for (std::size_t b = 0; b < count; ++b) {  // fixed-order sum
                accumulate(batch_grad, sample_grads[b]);
                epoch_loss += sample_losses[b];
            }
            scale(batch_grad, 1.0 / static_cast<double>(count));
            adam.apply(net, batch_grad, tc);
        }

        // Validation accuracy drives early stopping.
        std::size_t correct = 0;
        Trace tr;
        for (std::size_t idx : val_idx) {
            run_forward(net, shapes, xs[idx].data(), tr);
            if (argmax_lowest(tr.logits) == ys[idx]) ++correct;
        }
        const double val_acc = static_cast<double>(correct) / static_cast<double>(val_idx.size());
        result.history.push_back(
            {epoch_loss / static_cast<double>(train_idx.size()), val_acc});

        if (val_acc > best_val) {
            best_val = val_acc;
            best = net;
            result.best_epoch = epoch;
            stale_epochs = 0;
        } else {
            ++stale_epochs;
        }
        if (stale_epochs >= tc.patience) break;
    }

    result.net = std::move(best);
    return result;
}

}  // namespace detail

TrainResult train(SubstituteNet net, const std::vector<std::vector<double>>& xs,
                  const std::vector<int>& ys, const TrainConfig& config) {
    return detail::train_with_transform(std::move(net), xs, ys, config, nullptr);
}

// ---- checkpoint serialization --------------------------------------------

namespace {

constexpr char kMagic[4] = {'H', 'D', 'B', 'C'};
constexpr std::uint32_t kVersion = 1;

void serialize_net(std::ostream& out, const SubstituteNet& net) {
    out.write(kMagic, 4);
    auto write_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto write_i32 = [&](std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    write_u32(kVersion);
    const NetworkConfig& c = net.config;
    write_i32(c.input_length);
    write_i32(c.wide_kernel);
    write_i32(c.wide_filters);
    write_i32(c.small_kernel);
    write_i32(c.small_filters);
    write_i32(c.pool_width);
    write_i32(c.dense_units);
    write_i32(c.num_classes);
    out.write(reinterpret_cast<const char*>(&c.seed), 8);
    for (const auto* arr :
         {&net.conv_wide_w, &net.conv_wide_b, &net.conv_small_w, &net.conv_small_b,
          &net.dense_hidden_w, &net.dense_hidden_b, &net.dense_out_w, &net.dense_out_b}) {
        out.write(reinterpret_cast<const char*>(arr->data()),
                  static_cast<std::streamsize>(arr->size() * sizeof(double)));
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SubstituteNet& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    serialize_net(out, net);
    if (!out) throw DataError("write failed for " + path.string());
}

SubstituteNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError(path.string() + " is not a substitute checkpoint");
    }
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    NetworkConfig c;
    auto read_i32 = [&]() {
        std::int32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    c.input_length = read_i32();
    c.wide_kernel = read_i32();
    c.wide_filters = read_i32();
    c.small_kernel = read_i32();
    c.small_filters = read_i32();
    c.pool_width = read_i32();
    c.dense_units = read_i32();
    c.num_classes = read_i32();
    in.read(reinterpret_cast<char*>(&c.seed), 8);
    if (!in) throw DataError("corrupt checkpoint header in " + path.string());

    SubstituteNet net = init_net(c);  // validates shapes, then overwritten below
    for (auto* arr : {&net.conv_wide_w, &net.conv_wide_b, &net.conv_small_w, &net.conv_small_b,
                      &net.dense_hidden_w, &net.dense_hidden_b, &net.dense_out_w,
                      &net.dense_out_b}) {
        in.read(reinterpret_cast<char*>(arr->data()),
                static_cast<std::streamsize>(arr->size() * sizeof(double)));
    }
    if (!in) throw DataError("truncated checkpoint file " + path.string());
    return net;
}

std::uint64_t checkpoint_hash(const SubstituteNet& net) {
    std::ostringstream buffer(std::ios::binary);
    serialize_net(buffer, net);
    const std::string bytes = buffer.str();
    return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace hdbench::substitute
