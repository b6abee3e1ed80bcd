#include "hdbench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "hdbench/common.hpp"

namespace hdbench::bench {

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size()) {
        throw std::invalid_argument("predictions and labels must be non-empty and equal length");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double compromise(double acc_normal, double acc_perturbed) {
    if (!(acc_normal > 0.0) || acc_normal > 1.0) {
        throw std::invalid_argument("undefined baseline: normal accuracy must lie in (0, 1]");
    }
    if (acc_perturbed < 0.0 || acc_perturbed > 1.0) {
        throw std::invalid_argument("perturbed accuracy must lie in [0, 1]");
    }
    if (acc_perturbed == 0.0) return kCompromiseCap;
    return acc_normal / acc_perturbed;
}

double mean_compromise(double acc_normal, std::span<const double> perturbed_accs) {
    if (perturbed_accs.empty()) throw std::invalid_argument("need at least one attack");
    double total = 0.0;
    for (double acc : perturbed_accs) total += compromise(acc_normal, acc);
    return total / static_cast<double>(perturbed_accs.size());
}

double improvement(double comp_baseline, double comp_hdc) {
    if (!(comp_baseline > 0.0)) {
        throw std::invalid_argument("baseline compromise must be > 0");
    }
    return 100.0 * (comp_baseline - comp_hdc) / comp_baseline;
}

const char* to_string(TargetKind kind) {
    switch (kind) {
        case TargetKind::Hdc: return "hdc";
        case TargetKind::NearestCentroid: return "nearest_centroid";
        case TargetKind::SubstituteWhiteBox: return "substitute_whitebox";
    }
    return "unknown";
}

NearestCentroid train_nearest_centroid(const data::SignalDataset& train) {
    if (train.windows.empty()) throw std::invalid_argument("empty training set");
    NearestCentroid model;
    model.num_classes = train.num_classes;
    model.centroids.assign(static_cast<std::size_t>(train.num_classes),
                           std::vector<double>(static_cast<std::size_t>(train.window_length), 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(train.num_classes), 0);
    for (std::size_t i = 0; i < train.windows.size(); ++i) {
        const auto j = static_cast<std::size_t>(train.labels[i]);
        for (std::size_t k = 0; k < train.windows[i].size(); ++k) {
            model.centroids[j][k] += train.windows[i][k];
        }
        counts[j]++;
    }
    for (std::size_t j = 0; j < model.centroids.size(); ++j) {
        if (counts[j] == 0) throw TrainingError("empty class " + std::to_string(j));
        for (double& v : model.centroids[j]) v /= static_cast<double>(counts[j]);
    }
    return model;
}

int predict(const NearestCentroid& model, const std::vector<double>& x) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < model.centroids.size(); ++j) {
        if (model.centroids[j].size() != x.size()) {
            throw std::invalid_argument("window length mismatch");
        }
        double dist = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double d = x[k] - model.centroids[j][k];
            dist += d * d;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = static_cast<int>(j);
        }
    }
    return best;
}

double evaluate(const NearestCentroid& model, const std::vector<std::vector<double>>& xs,
                const std::vector<int>& ys) {
    if (xs.empty() || xs.size() != ys.size()) throw std::invalid_argument("bad evaluation set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (predict(model, xs[i]) == ys[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(xs.size());
}

// ---- pipeline -------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs fn and rewrites any failure as "stage <name>: <what>".
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error("stage " + name + ": " + e.what());
    }
}

std::vector<AttackEval> make_attack_evals(const std::vector<std::string>& names,
                                          double acc_normal,
                                          const std::vector<double>& perturbed_accs) {
    std::vector<AttackEval> evals;
    if (names.empty()) {
        // Clean run: a single pseudo-entry so the compromise algebra stays
        // well-defined (always exactly 1).
        evals.push_back({"none", acc_normal, compromise(acc_normal, acc_normal), false});
        return evals;
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        AttackEval ev;
        ev.attack = names[i];
        ev.acc_perturbed = perturbed_accs[i];
        ev.compromise = compromise(acc_normal, perturbed_accs[i]);
        ev.capped = perturbed_accs[i] == 0.0;
        evals.push_back(std::move(ev));
    }
    return evals;
}

double cell_mean_compromise(const std::vector<AttackEval>& evals) {
    double total = 0.0;
    for (const auto& ev : evals) total += ev.compromise;
    return total / static_cast<double>(evals.size());
}

}  // namespace

ResiliencyReport run_pipeline(const RunConfig& config) {
    ResiliencyReport report;
    report.run_seed = config.seed;
    report.replicates = config.replicates;
    report.epsilon = config.epsilon;
    report.iterations = config.iterations;
    report.decay = config.decay;
    report.hdc_dimension = config.hdc_dimension;
    report.hdc_learning_rate = config.hdc_learning_rate;
    report.hdc_retrain_epochs = config.hdc_retrain_epochs;
    report.str_counts = config.str_counts;
    for (auto method : config.attack_methods) {
        report.attack_names.emplace_back(attacks::to_string(method));
    }
    report.target_names = {to_string(TargetKind::Hdc), to_string(TargetKind::NearestCentroid),
                           to_string(TargetKind::SubstituteWhiteBox)};

    try {
        if (config.replicates < 1) throw std::invalid_argument("replicates must be >= 1");
        if (config.str_counts.empty()) throw std::invalid_argument("need at least one STR count");

        // Load or synthesize the dataset once; STR cells subsample from it.
        data::SignalDataset train_full;
        data::SignalDataset test_full;
        if (config.synthetic) {
            report.dataset = "synthetic";
            train_full = stage("synth", [&] {
                return data::synth_generate(config.synth_classes, config.synth_train_per_class,
                                            config.synth_window, config.synth_noise_std,
                                            derive_seed(config.seed, "synth-train"));
            });
            test_full = stage("synth", [&] {
                return data::synth_generate(config.synth_classes, config.synth_test_per_class,
                                            config.synth_window, config.synth_noise_std,
                                            derive_seed(config.seed, "synth-test"));
            });
        } else if (config.data_prefix) {
            report.dataset = config.data_prefix->string();
            train_full = stage("load", [&] {
                return data::load_csv(config.data_prefix->string() + "_train.csv").dataset;
            });
            test_full = stage("load", [&] {
                return data::load_csv(config.data_prefix->string() + "_test.csv").dataset;
            });
            if (train_full.window_length != test_full.window_length) {
                throw DataError("train/test window lengths differ");
            }
            test_full.num_classes = train_full.num_classes =
                std::max(train_full.num_classes, test_full.num_classes);
        } else {
            throw ConfigError("either a data prefix or --synthetic is required");
        }
        report.window_length = train_full.window_length;
        const int num_classes = train_full.num_classes;

        const bool wants_rom =
            std::find(config.attack_methods.begin(), config.attack_methods.end(),
                      attacks::AttackMethod::Rom) != config.attack_methods.end();

        for (int rep = 0; rep < config.replicates; ++rep) {
            const std::uint64_t rep_seed = derive_seed(config.seed, "replicate", static_cast<std::uint64_t>(rep));
            for (int str_count : config.str_counts) {
                const auto str_u = static_cast<std::uint64_t>(str_count);
                // --- data cell: subsample + normalization from subset stats
                data::SignalDataset subset = stage("subsample", [&] {
                    return data::subsample_str(train_full, str_count,
                                               derive_seed(rep_seed, "subsample", str_u));
                });
                data::SignalDataset test = test_full;
                stage("normalize", [&] {
                    data::normalize(subset, {&test});
                    return 0;
                });

                // --- substitute training
                substitute::NetworkConfig net_config;
                net_config.input_length = subset.window_length;
                net_config.num_classes = num_classes;
                net_config.seed = derive_seed(rep_seed, "subst-init", str_u);
                substitute::TrainConfig train_config = config.train;
                train_config.seed = derive_seed(rep_seed, "subst-train", str_u);

                auto subst_start = Clock::now();
                auto trained = stage("train-substitute", [&] {
                    return substitute::train(substitute::init_net(net_config), subset.windows,
                                             subset.labels, train_config);
                });
                const double subst_seconds = seconds_since(subst_start);
                const std::string cell_key =
                    "str" + std::to_string(str_count) + "_rep" + std::to_string(rep);
                report.substitute_checkpoints[cell_key] =
                    hex64(substitute::checkpoint_hash(trained.net));

                substitute::TrainResult robust;
                if (wants_rom) {
                    substitute::NetworkConfig rom_net = net_config;
                    rom_net.seed = derive_seed(rep_seed, "rom-init", str_u);
                    substitute::TrainConfig rom_tc = train_config;
                    rom_tc.seed = derive_seed(rep_seed, "rom-train", str_u);
                    robust = stage("rom-train", [&] {
                        return attacks::rom_train(subset.windows, subset.labels, rom_net, rom_tc,
                                                  config.epsilon);
                    });
                    report.substitute_checkpoints[cell_key + "_rom"] =
                        hex64(substitute::checkpoint_hash(robust.net));
                }

                // --- craft one perturbed test set per attack
                std::vector<attacks::PerturbedDataset> perturbed;
                for (auto method : config.attack_methods) {
                    attacks::AttackConfig ac;
                    ac.method = method;
                    ac.epsilon = config.epsilon;
                    ac.iterations = config.iterations;
                    ac.decay = config.decay;
                    const auto& crafting_net =
                        method == attacks::AttackMethod::Rom ? robust.net : trained.net;
                    perturbed.push_back(stage("craft", [&] {
                        return attacks::craft(crafting_net, test, ac);
                    }));
                }

                // --- HDC target
                hdc::HdcConfig hdc_config;
                hdc_config.dimension = config.hdc_dimension;
                hdc_config.learning_rate = config.hdc_learning_rate;
                hdc_config.retrain_epochs = config.hdc_retrain_epochs;

                auto hdc_start = Clock::now();
                auto basis = stage("hdc-train", [&] {
                    return hdc::new_basis(subset.window_length, hdc_config.dimension,
                                          config.encoder_variant,
                                          derive_seed(rep_seed, "hdc-basis", str_u));
                });
                auto hdc_model = stage("hdc-train", [&] {
                    auto encoded = hdc::encode_all(basis, subset.windows);
                    auto model = hdc::train_initial(encoded, subset.labels, num_classes, hdc_config);
                    return hdc::retrain(std::move(model), encoded, subset.labels,
                                        derive_seed(rep_seed, "hdc-shuffle", str_u));
                });
                const double hdc_seconds = seconds_since(hdc_start);

                // --- nearest centroid target
                auto nc_start = Clock::now();
                auto centroid_model = stage("centroid-train", [&] {
                    return train_nearest_centroid(subset);
                });
                const double nc_seconds = seconds_since(nc_start);

                // --- evaluations: clean accuracy once per target, then each
                // perturbed set
                auto eval_hdc = [&](const std::vector<std::vector<double>>& windows,
                                    const std::vector<int>& labels) {
                    return hdc::evaluate(hdc_model, hdc::encode_all(basis, windows), labels);
                };
                const double hdc_clean = stage("evaluate", [&] {
                    return eval_hdc(test.windows, test.labels);
                });
                const double nc_clean = stage("evaluate", [&] {
                    return evaluate(centroid_model, test.windows, test.labels);
                });
                const double wb_clean = stage("evaluate", [&] {
                    return substitute::evaluate(trained.net, test.windows, test.labels);
                });

                std::vector<double> hdc_attacked, nc_attacked, wb_attacked;
                for (const auto& p : perturbed) {
                    hdc_attacked.push_back(stage("evaluate", [&] {
                        return eval_hdc(p.windows, p.labels);
                    }));
                    nc_attacked.push_back(stage("evaluate", [&] {
                        return evaluate(centroid_model, p.windows, p.labels);
                    }));
                    wb_attacked.push_back(stage("evaluate", [&] {
                        return substitute::evaluate(trained.net, p.windows, p.labels);
                    }));
                }

                auto push_cell = [&](TargetKind kind, double clean,
                                     const std::vector<double>& attacked, double train_seconds) {
                    TargetCell cell;
                    cell.target = to_string(kind);
                    cell.str_count = str_count;
                    cell.replicate = rep;
                    cell.seed = rep_seed;
                    cell.acc_normal = clean;
                    cell.attacks = stage("metrics", [&] {
                        return make_attack_evals(report.attack_names, clean, attacked);
                    });
                    cell.mean_compromise = cell_mean_compromise(cell.attacks);
                    cell.train_seconds = train_seconds;
                    report.cells.push_back(std::move(cell));
                };
                push_cell(TargetKind::Hdc, hdc_clean, hdc_attacked, hdc_seconds);
                push_cell(TargetKind::NearestCentroid, nc_clean, nc_attacked, nc_seconds);
                push_cell(TargetKind::SubstituteWhiteBox, wb_clean, wb_attacked, subst_seconds);

                const double mc_hdc = report.cells[report.cells.size() - 3].mean_compromise;
                const double mc_nc = report.cells[report.cells.size() - 2].mean_compromise;
                const double mc_wb = report.cells[report.cells.size() - 1].mean_compromise;
                report.improvements.push_back({to_string(TargetKind::NearestCentroid), str_count,
                                               rep, improvement(mc_nc, mc_hdc)});
                report.improvements.push_back({to_string(TargetKind::SubstituteWhiteBox),
                                               str_count, rep, improvement(mc_wb, mc_hdc)});
            }
        }
    } catch (const std::exception& e) {
        report.incomplete = true;
        report.error = e.what();
        return report;
    }

    // Canonical order: target, then STR, then replicate.
    auto target_rank = [&](const std::string& name) {
        return std::find(report.target_names.begin(), report.target_names.end(), name) -
               report.target_names.begin();
    };
    std::sort(report.cells.begin(), report.cells.end(), [&](const auto& a, const auto& b) {
        return std::tuple(target_rank(a.target), a.str_count, a.replicate) <
               std::tuple(target_rank(b.target), b.str_count, b.replicate);
    });
    std::sort(report.improvements.begin(), report.improvements.end(),
              [&](const auto& a, const auto& b) {
                  return std::tuple(target_rank(a.baseline), a.str_count, a.replicate) <
                         std::tuple(target_rank(b.baseline), b.str_count, b.replicate);
              });

    // Means over replicates.
    for (const auto& target : report.target_names) {
        for (int str_count : report.str_counts) {
            TargetCell agg;
            agg.target = target;
            agg.str_count = str_count;
            agg.replicate = -1;
            agg.seed = report.run_seed;
            int found = 0;
            for (const auto& cell : report.cells) {
                if (cell.target != target || cell.str_count != str_count) continue;
                ++found;
                agg.acc_normal += cell.acc_normal;
                agg.mean_compromise += cell.mean_compromise;
                agg.train_seconds += cell.train_seconds;
                if (agg.attacks.empty()) {
                    agg.attacks = cell.attacks;
                } else {
                    for (std::size_t i = 0; i < agg.attacks.size(); ++i) {
                        agg.attacks[i].acc_perturbed += cell.attacks[i].acc_perturbed;
                        agg.attacks[i].compromise += cell.attacks[i].compromise;
                        agg.attacks[i].capped = agg.attacks[i].capped || cell.attacks[i].capped;
                    }
                }
            }
            if (found == 0) continue;
            const double inv = 1.0 / found;
            agg.acc_normal *= inv;
            agg.mean_compromise *= inv;
            agg.train_seconds *= inv;
            for (auto& ev : agg.attacks) {
                ev.acc_perturbed *= inv;
                ev.compromise *= inv;
            }
            report.aggregate_cells.push_back(std::move(agg));
        }
    }
    for (const auto& baseline :
         {to_string(TargetKind::NearestCentroid), to_string(TargetKind::SubstituteWhiteBox)}) {
        for (int str_count : report.str_counts) {
            double total = 0.0;
            int found = 0;
            for (const auto& imp : report.improvements) {
                if (imp.baseline != baseline || imp.str_count != str_count) continue;
                total += imp.improvement_pct;
                ++found;
            }
            if (found == 0) continue;
            report.aggregate_improvements.push_back(
                {baseline, str_count, -1, total / found});
        }
    }
    return report;
}

}  // namespace hdbench::bench
