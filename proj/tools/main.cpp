// Command-line front end: dataset synthesis, substitute/HDC training, attack
// crafting, evaluation, and the full resiliency benchmark.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "hdbench/attacks.hpp"
#include "hdbench/bench.hpp"
#include "hdbench/common.hpp"
#include "hdbench/data.hpp"
#include "hdbench/hdc.hpp"
#include "hdbench/substitute.hpp"

namespace {

using namespace hdbench;

// `--data foo` accepts either a `foo_train.csv`/`foo_test.csv` pair prefix or
// a direct CSV path.
std::filesystem::path resolve_csv(const std::string& data, const char* suffix) {
    const std::string paired = data + suffix;
    if (std::filesystem::exists(paired)) return paired;
    return data;
}

data::SignalDataset load_dataset(const std::string& path_or_prefix, const char* suffix) {
    auto result = data::load_csv(resolve_csv(path_or_prefix, suffix));
    for (const auto& warning : result.warnings) {
        std::cerr << "warning: " << warning << "\n";
    }
    return std::move(result.dataset);
}

void write_norm_stats(const std::filesystem::path& path, const data::NormalizationStats& stats) {
    nlohmann::json j = {{"mean", stats.mean}, {"std_dev", stats.std_dev}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

data::NormalizationStats read_norm_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);
    return {j.at("mean").get<double>(), j.at("std_dev").get<double>()};
}

std::vector<attacks::AttackMethod> parse_attack_list(const std::vector<std::string>& names) {
    std::vector<attacks::AttackMethod> methods;
    for (const auto& name : names) {
        if (name == "none") return {};
        methods.push_back(attacks::parse_attack(name));
    }
    return methods;
}

struct SynthOptions {
    int classes = 10;
    int per_class = 24;
    int test_per_class = 75;
    int window = 100;
    double noise = 0.0;
};

void add_synth_options(CLI::App* cmd, SynthOptions& opts) {
    cmd->add_option("--classes", opts.classes, "Number of fault classes");
    cmd->add_option("--per-class", opts.per_class, "Training windows per class");
    cmd->add_option("--test-per-class", opts.test_per_class, "Test windows per class");
    cmd->add_option("--window", opts.window, "Window length");
    cmd->add_option("--noise", opts.noise, "Gaussian noise standard deviation");
}

int run_cli(int argc, char** argv) {
    CLI::App app{"HDC fault-diagnosis resiliency benchmark"};
    app.require_subcommand(1);

    // ---- synth ----------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset CSV pair");
    synth->set_config("--config");
    std::string synth_out;
    std::uint64_t synth_seed = 1;
    SynthOptions synth_opts;
    synth->add_option("--out", synth_out, "Output prefix")->required();
    synth->add_option("--seed", synth_seed, "RNG seed");
    add_synth_options(synth, synth_opts);
    synth->callback([&] {
        auto train = data::synth_generate(synth_opts.classes, synth_opts.per_class,
                                          synth_opts.window, synth_opts.noise,
                                          derive_seed(synth_seed, "synth-train"));
        auto test = data::synth_generate(synth_opts.classes, synth_opts.test_per_class,
                                         synth_opts.window, synth_opts.noise,
                                         derive_seed(synth_seed, "synth-test"));
        data::save_csv(synth_out + "_train.csv", train);
        data::save_csv(synth_out + "_test.csv", test);
        std::cout << "wrote " << train.size() << " train / " << test.size() << " test windows to "
                  << synth_out << "_{train,test}.csv\n";
    });

    // ---- train-substitute -------------------------------------------------
    auto* train_sub = app.add_subcommand("train-substitute", "Train the substitute network");
    train_sub->set_config("--config");
    std::string ts_data;
    bool ts_synthetic = false;
    SynthOptions ts_synth;
    std::uint64_t ts_seed = 1;
    std::string ts_out;
    int ts_max_epochs = 100;
    double ts_robust = -1.0;
    train_sub->add_option("--data", ts_data, "Dataset prefix or CSV");
    train_sub->add_flag("--synthetic", ts_synthetic, "Use the synthetic generator");
    add_synth_options(train_sub, ts_synth);
    train_sub->add_option("--seed", ts_seed, "RNG seed");
    train_sub->add_option("--out", ts_out, "Checkpoint path")->required();
    train_sub->add_option("--max-epochs", ts_max_epochs, "Epoch cap");
    train_sub->add_option("--robust", ts_robust,
                          "Robust (min-max) training with this FGSM epsilon");
    train_sub->callback([&] {
        data::SignalDataset train;
        if (ts_synthetic) {
            train = data::synth_generate(ts_synth.classes, ts_synth.per_class, ts_synth.window,
                                         ts_synth.noise, derive_seed(ts_seed, "synth-train"));
        } else if (!ts_data.empty()) {
            train = load_dataset(ts_data, "_train.csv");
        } else {
            throw ConfigError("train-substitute needs --data or --synthetic");
        }
        auto stats = data::normalize(train);

        substitute::NetworkConfig net_config;
        net_config.input_length = train.window_length;
        net_config.num_classes = train.num_classes;
        net_config.seed = derive_seed(ts_seed, "subst-init");
        substitute::TrainConfig tc;
        tc.max_epochs = ts_max_epochs;
        tc.seed = derive_seed(ts_seed, "subst-train");

        auto started = std::chrono::steady_clock::now();
        substitute::TrainResult result;
        if (ts_robust >= 0.0) {
            result = attacks::rom_train(train.windows, train.labels, net_config, tc, ts_robust);
        } else {
            result = substitute::train(substitute::init_net(net_config), train.windows,
                                       train.labels, tc);
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

        substitute::save_checkpoint(ts_out, result.net);
        write_norm_stats(ts_out + ".norm.json", stats);
        std::cout << "trained " << result.history.size() << " epochs (best "
                  << result.best_epoch << ", val acc "
                  << result.history[static_cast<std::size_t>(result.best_epoch - 1)].val_accuracy
                  << ") in " << seconds << " s\n"
                  << "checkpoint " << ts_out << " hash "
                  << hex64(substitute::checkpoint_hash(result.net)) << "\n";
    });

    // ---- train-hdc --------------------------------------------------------
    auto* train_hdc = app.add_subcommand("train-hdc", "Train the HDC classifier");
    train_hdc->set_config("--config");
    std::string th_data;
    bool th_synthetic = false;
    SynthOptions th_synth;
    std::uint64_t th_seed = 1;
    std::string th_out;
    int th_dim = 10000;
    int th_epochs = 100;
    double th_lr = 0.005;
    std::string th_variant = "paper_product";
    train_hdc->add_option("--data", th_data, "Dataset prefix or CSV");
    train_hdc->add_flag("--synthetic", th_synthetic, "Use the synthetic generator");
    add_synth_options(train_hdc, th_synth);
    train_hdc->add_option("--seed", th_seed, "RNG seed");
    train_hdc->add_option("--out", th_out, "Model path")->required();
    train_hdc->add_option("--dim", th_dim, "Hypervector dimension");
    train_hdc->add_option("--epochs", th_epochs, "Retraining epochs");
    train_hdc->add_option("--lr", th_lr, "Learning rate");
    train_hdc->add_option("--variant", th_variant, "Encoder: paper_product or standard_rff");
    train_hdc->callback([&] {
        data::SignalDataset train;
        if (th_synthetic) {
            train = data::synth_generate(th_synth.classes, th_synth.per_class, th_synth.window,
                                         th_synth.noise, derive_seed(th_seed, "synth-train"));
        } else if (!th_data.empty()) {
            train = load_dataset(th_data, "_train.csv");
        } else {
            throw ConfigError("train-hdc needs --data or --synthetic");
        }
        auto stats = data::normalize(train);

        hdc::EncoderVariant variant;
        if (th_variant == "paper_product") {
            variant = hdc::EncoderVariant::PaperProduct;
        } else if (th_variant == "standard_rff") {
            variant = hdc::EncoderVariant::StandardRFF;
        } else {
            throw ConfigError("unknown encoder variant '" + th_variant + "'");
        }

        hdc::HdcConfig config;
        config.dimension = th_dim;
        config.learning_rate = th_lr;
        config.retrain_epochs = th_epochs;

        auto started = std::chrono::steady_clock::now();
        auto basis = hdc::new_basis(train.window_length, th_dim, variant,
                                    derive_seed(th_seed, "hdc-basis"));
        auto encoded = hdc::encode_all(basis, train.windows);
        auto model = hdc::train_initial(encoded, train.labels, train.num_classes, config);
        model = hdc::retrain(std::move(model), encoded, train.labels,
                             derive_seed(th_seed, "hdc-shuffle"));
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

        hdc::save_model(th_out, basis, model);
        write_norm_stats(th_out + ".norm.json", stats);
        std::cout << "trained HDC (D=" << th_dim << ", " << th_epochs << " epochs) in "
                  << seconds << " s; train accuracy "
                  << hdc::evaluate(model, encoded, train.labels) << "\n";
    });

    // ---- craft -------------------------------------------------------------
    auto* craft = app.add_subcommand("craft", "Craft adversarial test sets");
    craft->set_config("--config");
    std::string cr_checkpoint, cr_data, cr_out, cr_norm;
    std::vector<std::string> cr_attacks = {"fgsm", "bim", "mim"};
    double cr_epsilon = 0.1, cr_decay = 1.0;
    int cr_iterations = 100;
    craft->add_option("--checkpoint", cr_checkpoint, "Substitute checkpoint")->required();
    craft->add_option("--data", cr_data, "Test dataset prefix or CSV")->required();
    craft->add_option("--out", cr_out, "Output prefix")->required();
    craft->add_option("--norm-stats", cr_norm, "Normalization stats JSON to apply first");
    craft->add_option("--attacks", cr_attacks, "Comma-separated methods (rom = FGSM from a robust checkpoint)")
        ->delimiter(',');
    craft->add_option("--epsilon", cr_epsilon, "Perturbation budget");
    craft->add_option("--iterations", cr_iterations, "Iterations for bim/mim");
    craft->add_option("--decay", cr_decay, "MIM decay factor");
    craft->callback([&] {
        auto net = substitute::load_checkpoint(cr_checkpoint);
        auto test = load_dataset(cr_data, "_test.csv");
        if (!cr_norm.empty()) data::apply_normalization(test, read_norm_stats(cr_norm));
        auto methods = parse_attack_list(cr_attacks);
        if (methods.empty()) throw ConfigError("craft needs at least one attack method");
        for (auto method : methods) {
            attacks::AttackConfig ac;
            ac.method = method;
            ac.epsilon = cr_epsilon;
            ac.iterations = cr_iterations;
            ac.decay = cr_decay;
            auto perturbed = attacks::craft(net, test, ac);
            const std::string path = cr_out + "_" + attacks::to_string(method) + ".csv";
            attacks::save_perturbed(path, perturbed);
            std::cout << "wrote " << perturbed.windows.size() << " windows to " << path << "\n";
        }
    });

    // ---- eval ---------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset");
    eval->set_config("--config");
    std::string ev_checkpoint, ev_hdc_model, ev_data, ev_norm;
    eval->add_option("--checkpoint", ev_checkpoint, "Substitute checkpoint");
    eval->add_option("--hdc-model", ev_hdc_model, "HDC model file");
    eval->add_option("--data", ev_data, "Dataset prefix or CSV")->required();
    eval->add_option("--norm-stats", ev_norm, "Normalization stats JSON to apply first");
    eval->callback([&] {
        auto test = load_dataset(ev_data, "_test.csv");
        if (!ev_norm.empty()) data::apply_normalization(test, read_norm_stats(ev_norm));
        double acc = 0.0;
        if (!ev_checkpoint.empty()) {
            auto net = substitute::load_checkpoint(ev_checkpoint);
            acc = substitute::evaluate(net, test.windows, test.labels);
        } else if (!ev_hdc_model.empty()) {
            auto [basis, model] = hdc::load_model(ev_hdc_model);
            acc = hdc::evaluate(model, hdc::encode_all(basis, test.windows), test.labels);
        } else {
            throw ConfigError("eval needs --checkpoint or --hdc-model");
        }
        std::cout << "accuracy " << acc << "\n";
    });

    // ---- bench ---------------------------------------------------------------
    auto* run_bench = app.add_subcommand("bench", "Run the full resiliency pipeline");
    run_bench->set_config("--config");
    std::string bn_data, bn_out, bn_format = "json";
    bool bn_synthetic = false;
    SynthOptions bn_synth;
    bn_synth.per_class = 96;
    bn_synth.test_per_class = 30;
    bn_synth.noise = 0.3;
    std::uint64_t bn_seed = 1;
    int bn_dim = 10000;
    double bn_epsilon = 0.1, bn_decay = 1.0;
    int bn_iterations = 100;
    std::vector<std::string> bn_attacks = {"fgsm", "bim", "mim", "rom"};
    std::vector<int> bn_str = {240, 480, 960};
    int bn_replicates = 1;
    int bn_max_epochs = 100;
    run_bench->add_option("--data", bn_data, "Dataset prefix");
    run_bench->add_flag("--synthetic", bn_synthetic, "Use the synthetic generator");
    add_synth_options(run_bench, bn_synth);
    run_bench->add_option("--seed", bn_seed, "Run seed");
    run_bench->add_option("--dim", bn_dim, "Hypervector dimension");
    run_bench->add_option("--epsilon", bn_epsilon, "Perturbation budget");
    run_bench->add_option("--iterations", bn_iterations, "Attack iterations");
    run_bench->add_option("--decay", bn_decay, "MIM decay factor");
    run_bench->add_option("--attacks", bn_attacks, "Comma-separated methods, or 'none'")
        ->delimiter(',');
    run_bench->add_option("--str", bn_str, "Comma-separated training sample counts")
        ->delimiter(',');
    run_bench->add_option("--replicates", bn_replicates, "Independent repetitions");
    run_bench->add_option("--max-epochs", bn_max_epochs, "Substitute epoch cap");
    run_bench->add_option("--out", bn_out, "Report path")->required();
    run_bench->add_option("--format", bn_format, "json or csv");
    run_bench->callback([&] {
        bench::RunConfig config;
        if (bn_synthetic) {
            config.synthetic = true;
            config.synth_classes = bn_synth.classes;
            config.synth_train_per_class = bn_synth.per_class;
            config.synth_test_per_class = bn_synth.test_per_class;
            config.synth_window = bn_synth.window;
            config.synth_noise_std = bn_synth.noise;
        } else if (!bn_data.empty()) {
            config.data_prefix = bn_data;
        } else {
            throw ConfigError("bench needs --data or --synthetic");
        }
        config.seed = bn_seed;
        config.hdc_dimension = bn_dim;
        config.epsilon = bn_epsilon;
        config.iterations = bn_iterations;
        config.decay = bn_decay;
        config.attack_methods = parse_attack_list(bn_attacks);
        config.str_counts = bn_str;
        config.replicates = bn_replicates;
        config.train.max_epochs = bn_max_epochs;

        auto report = bench::run_pipeline(config);
        bench::emit_report(report, bench::parse_format(bn_format), bn_out);
        if (report.incomplete) {
            std::cerr << "pipeline incomplete: " << report.error << "\n"
                      << "partial report written to " << bn_out << "\n";
            throw TrainingError(report.error);
        }
        std::cout << "report written to " << bn_out << "\n";
    });

    // ---- report ----------------------------------------------------------------
    auto* rerender = app.add_subcommand("report", "Re-render a JSON report");
    rerender->set_config("--config");
    std::string rp_in, rp_out, rp_format = "csv";
    rerender->add_option("--in", rp_in, "JSON report path")->required();
    rerender->add_option("--out", rp_out, "Output path")->required();
    rerender->add_option("--format", rp_format, "json or csv");
    rerender->callback([&] {
        auto report = bench::load_report(rp_in);
        bench::emit_report(report, bench::parse_format(rp_format), rp_out);
        std::cout << "report written to " << rp_out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
