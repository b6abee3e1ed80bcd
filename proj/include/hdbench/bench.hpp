#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdbench/attacks.hpp"
#include "hdbench/data.hpp"
#include "hdbench/hdc.hpp"
#include "hdbench/substitute.hpp"

namespace hdbench::bench {

// ---- resiliency metrics -----------------------------------------------

// Compromise values are capped at this sentinel when the perturbed accuracy
// is zero; rows carrying the sentinel are flagged in the report.
inline constexpr double kCompromiseCap = 1e6;

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// acc_normal / acc_perturbed; acc_normal must be in (0, 1]. Returns
// kCompromiseCap when acc_perturbed is zero.
double compromise(double acc_normal, double acc_perturbed);

// Mean over attacks of acc_normal / perturbed_i, sentinel rule per term.
double mean_compromise(double acc_normal, std::span<const double> perturbed_accs);

// Percent resiliency improvement of the second model over the first:
// 100 * (comp_baseline - comp_hdc) / comp_baseline. Negative when the
// baseline is more resilient.
double improvement(double comp_baseline, double comp_hdc);

// ---- target models ------------------------------------------------------

enum class TargetKind { Hdc, NearestCentroid, SubstituteWhiteBox };

const char* to_string(TargetKind kind);

// Minimal non-gradient target: per-class mean window, predicted by smallest
// Euclidean distance (ties -> lowest class index).
struct NearestCentroid {
    std::vector<std::vector<double>> centroids;
    int num_classes = 0;
};

NearestCentroid train_nearest_centroid(const data::SignalDataset& train);
int predict(const NearestCentroid& model, const std::vector<double>& x);
double evaluate(const NearestCentroid& model, const std::vector<std::vector<double>>& xs,
                const std::vector<int>& ys);

// ---- pipeline configuration and report ----------------------------------

struct RunConfig {
    // Dataset: either a CSV pair `<prefix>_train.csv` / `<prefix>_test.csv`
    // or the synthetic generator.
    std::optional<std::filesystem::path> data_prefix;
    bool synthetic = false;
    int synth_classes = 10;
    int synth_train_per_class = 96;
    int synth_test_per_class = 30;
    int synth_window = 100;
    double synth_noise_std = 0.3;

    int hdc_dimension = 10000;
    double hdc_learning_rate = 0.005;
    int hdc_retrain_epochs = 100;
    hdc::EncoderVariant encoder_variant = hdc::EncoderVariant::PaperProduct;

    substitute::TrainConfig train;
    double epsilon = 0.1;
    int iterations = 100;
    double decay = 1.0;
    std::vector<attacks::AttackMethod> attack_methods = {
        attacks::AttackMethod::Fgsm, attacks::AttackMethod::Bim,
        attacks::AttackMethod::Mim, attacks::AttackMethod::Rom};

    std::vector<int> str_counts = {240, 480, 960};
    int replicates = 1;
    std::uint64_t seed = 1;
};

struct AttackEval {
    std::string attack;
    double acc_perturbed = 0.0;
    double compromise = 0.0;
    bool capped = false;
};

// One (target, STR, replicate) evaluation: a single cached clean accuracy
// shared as numerator across all attacks.
struct TargetCell {
    std::string target;
    int str_count = 0;
    int replicate = 0;
    std::uint64_t seed = 0;
    double acc_normal = 0.0;
    std::vector<AttackEval> attacks;
    double mean_compromise = 0.0;
    double train_seconds = 0.0;
};

struct ImprovementCell {
    std::string baseline;  // the non-HDC target the comparison is against
    int str_count = 0;
    int replicate = 0;  // -1 in aggregates
    double improvement_pct = 0.0;
};

struct ResiliencyReport {
    int schema_version = 1;
    bool incomplete = false;
    std::string error;

    // Run metadata.
    std::uint64_t run_seed = 0;
    int replicates = 0;
    double epsilon = 0.0;
    int iterations = 0;
    double decay = 0.0;
    int hdc_dimension = 0;
    double hdc_learning_rate = 0.0;
    int hdc_retrain_epochs = 0;
    std::string dataset;
    int window_length = 0;
    std::vector<int> str_counts;
    std::vector<std::string> attack_names;
    std::vector<std::string> target_names;
    // Key "str<count>_rep<r>" -> substitute checkpoint hash (hex).
    std::map<std::string, std::string> substitute_checkpoints;

    // Raw per-replicate results plus means over replicates.
    std::vector<TargetCell> cells;
    std::vector<ImprovementCell> improvements;
    std::vector<TargetCell> aggregate_cells;            // replicate == -1
    std::vector<ImprovementCell> aggregate_improvements;
};

// Runs the full black-box transfer pipeline: per replicate and STR count,
// subsample the training set, normalize with subset stats, train the
// substitute (and its robust twin when Rom is requested), craft one perturbed
// test set per attack, train and evaluate every target, and assemble the
// metrics. Stage failures surface as a partial report with `incomplete` set.
ResiliencyReport run_pipeline(const RunConfig& config);

enum class ReportFormat { Json, Csv };

ReportFormat parse_format(std::string_view name);

// JSON keeps the full nested report (round-trippable through load_report);
// CSV flattens the aggregate rows: one row per target x STR x attack with
// columns target,str,attack,acc_normal,acc_perturbed,compromise,
// train_seconds,seed.
void emit_report(const ResiliencyReport& report, ReportFormat format,
                 const std::filesystem::path& path);

std::string report_to_json(const ResiliencyReport& report);
std::string report_to_csv(const ResiliencyReport& report);

ResiliencyReport load_report(const std::filesystem::path& path);
ResiliencyReport report_from_json(const std::string& text);

}  // namespace hdbench::bench
