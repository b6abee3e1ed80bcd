#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hdbench::data {

// A set of fixed-length signal windows with integer class labels.
// Invariants: windows.size() == labels.size(); every window has
// window_length samples; every label lies in [0, num_classes).
struct SignalDataset {
    std::vector<std::vector<double>> windows;
    std::vector<int> labels;
    int num_classes = 0;
    int window_length = 0;

    std::size_t size() const { return windows.size(); }
};

struct NormalizationStats {
    double mean = 0.0;
    double std_dev = 1.0;
};

struct LoadResult {
    SignalDataset dataset;
    // Non-fatal findings, e.g. classes with zero samples.
    std::vector<std::string> warnings;
};

// CSV rows are `v1,...,vn,label` with no header. The number of values per
// row is inferred from the first row; ragged rows and non-finite values are
// rejected with the offending row number. num_classes = max label + 1.
LoadResult load_csv(const std::filesystem::path& path);

// Writes the same row format load_csv reads. Values are rendered with
// shortest round-trip precision, so save/load reproduces them exactly.
void save_csv(const std::filesystem::path& path, const SignalDataset& dataset);

// Slices `signal` into windows of length n at offsets 0, stride, 2*stride,...
// while the window fits entirely inside the signal; the remainder is dropped.
std::vector<std::vector<double>> window(const std::vector<double>& signal, int n, int stride);

// window() plus label bookkeeping on an existing dataset.
void append_windows(SignalDataset& dataset, const std::vector<double>& signal,
                    int n, int stride, int label);

// Global z-score stats over every sample of every window of the training set
// (population standard deviation). Throws DataError when the signal is
// constant (std below 1e-12).
NormalizationStats compute_normalization(const SignalDataset& train);

void apply_normalization(SignalDataset& dataset, const NormalizationStats& stats);

// Inverse of apply_normalization, for round-trip checks.
void undo_normalization(SignalDataset& dataset, const NormalizationStats& stats);

// Convenience: compute stats on `train`, apply to train and to every dataset
// in `others`.
NormalizationStats normalize(SignalDataset& train, const std::vector<SignalDataset*>& others = {});

// Stratified subsample of `count` windows: per-class quotas proportional to
// class frequencies, rounded by largest remainder, every class at least one.
// Selection within a class is a seeded shuffle; the output keeps the original
// dataset order (count == size returns the dataset unchanged).
SignalDataset subsample_str(const SignalDataset& train, int count, std::uint64_t seed);

// Synthetic bearing-style signals for desk-scale experiments. Class j is the
// fixed waveform sin(2*pi*f_j*i) plus an impulse train, sampled at
// i = 0..window_length-1, with per-class parameters
//   frequency   f_j = 0.05 + 0.001*j   cycles/sample
//   period      p_j = 50 + 3*j          samples between impulses
//   amplitude   a_j = 0.02 + 0.002*j    impulse height
// Windows within a class differ only by Gaussian noise of the given standard
// deviation, drawn deterministically from `seed`.
SignalDataset synth_generate(int num_classes, int per_class, int window_length,
                             double noise_std, std::uint64_t seed);

}  // namespace hdbench::data
