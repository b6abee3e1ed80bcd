#include "hdbench/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "hdbench/common.hpp"

namespace hdbench::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

double parse_double(std::string_view token, std::size_t row) {
    double value = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw DataError("row " + std::to_string(row) + ": cannot parse value '" +
                        std::string(token) + "'");
    }
    return value;
}

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

}  // namespace

LoadResult load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    LoadResult result;
    SignalDataset& ds = result.dataset;
    std::string line;
    std::size_t row = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tokens = split_csv(line);
        if (tokens.size() < 2) {
            throw DataError("row " + std::to_string(row) + ": expected values and a label");
        }
        const int n = static_cast<int>(tokens.size()) - 1;
        if (ds.window_length == 0) {
            ds.window_length = n;
        } else if (n != ds.window_length) {
            throw DataError("row " + std::to_string(row) + ": ragged row, expected " +
                            std::to_string(ds.window_length) + " values, got " +
                            std::to_string(n));
        }
        std::vector<double> values(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            values[static_cast<std::size_t>(i)] = parse_double(tokens[static_cast<std::size_t>(i)], row);
            if (!std::isfinite(values[static_cast<std::size_t>(i)])) {
                throw DataError("row " + std::to_string(row) + ": non-finite value");
            }
        }
        int label = 0;
        auto tok = tokens.back();
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), label);
        if (ec != std::errc{} || ptr != tok.data() + tok.size() || label < 0) {
            throw DataError("row " + std::to_string(row) + ": bad label '" + std::string(tok) + "'");
        }
        max_label = std::max(max_label, label);
        ds.windows.push_back(std::move(values));
        ds.labels.push_back(label);
    }
    if (ds.windows.empty()) {
        throw DataError("no rows in " + path.string());
    }
    ds.num_classes = max_label + 1;
    std::vector<std::size_t> counts(static_cast<std::size_t>(ds.num_classes), 0);
    for (int label : ds.labels) counts[static_cast<std::size_t>(label)]++;
    for (int j = 0; j < ds.num_classes; ++j) {
        if (counts[static_cast<std::size_t>(j)] == 0) {
            result.warnings.push_back("class " + std::to_string(j) + " has zero samples");
        }
    }
    return result;
}

void save_csv(const std::filesystem::path& path, const SignalDataset& dataset) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    for (std::size_t i = 0; i < dataset.windows.size(); ++i) {
        std::string line;
        for (double v : dataset.windows[i]) {
            line += format_double(v);
            line += ',';
        }
        line += std::to_string(dataset.labels[i]);
        line += '\n';
        out << line;
    }
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

std::vector<std::vector<double>> window(const std::vector<double>& signal, int n, int stride) {
    if (n < 1) throw std::invalid_argument("window length must be >= 1");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    if (signal.size() < static_cast<std::size_t>(n)) {
        throw std::invalid_argument("signal shorter than window length: no windows");
    }
    std::vector<std::vector<double>> out;
    for (std::size_t start = 0; start + static_cast<std::size_t>(n) <= signal.size();
         start += static_cast<std::size_t>(stride)) {
        out.emplace_back(signal.begin() + static_cast<std::ptrdiff_t>(start),
                         signal.begin() + static_cast<std::ptrdiff_t>(start) + n);
    }
    return out;
}

void append_windows(SignalDataset& dataset, const std::vector<double>& signal,
                    int n, int stride, int label) {
    if (label < 0) throw std::invalid_argument("label must be non-negative");
    if (dataset.window_length == 0) dataset.window_length = n;
    if (dataset.window_length != n) {
        throw std::invalid_argument("window length mismatch with dataset");
    }
    auto ws = window(signal, n, stride);
    for (auto& w : ws) {
        dataset.windows.push_back(std::move(w));
        dataset.labels.push_back(label);
    }
    dataset.num_classes = std::max(dataset.num_classes, label + 1);
}

NormalizationStats compute_normalization(const SignalDataset& train) {
    if (train.windows.empty()) throw std::invalid_argument("empty training set");
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& w : train.windows) {
        for (double v : w) sum += v;
        count += w.size();
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (const auto& w : train.windows) {
        for (double v : w) sq += (v - mean) * (v - mean);
    }
    const double std_dev = std::sqrt(sq / static_cast<double>(count));
    if (std_dev < 1e-12) {
        throw DataError("degenerate training signal: standard deviation below 1e-12");
    }
    return {mean, std_dev};
}

void apply_normalization(SignalDataset& dataset, const NormalizationStats& stats) {
    for (auto& w : dataset.windows) {
        for (double& v : w) v = (v - stats.mean) / stats.std_dev;
    }
}

void undo_normalization(SignalDataset& dataset, const NormalizationStats& stats) {
    for (auto& w : dataset.windows) {
        for (double& v : w) v = v * stats.std_dev + stats.mean;
    }
}

NormalizationStats normalize(SignalDataset& train, const std::vector<SignalDataset*>& others) {
    auto stats = compute_normalization(train);
    apply_normalization(train, stats);
    for (SignalDataset* ds : others) apply_normalization(*ds, stats);
    return stats;
}

SignalDataset subsample_str(const SignalDataset& train, int count, std::uint64_t seed) {
    const int total = static_cast<int>(train.size());
    const int J = train.num_classes;
    if (count < J) {
        throw std::invalid_argument("subsample count " + std::to_string(count) +
                                    " below class count " + std::to_string(J));
    }
    if (count > total) {
        throw std::invalid_argument("subsample count exceeds dataset size");
    }

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(J));
    for (std::size_t i = 0; i < train.labels.size(); ++i) {
        by_class[static_cast<std::size_t>(train.labels[i])].push_back(i);
    }

    // Largest-remainder apportionment of `count` across classes.
    std::vector<int> quota(static_cast<std::size_t>(J), 0);
    std::vector<std::pair<double, int>> remainders;  // (-remainder, class)
    int assigned = 0;
    for (int j = 0; j < J; ++j) {
        const double exact = static_cast<double>(count) *
                             static_cast<double>(by_class[static_cast<std::size_t>(j)].size()) /
                             static_cast<double>(total);
        quota[static_cast<std::size_t>(j)] = static_cast<int>(std::floor(exact));
        assigned += quota[static_cast<std::size_t>(j)];
        remainders.emplace_back(-(exact - std::floor(exact)), j);
    }
    std::sort(remainders.begin(), remainders.end());
    for (int k = 0; assigned < count; ++k) {
        quota[static_cast<std::size_t>(remainders[static_cast<std::size_t>(k % J)].second)]++;
        ++assigned;
    }
    // Every class keeps at least one sample; shave the largest quotas to pay
    // for the bumps.
    for (int j = 0; j < J; ++j) {
        while (quota[static_cast<std::size_t>(j)] == 0) {
            auto it = std::max_element(quota.begin(), quota.end());
            --(*it);
            quota[static_cast<std::size_t>(j)]++;
        }
        const int available = static_cast<int>(by_class[static_cast<std::size_t>(j)].size());
        if (quota[static_cast<std::size_t>(j)] > available) {
            throw std::invalid_argument("class " + std::to_string(j) +
                                        " has too few samples for the requested count");
        }
    }

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> selected;
    selected.reserve(static_cast<std::size_t>(count));
    for (int j = 0; j < J; ++j) {
        auto indices = by_class[static_cast<std::size_t>(j)];
        std::shuffle(indices.begin(), indices.end(), rng);
        selected.insert(selected.end(), indices.begin(),
                        indices.begin() + quota[static_cast<std::size_t>(j)]);
    }
    std::sort(selected.begin(), selected.end());

    SignalDataset out;
    out.num_classes = J;
    out.window_length = train.window_length;
    out.windows.reserve(selected.size());
    out.labels.reserve(selected.size());
    for (std::size_t idx : selected) {
        out.windows.push_back(train.windows[idx]);
        out.labels.push_back(train.labels[idx]);
    }
    return out;
}

SignalDataset synth_generate(int num_classes, int per_class, int window_length,
                             double noise_std, std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("need at least 2 classes");
    if (per_class < 1) throw std::invalid_argument("per_class must be >= 1");
    if (window_length < 1) throw std::invalid_argument("window_length must be >= 1");
    if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");

    SignalDataset ds;
    ds.num_classes = num_classes;
    ds.window_length = window_length;
    ds.windows.reserve(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(per_class));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    for (int j = 0; j < num_classes; ++j) {
        const double freq = 0.05 + 0.001 * j;  // cycles per sample
        const int period = 50 + 3 * j;          // impulse spacing
        const double amp = 0.02 + 0.002 * j;    // impulse height
        for (int m = 0; m < per_class; ++m) {
            std::vector<double> w(static_cast<std::size_t>(window_length));
            for (int i = 0; i < window_length; ++i) {
                double v = std::sin(2.0 * kPi * freq * i);
                if (i % period == 0) v += amp;
                if (noise_std > 0.0) v += noise_std * noise(rng);
                w[static_cast<std::size_t>(i)] = v;
            }
            ds.windows.push_back(std::move(w));
            ds.labels.push_back(j);
        }
    }
    return ds;
}

}  // namespace hdbench::data
