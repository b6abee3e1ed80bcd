#include <charconv>
#include <fstream>
#include <sstream>

#include "hdbench/bench.hpp"
#include "hdbench/common.hpp"
#include "nlohmann/json.hpp"

namespace hdbench::bench {

namespace {

using nlohmann::json;

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

json to_json(const AttackEval& ev) {
    return json{{"attack", ev.attack},
                {"acc_perturbed", ev.acc_perturbed},
                {"compromise", ev.compromise},
                {"capped", ev.capped}};
}

AttackEval attack_eval_from_json(const json& j) {
    AttackEval ev;
    ev.attack = j.at("attack").get<std::string>();
    ev.acc_perturbed = j.at("acc_perturbed").get<double>();
    ev.compromise = j.at("compromise").get<double>();
    ev.capped = j.at("capped").get<bool>();
    return ev;
}

json to_json(const TargetCell& cell) {
    json attacks = json::array();
    for (const auto& ev : cell.attacks) attacks.push_back(to_json(ev));
    return json{{"target", cell.target},
                {"str", cell.str_count},
                {"replicate", cell.replicate},
                {"seed", cell.seed},
                {"acc_normal", cell.acc_normal},
                {"attacks", attacks},
                {"mean_compromise", cell.mean_compromise},
                {"train_seconds", cell.train_seconds}};
}

TargetCell cell_from_json(const json& j) {
    TargetCell cell;
    cell.target = j.at("target").get<std::string>();
    cell.str_count = j.at("str").get<int>();
    cell.replicate = j.at("replicate").get<int>();
    cell.seed = j.at("seed").get<std::uint64_t>();
    cell.acc_normal = j.at("acc_normal").get<double>();
    for (const auto& ev : j.at("attacks")) cell.attacks.push_back(attack_eval_from_json(ev));
    cell.mean_compromise = j.at("mean_compromise").get<double>();
    cell.train_seconds = j.at("train_seconds").get<double>();
    return cell;
}

json to_json(const ImprovementCell& imp) {
    return json{{"baseline", imp.baseline},
                {"str", imp.str_count},
                {"replicate", imp.replicate},
                {"improvement_pct", imp.improvement_pct}};
}

ImprovementCell improvement_from_json(const json& j) {
    ImprovementCell imp;
    imp.baseline = j.at("baseline").get<std::string>();
    imp.str_count = j.at("str").get<int>();
    imp.replicate = j.at("replicate").get<int>();
    imp.improvement_pct = j.at("improvement_pct").get<double>();
    return imp;
}

}  // namespace

ReportFormat parse_format(std::string_view name) {
    if (name == "json") return ReportFormat::Json;
    if (name == "csv") return ReportFormat::Csv;
    throw std::invalid_argument("unknown report format '" + std::string(name) + "'");
}

std::string report_to_json(const ResiliencyReport& report) {
    json j;
    j["schema_version"] = report.schema_version;
    j["incomplete"] = report.incomplete;
    j["error"] = report.error;
    j["metadata"] = json{{"run_seed", report.run_seed},
                         {"replicates", report.replicates},
                         {"epsilon", report.epsilon},
                         {"iterations", report.iterations},
                         {"decay", report.decay},
                         {"hdc_dimension", report.hdc_dimension},
                         {"hdc_learning_rate", report.hdc_learning_rate},
                         {"hdc_retrain_epochs", report.hdc_retrain_epochs},
                         {"dataset", report.dataset},
                         {"window_length", report.window_length},
                         {"str_counts", report.str_counts},
                         {"attacks", report.attack_names},
                         {"targets", report.target_names},
                         {"substitute_checkpoints", report.substitute_checkpoints}};
    auto cell_array = [](const std::vector<TargetCell>& cells) {
        json arr = json::array();
        for (const auto& cell : cells) arr.push_back(to_json(cell));
        return arr;
    };
    auto imp_array = [](const std::vector<ImprovementCell>& imps) {
        json arr = json::array();
        for (const auto& imp : imps) arr.push_back(to_json(imp));
        return arr;
    };
    j["replicate_results"] = cell_array(report.cells);
    j["improvements"] = imp_array(report.improvements);
    j["aggregates"] = json{{"cells", cell_array(report.aggregate_cells)},
                           {"improvements", imp_array(report.aggregate_improvements)}};
    return j.dump(2) + "\n";
}

ResiliencyReport report_from_json(const std::string& text) {
    json j = json::parse(text);
    ResiliencyReport report;
    report.schema_version = j.at("schema_version").get<int>();
    if (report.schema_version != 1) {
        throw DataError("unsupported report schema version " +
                        std::to_string(report.schema_version));
    }
    report.incomplete = j.at("incomplete").get<bool>();
    report.error = j.at("error").get<std::string>();
    const json& meta = j.at("metadata");
    report.run_seed = meta.at("run_seed").get<std::uint64_t>();
    report.replicates = meta.at("replicates").get<int>();
    report.epsilon = meta.at("epsilon").get<double>();
    report.iterations = meta.at("iterations").get<int>();
    report.decay = meta.at("decay").get<double>();
    report.hdc_dimension = meta.at("hdc_dimension").get<int>();
    report.hdc_learning_rate = meta.at("hdc_learning_rate").get<double>();
    report.hdc_retrain_epochs = meta.at("hdc_retrain_epochs").get<int>();
    report.dataset = meta.at("dataset").get<std::string>();
    report.window_length = meta.at("window_length").get<int>();
    report.str_counts = meta.at("str_counts").get<std::vector<int>>();
    report.attack_names = meta.at("attacks").get<std::vector<std::string>>();
    report.target_names = meta.at("targets").get<std::vector<std::string>>();
    report.substitute_checkpoints =
        meta.at("substitute_checkpoints").get<std::map<std::string, std::string>>();
    for (const auto& cell : j.at("replicate_results")) {
        report.cells.push_back(cell_from_json(cell));
    }
    for (const auto& imp : j.at("improvements")) {
        report.improvements.push_back(improvement_from_json(imp));
    }
    for (const auto& cell : j.at("aggregates").at("cells")) {
        report.aggregate_cells.push_back(cell_from_json(cell));
    }
    for (const auto& imp : j.at("aggregates").at("improvements")) {
        report.aggregate_improvements.push_back(improvement_from_json(imp));
    }
    return report;
}

std::string report_to_csv(const ResiliencyReport& report) {
    std::ostringstream out;
    out << "target,str,attack,acc_normal,acc_perturbed,compromise,train_seconds,seed\n";
    for (const auto& cell : report.aggregate_cells) {
        for (const auto& ev : cell.attacks) {
            out << cell.target << ',' << cell.str_count << ',' << ev.attack << ','
                << format_double(cell.acc_normal) << ',' << format_double(ev.acc_perturbed) << ','
                << format_double(ev.compromise) << ',' << format_double(cell.train_seconds) << ','
                << cell.seed << '\n';
        }
    }
    return out.str();
}

void emit_report(const ResiliencyReport& report, ReportFormat format,
                 const std::filesystem::path& path) {
    if (report.cells.empty() && !report.incomplete) {
        throw std::invalid_argument("refusing to emit an empty report");
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << (format == ReportFormat::Json ? report_to_json(report) : report_to_csv(report));
    if (!out) throw DataError("write failed for " + path.string());
}

ResiliencyReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return report_from_json(buffer.str());
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse report " + path.string() + ": " + e.what());
    }
}

}  // namespace hdbench::bench
