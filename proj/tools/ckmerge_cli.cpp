#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ckmerge/baselines.hpp"
#include "ckmerge/container.hpp"
#include "ckmerge/errors.hpp"
#include "ckmerge/merge.hpp"
#include "ckmerge/metrics_log.hpp"
#include "ckmerge/names.hpp"
#include "ckmerge/pipeline.hpp"
#include "ckmerge/runio.hpp"
#include "ckmerge/selection.hpp"
#include "ckmerge/synth.hpp"
#include "ckmerge/weights.hpp"

namespace {

using namespace ckmerge;
using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> tokens;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        const std::size_t comma = text.find(',', begin);
        const std::size_t end = comma == std::string::npos ? text.size() : comma;
        tokens.push_back(text.substr(begin, end - begin));
        if (comma == std::string::npos) {
            break;
        }
        begin = comma + 1;
    }
    return tokens;
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* what) {
    std::vector<std::size_t> values;
    for (const std::string& token : split_commas(text)) {
        char* end = nullptr;
        const unsigned long long value = std::strtoull(token.c_str(), &end, 10);
        if (token.empty() || end != token.c_str() + token.size()) {
            throw ValidationError(std::string("invalid ") + what + " list: '" + text + "'");
        }
        values.push_back(static_cast<std::size_t>(value));
    }
    return values;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
    std::vector<double> values;
    for (const std::string& token : split_commas(text)) {
        char* end = nullptr;
        const double value = std::strtod(token.c_str(), &end);
        if (token.empty() || end != token.c_str() + token.size()) {
            throw ValidationError(std::string("invalid ") + what + " list: '" + text + "'");
        }
        values.push_back(value);
    }
    return values;
}

/// Loads the run roster; when a metrics log is given, its train_loss
/// values replace the manifest's (joined by checkpoint id, steps must
/// agree).
RunManifestFile load_roster(const std::string& manifest_path, const std::string& metrics_path) {
    RunManifestFile file = read_run_manifest(manifest_path);
    if (!metrics_path.empty()) {
        const std::vector<MetricsRow> rows = read_metrics_log(metrics_path);
        std::map<std::string, const MetricsRow*> by_id;
        for (const MetricsRow& row : rows) {
            by_id.emplace(row.checkpoint_id, &row);
        }
        for (CheckpointRecord& record : file.run.checkpoints) {
            const auto it = by_id.find(record.id);
            if (it == by_id.end()) {
                throw ValidationError("metrics log is missing checkpoint '" + record.id + "'");
            }
            if (it->second->step != record.step) {
                throw ValidationError("metrics log step mismatch for checkpoint '" + record.id +
                                      "': manifest says " + std::to_string(record.step) +
                                      ", log says " + std::to_string(it->second->step));
            }
            record.train_loss = it->second->train_loss;
        }
        file.run.validate();
    }
    return file;
}

struct MergeOptions {
    std::string run_manifest;
    std::string metrics;
    std::string method;
    std::string metric = "loss";
    double penalty = 0.0;
    bool penalty_given = false;
    double power = 2.0;
    std::size_t k = 2;
    std::size_t interval = 0;  // 0 = not given, 1 = adjacent (same as not given)
    std::string base = "first";
    double density = 0.5;
    double drop_rate = 0.5;
    double slerp_t = 0.5;
    std::uint64_t seed = 0;
    std::string out;
};

SelectionSpec spec_from(std::size_t k, std::size_t interval) {
    SelectionSpec spec;
    spec.k = k;
    if (interval >= 2) {
        spec.interval_m = interval;
    }
    return spec;
}

std::size_t index_of(const RunManifest& run, const std::string& id) {
    for (std::size_t i = 0; i < run.checkpoints.size(); ++i) {
        if (run.checkpoints[i].id == id) {
            return i;
        }
    }
    throw ValidationError("checkpoint '" + id + "' not found in run manifest");
}

void write_merge_outputs(const std::string& out_dir, const std::string& name,
                         const std::string& method,
                         const std::vector<CheckpointRecord>& inputs,
                         const std::vector<double>* metric_values,
                         const std::vector<double>* weights, const json& parameters,
                         const TensorMap& merged) {
    const fs::path dir = fs::path(out_dir) / name;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    }

    MergeManifest manifest;
    manifest.name = name;
    manifest.method = method;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        MergeInputRecord input;
        input.checkpoint_id = inputs[i].id;
        input.step = inputs[i].step;
        if (metric_values != nullptr) {
            input.metric_value = (*metric_values)[i];
        }
        if (weights != nullptr) {
            input.weight = (*weights)[i];
        }
        manifest.inputs.push_back(std::move(input));
    }
    manifest.parameters = parameters;
    manifest.output_digest = write_container(merged, dir / "model.tensors");
    write_merge_manifest((dir / "manifest.json").string(), manifest);

    std::cout << name << "\n";
    std::cout << "  model:    " << (dir / "model.tensors").string() << "\n";
    std::cout << "  manifest: " << (dir / "manifest.json").string() << "\n";
    std::cout << "  sha256:   " << manifest.output_digest << "\n";
}

void run_merge(const MergeOptions& options) {
    const RunManifestFile file = load_roster(options.run_manifest, options.metrics);
    const RunManifest& run = file.run;
    const std::vector<TensorMap> snapshots = load_run_checkpoints(run);
    const BaseChoice base = base_choice_from_name(options.base);

    auto snapshots_of = [&](const std::vector<CheckpointRecord>& records) {
        std::vector<TensorMap> members;
        members.reserve(records.size());
        for (const CheckpointRecord& record : records) {
            members.push_back(snapshots.at(index_of(run, record.id)));
        }
        return members;
    };

    if (options.method == "uniform" || options.method == "mwa") {
        const SelectionSpec spec = spec_from(options.k, options.interval);
        const std::vector<CheckpointRecord> selected = select_last_k(run, spec);

        MergeName name;
        name.k = spec.k;
        name.interval_m = spec.interval_m;

        std::vector<double> weights;
        std::vector<double> metric_values;
        json parameters;
        parameters["k"] = spec.k;
        if (spec.interval_m) {
            parameters["interval"] = *spec.interval_m;
        }

        if (options.method == "uniform") {
            name.scheme = MergeName::Scheme::Unweighted;
            weights = uniform_weights(selected.size());
        } else {
            if (!options.penalty_given) {
                throw ValidationError("--method mwa requires --penalty");
            }
            const bool by_loss = options.metric == "loss";
            name.scheme = by_loss ? MergeName::Scheme::Loss : MergeName::Scheme::Steps;
            name.penalty = options.penalty;
            metric_values.resize(selected.size());
            for (std::size_t i = 0; i < selected.size(); ++i) {
                metric_values[i] = by_loss ? selected[i].train_loss
                                           : static_cast<double>(selected[i].step);
            }
            WeightScheme scheme;
            scheme.objective = by_loss ? MetricObjective::Min : MetricObjective::Max;
            scheme.penalty_p = options.penalty;
            scheme.power_q = options.power;
            weights = penalized_weights(metric_values, scheme);
            parameters["metric"] = options.metric;
            parameters["penalty"] = options.penalty;
            parameters["power"] = options.power;
        }

        const TensorMap merged = merge_linear(snapshots_of(selected), weights);
        write_merge_outputs(options.out, format_name(name), options.method, selected,
                            metric_values.empty() ? nullptr : &metric_values, &weights,
                            parameters, merged);
        return;
    }

    // Comparison methods below merge against a base model: the run's first
    // checkpoint or its final one.
    const CheckpointRecord& base_record =
        base == BaseChoice::FirstCheckpoint ? run.checkpoints.front() : run.checkpoints.back();
    const TensorMap& base_map = snapshots.at(index_of(run, base_record.id));

    if (options.method == "slerp") {
        if (options.k != 2) {
            throw ValidationError("slerp blends exactly two models; --k must be 2");
        }
        if (options.interval >= 2) {
            throw ValidationError("slerp does not support --interval");
        }
        SelectionSpec newest;
        newest.k = 1;
        const CheckpointRecord other_record = select_last_k(run, newest).front();
        if (other_record.id == base_record.id) {
            throw ValidationError("slerp endpoints coincide: base and last merging checkpoint are both '" +
                                  base_record.id + "'");
        }
        std::vector<std::string> warnings;
        const TensorMap merged =
            slerp_merge(base_map, snapshots.at(index_of(run, other_record.id)), options.slerp_t,
                        &warnings);
        for (const std::string& warning : warnings) {
            std::cerr << "warning: " << warning << "\n";
        }

        BaselineName name;
        name.method = "slerp";
        name.k = 2;
        name.base = base;
        json parameters;
        parameters["t"] = options.slerp_t;
        parameters["base"] = base_choice_name(base);
        parameters["base_checkpoint_id"] = base_record.id;
        write_merge_outputs(options.out, format_baseline_name(name), "slerp",
                            {base_record, other_record}, nullptr, nullptr, parameters, merged);
        return;
    }

    if (options.method == "ties" || options.method == "dare_ties") {
        const SelectionSpec spec = spec_from(options.k, options.interval);
        const std::vector<CheckpointRecord> selected = select_last_k(run, spec);
        const std::vector<TensorMap> members = snapshots_of(selected);

        TiesParams ties;
        ties.density = options.density;
        json parameters;
        parameters["k"] = spec.k;
        if (spec.interval_m) {
            parameters["interval"] = *spec.interval_m;
        }
        parameters["base"] = base_choice_name(base);
        parameters["base_checkpoint_id"] = base_record.id;
        parameters["density"] = options.density;

        TensorMap merged;
        if (options.method == "ties") {
            merged = ties_merge(members, base_map, ties);
        } else {
            DareParams dare;
            dare.drop_rate = options.drop_rate;
            dare.seed = options.seed;
            parameters["drop_rate"] = options.drop_rate;
            parameters["seed"] = options.seed;
            merged = dare_ties_merge(members, base_map, ties, dare);
        }

        BaselineName name;
        name.method = options.method;
        name.k = spec.k;
        name.interval_m = spec.interval_m;
        name.base = base;
        write_merge_outputs(options.out, format_baseline_name(name), options.method, selected,
                            nullptr, nullptr, parameters, merged);
        return;
    }

    throw ValidationError("unknown merge method '" + options.method + "'");
}

struct SweepOptions {
    std::string run_manifest;
    std::string metrics;
    std::string ks = "2,3,4,5,8,10";
    std::string ms = "2,3";
    std::string penalties;
    double q = 2.0;
    std::size_t shortlist = 2;
    std::string evaluator = "synthetic";
    std::string evaluator_command;
    bool higher_better = false;
    bool skip_initial_validation = false;
    std::string report;
    std::string out;
};

void run_sweep(const SweepOptions& options) {
    const RunManifestFile file = load_roster(options.run_manifest, options.metrics);

    std::unique_ptr<Evaluator> evaluator;
    if (options.evaluator == "synthetic") {
        if (!file.landscape) {
            throw ValidationError(
                "the synthetic evaluator requires a 'landscape' block in the run manifest; "
                "use --evaluator external-command for runs without one");
        }
        evaluator = std::make_unique<SyntheticEvaluator>(file.landscape->dimension,
                                                         file.landscape->condition_number);
    } else {
        if (options.evaluator_command.empty()) {
            throw ValidationError("--evaluator external-command requires --evaluator-command");
        }
        evaluator = std::make_unique<ExternalCommandEvaluator>(options.evaluator_command,
                                                               !options.higher_better);
    }

    FullSweepOptions sweep;
    sweep.ks = parse_size_list(options.ks, "k");
    sweep.ms = parse_size_list(options.ms, "interval");
    if (!options.penalties.empty()) {
        sweep.penalties = parse_double_list(options.penalties, "penalty");
    }
    sweep.power_q = options.q;
    sweep.shortlist_size = options.shortlist;
    sweep.skip_initial_validation = options.skip_initial_validation;
    if (!options.out.empty()) {
        sweep.out_dir = options.out;
    } else {
        fs::path report_path(options.report);
        fs::path stem = report_path.parent_path() / report_path.stem();
        sweep.out_dir = stem.string() + "_models";
    }

    const SweepReport report = run_full_sweep(file.run, *evaluator, sweep);
    write_sweep_report(options.report, report);

    std::cout << "evaluated " << report.rows.size() << " candidates ("
              << (report.lower_is_better ? "lower" : "higher") << " is better)\n";
    if (!report.rows.empty()) {
        const SweepRow& best = report.rows.front();
        std::cout << "best: " << best.name << "  score " << best.score;
        if (best.improvement_vs_final_pct) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%+.2f%%", *best.improvement_vs_final_pct);
            std::cout << "  vs final " << buf;
        }
        if (best.improvement_vs_last_merging_pct) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%+.2f%%", *best.improvement_vs_last_merging_pct);
            std::cout << "  vs last merging " << buf;
        }
        std::cout << "\n";
    }
    std::cout << "shortlist:";
    for (const std::string& name : report.shortlist) {
        std::cout << " " << name;
    }
    std::cout << "\n";
    std::cout << "report: " << options.report << "\n";
    std::cout << "models: " << sweep.out_dir << "\n";
}

json merge_name_to_json(const MergeName& name) {
    json doc;
    doc["kind"] = "metric-weighted";
    doc["k"] = name.k;
    if (name.interval_m) {
        doc["interval"] = *name.interval_m;
    }
    switch (name.scheme) {
        case MergeName::Scheme::Unweighted:
            doc["scheme"] = "unweighted";
            break;
        case MergeName::Scheme::Loss:
            doc["scheme"] = "loss";
            break;
        case MergeName::Scheme::Steps:
            doc["scheme"] = "steps";
            break;
    }
    if (name.penalty) {
        doc["penalty"] = *name.penalty;
    }
    doc["canonical"] = format_name(name);
    return doc;
}

json baseline_name_to_json(const BaselineName& name) {
    json doc;
    doc["kind"] = "comparison";
    doc["method"] = name.method;
    doc["k"] = name.k;
    if (name.interval_m) {
        doc["interval"] = *name.interval_m;
    }
    doc["base"] = base_choice_name(name.base);
    doc["canonical"] = format_baseline_name(name);
    return doc;
}

void run_name_parse(const std::string& text) {
    try {
        std::cout << merge_name_to_json(parse_name(text)).dump(2) << "\n";
        return;
    } catch (const ValidationError& merge_error) {
        try {
            std::cout << baseline_name_to_json(parse_baseline_name(text)).dump(2) << "\n";
            return;
        } catch (const ValidationError&) {
            // Neither grammar matched. Report the error for the grammar the
            // text most resembles: names starting with "last" are almost
            // certainly misspelled metric-weighted names.
            if (text.rfind("last", 0) == 0) {
                throw merge_error;
            }
            throw;
        }
    }
}

struct NameFormatOptions {
    std::size_t k = 2;
    std::size_t interval = 0;
    std::string metric = "unweighted";
    double penalty = 0.0;
    bool penalty_given = false;
    std::string method;
    std::string base = "first";
};

void run_name_format(const NameFormatOptions& options) {
    if (!options.method.empty()) {
        BaselineName name;
        name.method = options.method;
        name.k = options.k;
        if (options.interval >= 2) {
            name.interval_m = options.interval;
        }
        name.base = base_choice_from_name(options.base);
        std::cout << format_baseline_name(name) << "\n";
        return;
    }

    MergeName name;
    name.k = options.k;
    if (options.interval >= 2) {
        name.interval_m = options.interval;
    }
    if (options.metric == "unweighted") {
        if (options.penalty_given) {
            throw ValidationError("--penalty requires --metric loss or --metric steps");
        }
        name.scheme = MergeName::Scheme::Unweighted;
    } else {
        if (!options.penalty_given) {
            throw ValidationError("--metric " + options.metric + " requires --penalty");
        }
        name.scheme = options.metric == "loss" ? MergeName::Scheme::Loss : MergeName::Scheme::Steps;
        name.penalty = options.penalty;
    }
    std::cout << format_name(name) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Checkpoint merging toolkit: metric-weighted averaging, soups, and comparisons"};
    app.require_subcommand(1);

    // --- synth ---------------------------------------------------------
    TrajectoryConfig synth_config;
    std::string synth_out;
    CLI::App* synth = app.add_subcommand("synth", "Simulate a noisy-SGD run and write its checkpoints");
    synth->add_option("--dimension", synth_config.dimension, "Parameter count")->capture_default_str();
    synth->add_option("--cond", synth_config.condition_number, "Curvature condition number")
        ->capture_default_str();
    synth->add_option("--noise", synth_config.noise_std, "Gradient noise standard deviation")
        ->capture_default_str();
    synth->add_option("--lr", synth_config.learning_rate, "Learning rate")->capture_default_str();
    synth->add_option("--steps", synth_config.total_steps, "Total optimization steps")
        ->capture_default_str();
    synth->add_option("--every", synth_config.checkpoint_every, "Checkpoint interval in steps")
        ->capture_default_str();
    synth->add_option("--seed", synth_config.seed, "RNG seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->callback([&] {
        const std::string manifest = write_synthetic_run(synth_config, synth_out);
        std::cout << "run manifest: " << manifest << "\n";
        std::cout << "checkpoints:  " << (synth_config.total_steps / synth_config.checkpoint_every)
                  << "\n";
    });

    // --- merge ---------------------------------------------------------
    MergeOptions merge_options;
    CLI::App* merge = app.add_subcommand("merge", "Merge checkpoints from a run into one model");
    merge->add_option("--run-manifest", merge_options.run_manifest, "Run manifest path")->required();
    merge->add_option("--metrics", merge_options.metrics,
                      "Metrics log overriding the manifest's training losses");
    merge->add_option("--method", merge_options.method, "Merge method")
        ->required()
        ->check(CLI::IsMember({"mwa", "uniform", "slerp", "ties", "dare_ties"}));
    merge->add_option("--metric", merge_options.metric, "Weighting metric for mwa")
        ->check(CLI::IsMember({"loss", "steps"}))
        ->capture_default_str();
    CLI::Option* penalty_option =
        merge->add_option("--penalty", merge_options.penalty, "Penalty factor for mwa (> 0)");
    merge->add_option("--power", merge_options.power, "Penalty exponent base (> 1)")
        ->capture_default_str();
    merge->add_option("--k", merge_options.k, "Number of checkpoints to merge")->capture_default_str();
    merge->add_option("--interval", merge_options.interval,
                      "Take every m-th checkpoint (1 = adjacent)");
    merge->add_option("--base", merge_options.base, "Base model for slerp/ties/dare_ties")
        ->check(CLI::IsMember({"first", "last"}))
        ->capture_default_str();
    merge->add_option("--density", merge_options.density, "Kept fraction per checkpoint for ties")
        ->capture_default_str();
    merge->add_option("--drop-rate", merge_options.drop_rate, "Drop probability for dare_ties")
        ->capture_default_str();
    merge->add_option("--slerp-t", merge_options.slerp_t, "Interpolation parameter for slerp")
        ->capture_default_str();
    merge->add_option("--seed", merge_options.seed, "Mask seed for dare_ties")->capture_default_str();
    merge->add_option("--out", merge_options.out, "Output directory")->required();
    merge->callback([&] {
        merge_options.penalty_given = penalty_option->count() > 0;
        run_merge(merge_options);
    });

    // --- sweep ---------------------------------------------------------
    SweepOptions sweep_options;
    CLI::App* sweep = app.add_subcommand(
        "sweep", "Soup sweep, shortlist, and metric-weighted refinement with a report");
    sweep->add_option("--run-manifest", sweep_options.run_manifest, "Run manifest path")->required();
    sweep->add_option("--metrics", sweep_options.metrics,
                      "Metrics log overriding the manifest's training losses");
    sweep->add_option("--ks", sweep_options.ks, "Comma-separated soup sizes")->capture_default_str();
    sweep->add_option("--ms", sweep_options.ms, "Comma-separated checkpoint intervals")
        ->capture_default_str();
    sweep->add_option("--penalties", sweep_options.penalties,
                      "Comma-separated penalty factors (default: built-in per-metric grids)");
    sweep->add_option("--q", sweep_options.q, "Penalty exponent base")->capture_default_str();
    sweep->add_option("--shortlist", sweep_options.shortlist, "How many soups to refine")
        ->capture_default_str();
    sweep->add_option("--evaluator", sweep_options.evaluator, "Scoring backend")
        ->check(CLI::IsMember({"synthetic", "external-command"}))
        ->capture_default_str();
    sweep->add_option("--evaluator-command", sweep_options.evaluator_command,
                      "Command invoked with a container path; must print one number");
    sweep->add_flag("--higher-better", sweep_options.higher_better,
                    "External evaluator scores are higher-is-better");
    sweep->add_flag("--skip-initial-validation", sweep_options.skip_initial_validation,
                    "Skip the final-vs-first checkpoint improvement gate");
    sweep->add_option("--report", sweep_options.report, "Report JSON output path")->required();
    sweep->add_option("--out", sweep_options.out,
                      "Directory for merged candidates (default: <report>_models)");
    sweep->callback([&] { run_sweep(sweep_options); });

    // --- name ----------------------------------------------------------
    CLI::App* name = app.add_subcommand("name", "Parse or compose merge names");
    name->require_subcommand(1);

    std::string parse_text;
    CLI::App* name_parse = name->add_subcommand("parse", "Parse a merge name and print its fields");
    name_parse->add_option("text", parse_text, "Name to parse")->required();
    name_parse->callback([&] { run_name_parse(parse_text); });

    NameFormatOptions format_options;
    CLI::App* name_format = name->add_subcommand("format", "Compose a merge name from fields");
    name_format->add_option("--k", format_options.k, "Number of checkpoints")->required();
    name_format->add_option("--interval", format_options.interval,
                            "Checkpoint interval (1 = adjacent)");
    name_format->add_option("--metric", format_options.metric, "unweighted, loss, or steps")
        ->check(CLI::IsMember({"unweighted", "loss", "steps"}))
        ->capture_default_str();
    CLI::Option* format_penalty =
        name_format->add_option("--penalty", format_options.penalty, "Penalty factor");
    name_format->add_option("--method", format_options.method,
                            "Comparison method (ties, dare_ties, slerp)")
        ->check(CLI::IsMember({"ties", "dare_ties", "slerp"}));
    name_format->add_option("--base", format_options.base, "Base model for comparison methods")
        ->check(CLI::IsMember({"first", "last"}))
        ->capture_default_str();
    name_format->callback([&] {
        format_options.penalty_given = format_penalty->count() > 0;
        run_name_format(format_options);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
