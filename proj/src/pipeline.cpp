#include "ckmerge/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "ckmerge/container.hpp"
#include "ckmerge/errors.hpp"
#include "ckmerge/merge.hpp"
#include "ckmerge/names.hpp"
#include "ckmerge/runio.hpp"
#include "ckmerge/synth.hpp"
#include "ckmerge/weights.hpp"

namespace ckmerge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", value);
    return buf;
}

}  // namespace

SyntheticEvaluator::SyntheticEvaluator(std::size_t dimension, double condition_number)
    : eigenvalues_(hessian_eigenvalues(dimension, condition_number)),
      condition_number_(condition_number) {}

double SyntheticEvaluator::score(const TensorMap& model) {
    const auto it = model.find("theta");
    if (it == model.end()) {
        throw ValidationError("synthetic evaluator requires a 'theta' tensor in the model");
    }
    const std::vector<double> theta = it->second.to_doubles();
    if (theta.size() != eigenvalues_.size()) {
        throw ValidationError("synthetic evaluator dimension mismatch: expected " +
                              std::to_string(eigenvalues_.size()) + " elements, got " +
                              std::to_string(theta.size()));
    }
    return quadratic_loss(eigenvalues_, theta);
}

std::string SyntheticEvaluator::describe() const {
    return "synthetic(dimension=" + std::to_string(eigenvalues_.size()) +
           ", condition_number=" + format_double(condition_number_) + ")";
}

ExternalCommandEvaluator::ExternalCommandEvaluator(std::string command, bool lower_is_better)
    : command_(std::move(command)), lower_better_(lower_is_better) {
    if (command_.empty()) {
        throw ValidationError("external evaluator command must not be empty");
    }
}

double ExternalCommandEvaluator::score(const TensorMap& model) {
    const fs::path tmp = fs::temp_directory_path() /
                         ("ckmerge-eval-" + std::to_string(static_cast<unsigned long>(::getpid())) + "-" +
                          std::to_string(invocation_++) + ".tensors");
    write_container(model, tmp);

    const std::string shell_command = command_ + " '" + tmp.string() + "'";
    FILE* pipe = ::popen(shell_command.c_str(), "r");
    if (pipe == nullptr) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw IoError("cannot launch evaluator command: " + command_);
    }
    std::string output;
    char chunk[4096];
    std::size_t got = 0;
    while ((got = std::fread(chunk, 1, sizeof(chunk), pipe)) > 0) {
        output.append(chunk, got);
    }
    const int status = ::pclose(pipe);
    std::error_code ec;
    fs::remove(tmp, ec);
    if (status != 0) {
        throw IoError("evaluator command exited with status " + std::to_string(status) + ": " + command_);
    }

    const char* begin = output.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin || !std::isfinite(value)) {
        throw ValidationError("evaluator command did not print a finite number: '" +
                              output.substr(0, 120) + "'");
    }
    return value;
}

std::string ExternalCommandEvaluator::describe() const {
    return "external-command(" + command_ + ")";
}

double relative_improvement_pct(double score, double reference, bool lower_is_better) {
    if (!std::isfinite(score) || !std::isfinite(reference) || reference == 0.0) {
        throw ValidationError("relative improvement requires finite scores and a nonzero reference");
    }
    const double delta = lower_is_better ? reference - score : score - reference;
    return delta / reference * 100.0;
}

std::vector<TensorMap> load_run_checkpoints(const RunManifest& run) {
    std::vector<TensorMap> snapshots;
    snapshots.reserve(run.checkpoints.size());
    for (const CheckpointRecord& record : run.checkpoints) {
        snapshots.push_back(read_container(record.path));
    }
    return snapshots;
}

namespace {

/// Shared state for one sweep: the roster, its loaded snapshots
/// (index-aligned), the evaluator, and output settings. out_dir empty
/// means candidates are scored but not written to disk.
struct Ctx {
    const RunManifest& run;
    const std::vector<TensorMap>& snapshots;
    Evaluator& evaluator;
    std::string out_dir;
    double power_q;
    std::map<std::string, std::size_t> index_by_id;
};

Ctx make_ctx(const RunManifest& run, const std::vector<TensorMap>& snapshots, Evaluator& evaluator,
             std::string out_dir, double power_q) {
    Ctx ctx{run, snapshots, evaluator, std::move(out_dir), power_q, {}};
    for (std::size_t i = 0; i < run.checkpoints.size(); ++i) {
        ctx.index_by_id.emplace(run.checkpoints[i].id, i);
    }
    return ctx;
}

std::vector<TensorMap> gather_snapshots(const Ctx& ctx, const std::vector<CheckpointRecord>& selected) {
    std::vector<TensorMap> members;
    members.reserve(selected.size());
    for (const CheckpointRecord& record : selected) {
        members.push_back(ctx.snapshots.at(ctx.index_by_id.at(record.id)));
    }
    return members;
}

void write_candidate(const Ctx& ctx, const SweepRow& row,
                     const std::vector<CheckpointRecord>& selected,
                     const std::vector<double>* metric_values,
                     const std::vector<double>& weights,
                     const TensorMap& merged) {
    if (ctx.out_dir.empty()) {
        return;
    }
    const fs::path dir = fs::path(ctx.out_dir) / row.name;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    }

    MergeManifest manifest;
    manifest.name = row.name;
    manifest.method = row.method;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        MergeInputRecord input;
        input.checkpoint_id = selected[i].id;
        input.step = selected[i].step;
        if (metric_values != nullptr) {
            input.metric_value = (*metric_values)[i];
        }
        input.weight = weights[i];
        manifest.inputs.push_back(std::move(input));
    }
    manifest.parameters = row.parameters;
    manifest.output_digest = write_container(merged, dir / "model.tensors");
    write_merge_manifest((dir / "manifest.json").string(), manifest);
}

SweepRow soup_row(const Ctx& ctx, const SelectionSpec& spec) {
    const std::vector<CheckpointRecord> selected = select_last_k(ctx.run, spec);
    const std::vector<double> weights = uniform_weights(selected.size());
    const TensorMap merged = merge_linear(gather_snapshots(ctx, selected), weights);

    MergeName name;
    name.k = spec.k;
    name.interval_m = spec.interval_m;
    name.scheme = MergeName::Scheme::Unweighted;

    SweepRow row;
    row.name = format_name(name);
    row.method = "uniform";
    row.parameters["k"] = spec.k;
    if (spec.interval_m) {
        row.parameters["interval"] = *spec.interval_m;
    }
    row.score = ctx.evaluator.score(merged);
    write_candidate(ctx, row, selected, nullptr, weights, merged);
    return row;
}

SweepRow weighted_row(const Ctx& ctx, const SelectionSpec& spec, MergeName::Scheme scheme,
                      double penalty) {
    const std::vector<CheckpointRecord> selected = select_last_k(ctx.run, spec);
    std::vector<double> metrics(selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) {
        metrics[i] = scheme == MergeName::Scheme::Loss ? selected[i].train_loss
                                                       : static_cast<double>(selected[i].step);
    }

    WeightScheme weights_scheme;
    weights_scheme.objective =
        scheme == MergeName::Scheme::Loss ? MetricObjective::Min : MetricObjective::Max;
    weights_scheme.penalty_p = penalty;
    weights_scheme.power_q = ctx.power_q;
    const std::vector<double> weights = penalized_weights(metrics, weights_scheme);
    const TensorMap merged = merge_linear(gather_snapshots(ctx, selected), weights);

    MergeName name;
    name.k = spec.k;
    name.interval_m = spec.interval_m;
    name.scheme = scheme;
    name.penalty = penalty;

    SweepRow row;
    row.name = format_name(name);
    row.method = "mwa";
    row.parameters["k"] = spec.k;
    if (spec.interval_m) {
        row.parameters["interval"] = *spec.interval_m;
    }
    row.parameters["metric"] = scheme == MergeName::Scheme::Loss ? "loss" : "steps";
    row.parameters["penalty"] = penalty;
    row.parameters["power"] = ctx.power_q;
    row.score = ctx.evaluator.score(merged);
    write_candidate(ctx, row, selected, &metrics, weights, merged);
    return row;
}

/// Sorts rows best-first for the evaluator's orientation (name breaks
/// ties) and drops later rows that repeat a name — a refinement's uniform
/// reference duplicates its soup row, and determinism makes duplicates
/// identical.
void finalize_rows(SweepReport& report) {
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [&report](const SweepRow& a, const SweepRow& b) {
                         if (a.score != b.score) {
                             return report.lower_is_better ? a.score < b.score : a.score > b.score;
                         }
                         return a.name < b.name;
                     });
    std::vector<SweepRow> unique_rows;
    unique_rows.reserve(report.rows.size());
    std::set<std::string> seen;
    for (SweepRow& row : report.rows) {
        if (seen.insert(row.name).second) {
            unique_rows.push_back(std::move(row));
        }
    }
    report.rows = std::move(unique_rows);
}

SweepReport new_report(const Ctx& ctx) {
    SweepReport report;
    report.evaluator = ctx.evaluator.describe();
    report.lower_is_better = ctx.evaluator.lower_is_better();
    return report;
}

SelectionSpec spec_with_interval(std::size_t k, std::size_t m) {
    if (m == 0) {
        throw ValidationError("interval values must be >= 1");
    }
    SelectionSpec spec;
    spec.k = k;
    if (m >= 2) {
        spec.interval_m = m;  // m == 1 is adjacent selection, i.e. no interval
    }
    return spec;
}

SweepReport uniform_sweep_core(const Ctx& ctx, const std::vector<std::size_t>& ks) {
    if (ks.empty()) {
        throw ValidationError("uniform sweep requires a non-empty k list");
    }
    SweepReport report = new_report(ctx);
    for (const std::size_t k : ks) {
        SelectionSpec spec;
        spec.k = k;
        report.rows.push_back(soup_row(ctx, spec));
    }
    finalize_rows(report);
    return report;
}

SweepReport interval_sweep_core(const Ctx& ctx, const SelectionSpec& base_spec,
                                const std::vector<std::size_t>& ms) {
    if (ms.empty()) {
        throw ValidationError("interval sweep requires a non-empty interval list");
    }
    SweepReport report = new_report(ctx);
    for (const std::size_t m : ms) {
        report.rows.push_back(soup_row(ctx, spec_with_interval(base_spec.k, m)));
    }
    finalize_rows(report);
    return report;
}

SweepReport refinement_core(const Ctx& ctx, const std::vector<SelectionSpec>& shortlisted,
                            const std::vector<double>& loss_penalties,
                            const std::vector<double>& steps_penalties) {
    if (shortlisted.empty()) {
        throw ValidationError("weighted refinement requires a non-empty shortlist");
    }
    if (loss_penalties.empty() || steps_penalties.empty()) {
        throw ValidationError("weighted refinement requires a non-empty penalty list");
    }
    SweepReport report = new_report(ctx);
    for (const SelectionSpec& spec : shortlisted) {
        report.rows.push_back(soup_row(ctx, spec));  // the uniform reference
        for (const double penalty : loss_penalties) {
            report.rows.push_back(weighted_row(ctx, spec, MergeName::Scheme::Loss, penalty));
        }
        for (const double penalty : steps_penalties) {
            report.rows.push_back(weighted_row(ctx, spec, MergeName::Scheme::Steps, penalty));
        }
    }
    finalize_rows(report);
    return report;
}

void compare_core(SweepReport& report, const Ctx& ctx) {
    if (report.rows.empty()) {
        throw ValidationError("cannot compare an empty report against references");
    }
    const CheckpointRecord& final_record = ctx.run.final_checkpoint();
    SelectionSpec newest;
    newest.k = 1;
    const CheckpointRecord last_record = select_last_k(ctx.run, newest).front();

    const double final_score = ctx.evaluator.score(ctx.snapshots.at(ctx.index_by_id.at(final_record.id)));
    const double last_score = ctx.evaluator.score(ctx.snapshots.at(ctx.index_by_id.at(last_record.id)));
    report.final_checkpoint = ReferenceScore{final_record.id, final_score};
    report.last_merging_checkpoint = ReferenceScore{last_record.id, last_score};

    for (SweepRow& row : report.rows) {
        row.improvement_vs_final_pct =
            relative_improvement_pct(row.score, final_score, report.lower_is_better);
        row.improvement_vs_last_merging_pct =
            relative_improvement_pct(row.score, last_score, report.lower_is_better);
    }
}

const std::vector<double> kDefaultLossPenalties{0.5, 0.6, 0.7, 0.75, 0.8, 0.9, 1.0};
const std::vector<double> kDefaultStepsPenalties{0.5, 0.6, 0.7, 0.75, 0.8, 0.9, 1.0, 1.05};

}  // namespace

SweepReport run_uniform_sweep(const RunManifest& run, const std::vector<std::size_t>& ks,
                              Evaluator& evaluator) {
    run.validate();
    const std::vector<TensorMap> snapshots = load_run_checkpoints(run);
    return uniform_sweep_core(make_ctx(run, snapshots, evaluator, "", 2.0), ks);
}

SweepReport run_interval_sweep(const RunManifest& run, const SelectionSpec& base_spec,
                               const std::vector<std::size_t>& ms, Evaluator& evaluator) {
    run.validate();
    const std::vector<TensorMap> snapshots = load_run_checkpoints(run);
    return interval_sweep_core(make_ctx(run, snapshots, evaluator, "", 2.0), base_spec, ms);
}

SweepReport run_weighted_refinement(const RunManifest& run,
                                    const std::vector<SelectionSpec>& shortlisted,
                                    const std::vector<double>& penalties, double power_q,
                                    Evaluator& evaluator) {
    run.validate();
    const std::vector<TensorMap> snapshots = load_run_checkpoints(run);
    return refinement_core(make_ctx(run, snapshots, evaluator, "", power_q), shortlisted,
                           penalties, penalties);
}

void compare_to_references(SweepReport& report, const RunManifest& run, Evaluator& evaluator) {
    run.validate();
    const std::vector<TensorMap> snapshots = load_run_checkpoints(run);
    compare_core(report, make_ctx(run, snapshots, evaluator, "", 2.0));
}

SweepReport run_full_sweep(const RunManifest& run, Evaluator& evaluator,
                           const FullSweepOptions& options) {
    run.validate();
    if (options.shortlist_size == 0) {
        throw ValidationError("shortlist size must be >= 1");
    }
    if (options.ks.empty()) {
        throw ValidationError("uniform sweep requires a non-empty k list");
    }
    const std::vector<TensorMap> snapshots = load_run_checkpoints(run);
    const Ctx ctx = make_ctx(run, snapshots, evaluator, options.out_dir, options.power_q);

    if (!options.skip_initial_validation) {
        if (run.checkpoints.size() < 2) {
            throw ValidationError("initial validation requires at least two checkpoints");
        }
        const double first_score = evaluator.score(snapshots.front());
        const double final_score = evaluator.score(snapshots.back());
        const bool improved = evaluator.lower_is_better() ? final_score < first_score
                                                          : final_score > first_score;
        if (!improved) {
            throw ValidationError(
                "initial validation failed: final checkpoint score " + format_double(final_score) +
                " does not improve on first checkpoint score " + format_double(first_score) +
                "; rerun with --skip-initial-validation to merge anyway");
        }
    }

    SweepReport report = new_report(ctx);

    for (const std::size_t k : options.ks) {
        SelectionSpec spec;
        spec.k = k;
        report.rows.push_back(soup_row(ctx, spec));
    }

    // Interval soups only where the roster is deep enough for the spread,
    // mirroring "use intervals when k is small enough to afford them".
    const std::size_t depth = run.checkpoints.size() - 1;
    for (const std::size_t k : options.ks) {
        for (const std::size_t m : options.ms) {
            if (m == 0) {
                throw ValidationError("interval values must be >= 1");
            }
            if (m == 1) {
                continue;  // identical to the plain soup above
            }
            if (k == 0 || (k - 1) * m + 1 > depth) {
                continue;
            }
            report.rows.push_back(soup_row(ctx, spec_with_interval(k, m)));
        }
    }

    finalize_rows(report);
    const std::size_t shortlist_n = std::min(options.shortlist_size, report.rows.size());
    std::vector<SelectionSpec> shortlisted;
    for (std::size_t i = 0; i < shortlist_n; ++i) {
        report.shortlist.push_back(report.rows[i].name);
        const MergeName parsed = parse_name(report.rows[i].name);
        SelectionSpec spec;
        spec.k = parsed.k;
        spec.interval_m = parsed.interval_m;
        shortlisted.push_back(spec);
    }

    const std::vector<double>& loss_penalties =
        options.penalties ? *options.penalties : kDefaultLossPenalties;
    const std::vector<double>& steps_penalties =
        options.penalties ? *options.penalties : kDefaultStepsPenalties;
    if (loss_penalties.empty()) {
        throw ValidationError("weighted refinement requires a non-empty penalty list");
    }
    for (const SelectionSpec& spec : shortlisted) {
        for (const double penalty : loss_penalties) {
            report.rows.push_back(weighted_row(ctx, spec, MergeName::Scheme::Loss, penalty));
        }
        for (const double penalty : steps_penalties) {
            report.rows.push_back(weighted_row(ctx, spec, MergeName::Scheme::Steps, penalty));
        }
    }

    finalize_rows(report);
    compare_core(report, ctx);
    return report;
}

json report_to_json(const SweepReport& report) {
    json doc;
    doc["evaluator"] = report.evaluator;
    doc["lower_is_better"] = report.lower_is_better;
    json rows = json::array();
    for (const SweepRow& row : report.rows) {
        json entry;
        entry["name"] = row.name;
        entry["method"] = row.method;
        entry["parameters"] = row.parameters;
        entry["score"] = row.score;
        if (row.improvement_vs_final_pct) {
            entry["improvement_vs_final_pct"] = *row.improvement_vs_final_pct;
        }
        if (row.improvement_vs_last_merging_pct) {
            entry["improvement_vs_last_merging_pct"] = *row.improvement_vs_last_merging_pct;
        }
        rows.push_back(std::move(entry));
    }
    doc["rows"] = std::move(rows);
    doc["shortlist"] = report.shortlist;
    if (report.final_checkpoint) {
        doc["references"]["final_checkpoint"] = {
            {"checkpoint_id", report.final_checkpoint->checkpoint_id},
            {"score", report.final_checkpoint->score}};
    }
    if (report.last_merging_checkpoint) {
        doc["references"]["last_merging_checkpoint"] = {
            {"checkpoint_id", report.last_merging_checkpoint->checkpoint_id},
            {"score", report.last_merging_checkpoint->score}};
    }
    return doc;
}

void write_sweep_report(const std::string& path, const SweepReport& report) {
    const std::string text = report_to_json(report).dump(2) + "\n";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open report '" + path + "' for writing");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
        throw IoError("write failed for report '" + path + "'");
    }
}

}  // namespace ckmerge
