#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ckmerge/selection.hpp"
#include "ckmerge/tensor.hpp"

namespace ckmerge {

/// Scores candidate models. Implementations must be deterministic for a
/// fixed input; score is not required to be safe for concurrent calls.
class Evaluator {
public:
    virtual ~Evaluator() = default;

    /// Returns the model's score; smaller or larger is better per
    /// lower_is_better().
    virtual double score(const TensorMap& model) = 0;

    [[nodiscard]] virtual bool lower_is_better() const = 0;

    /// Short human-readable identity for reports.
    [[nodiscard]] virtual std::string describe() const = 0;
};

/// Quadratic-bowl evaluator matching a synthetic run's landscape: score is
/// 0.5 * theta' H theta of the model's "theta" tensor, lower is better.
class SyntheticEvaluator : public Evaluator {
public:
    SyntheticEvaluator(std::size_t dimension, double condition_number);

    double score(const TensorMap& model) override;
    [[nodiscard]] bool lower_is_better() const override { return true; }
    [[nodiscard]] std::string describe() const override;

private:
    std::vector<double> eigenvalues_;
    double condition_number_;
};

/// Scores a model by writing it to a temporary container and running a
/// user-supplied command with that path as its one argument. The command
/// must print a single real number to standard output; a nonzero exit
/// status raises IoError and unparsable output raises ValidationError.
class ExternalCommandEvaluator : public Evaluator {
public:
    ExternalCommandEvaluator(std::string command, bool lower_is_better);

    double score(const TensorMap& model) override;
    [[nodiscard]] bool lower_is_better() const override { return lower_better_; }
    [[nodiscard]] std::string describe() const override;

private:
    std::string command_;
    bool lower_better_;
    std::uint64_t invocation_ = 0;
};

/// One evaluated merge candidate. `parameters` holds the method-specific
/// settings (k, interval, metric, penalty, power) as a JSON object so the
/// report is self-describing. Improvement percentages appear only after
/// compare_to_references and are oriented so positive always means better.
struct SweepRow {
    std::string name;
    std::string method;  // "uniform" or "mwa"
    nlohmann::json parameters = nlohmann::json::object();
    double score = 0.0;
    std::optional<double> improvement_vs_final_pct;
    std::optional<double> improvement_vs_last_merging_pct;
};

/// A reference model's identity and score.
struct ReferenceScore {
    std::string checkpoint_id;
    double score = 0.0;
};

/// Accumulated sweep results: rows sorted best-first for the evaluator's
/// orientation (ties broken by name), the shortlist of top row names, and
/// reference scores once compare_to_references has run.
struct SweepReport {
    std::string evaluator;
    bool lower_is_better = true;
    std::vector<SweepRow> rows;
    std::vector<std::string> shortlist;
    std::optional<ReferenceScore> final_checkpoint;
    std::optional<ReferenceScore> last_merging_checkpoint;
};

/// Relative improvement of `score` over `reference`, in percent, oriented
/// so positive means better: (score-ref)/ref*100 when higher is better,
/// (ref-score)/ref*100 when lower is better.
[[nodiscard]] double relative_improvement_pct(double score, double reference, bool lower_is_better);

/// Reads every checkpoint container of a run, index-aligned with
/// run.checkpoints.
[[nodiscard]] std::vector<TensorMap> load_run_checkpoints(const RunManifest& run);

/// Uniform-soup sweep: one row per k, each the unweighted average of the
/// newest k non-final checkpoints. Infeasible k values propagate the
/// selection error.
[[nodiscard]] SweepReport run_uniform_sweep(const RunManifest& run,
                                            const std::vector<std::size_t>& ks,
                                            Evaluator& evaluator);

/// Interval sweep: one row per interval m, souping base_spec.k checkpoints
/// taken every m-th newest-first. m == 1 selects adjacent checkpoints and
/// names the row identically to the plain soup.
[[nodiscard]] SweepReport run_interval_sweep(const RunManifest& run,
                                             const SelectionSpec& base_spec,
                                             const std::vector<std::size_t>& ms,
                                             Evaluator& evaluator);

/// Metric-weighted refinement: for each shortlisted selection, evaluates
/// loss-weighted and steps-weighted averages across the penalty grid, plus
/// one uniform reference row per selection (identical to the plain sweep's
/// row for that selection).
[[nodiscard]] SweepReport run_weighted_refinement(const RunManifest& run,
                                                  const std::vector<SelectionSpec>& shortlisted,
                                                  const std::vector<double>& penalties,
                                                  double power_q,
                                                  Evaluator& evaluator);

/// Scores the final checkpoint and the last merging checkpoint (the newest
/// non-final one) and annotates every row with its relative improvement
/// over each. Raises ValidationError on an empty report.
void compare_to_references(SweepReport& report, const RunManifest& run, Evaluator& evaluator);

/// Settings for the end-to-end sweep. When `penalties` is unset the
/// refinement uses per-metric defaults: {0.5, 0.6, 0.7, 0.75, 0.8, 0.9,
/// 1.0} for loss weighting and the same grid plus 1.05 for steps
/// weighting (later checkpoints may deserve amplification, not decay).
struct FullSweepOptions {
    std::vector<std::size_t> ks = {2, 3, 4, 5, 8, 10};
    std::vector<std::size_t> ms = {2, 3};
    std::optional<std::vector<double>> penalties;
    double power_q = 2.0;
    std::size_t shortlist_size = 2;
    bool skip_initial_validation = false;
    std::string out_dir;  // when non-empty, every candidate is written under <out_dir>/<name>/
};

/// The five-step procedure: (1) check the final checkpoint improves on the
/// first one (disable with skip_initial_validation), (2) uniform soups over
/// ks, (3) interval soups over ms for every k whose selection is feasible,
/// (4) shortlist the top soups, (5) metric-weighted refinement of the
/// shortlisted selections across the penalty grid. Returns the combined
/// report annotated against the final and last-merging references.
[[nodiscard]] SweepReport run_full_sweep(const RunManifest& run,
                                         Evaluator& evaluator,
                                         const FullSweepOptions& options);

/// Serializes a report with sorted keys; byte-identical for identical
/// sweeps.
[[nodiscard]] nlohmann::json report_to_json(const SweepReport& report);

/// Writes report_to_json(report) to `path`, pretty-printed.
void write_sweep_report(const std::string& path, const SweepReport& report);

}  // namespace ckmerge
