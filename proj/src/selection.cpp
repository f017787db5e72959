#include "ckmerge/selection.hpp"

#include <set>

#include "ckmerge/errors.hpp"

namespace ckmerge {

void RunManifest::validate() const {
    if (checkpoints.empty()) throw ValidationError("run manifest has no checkpoints");
    std::set<std::string> ids;
    std::uint64_t previous_step = 0;
    bool first = true;
    for (const CheckpointRecord& record : checkpoints) {
        if (record.id.empty()) throw ValidationError("checkpoint with empty id");
        if (!ids.insert(record.id).second) {
            throw ValidationError("duplicate checkpoint id '" + record.id + "'");
        }
        if (!first && record.step <= previous_step) {
            throw ValidationError("checkpoint steps not strictly increasing at id '" +
                                  record.id + "'");
        }
        if (!(record.train_loss > 0.0)) {
            throw ValidationError("nonpositive loss for checkpoint '" + record.id + "'");
        }
        previous_step = record.step;
        first = false;
    }
}

const CheckpointRecord& RunManifest::final_checkpoint() const {
    if (checkpoints.empty()) throw ValidationError("run manifest has no checkpoints");
    return checkpoints.back();
}

std::vector<CheckpointRecord> select_last_k(const RunManifest& run, const SelectionSpec& spec) {
    if (spec.k == 0) throw ValidationError("selection requires k >= 1");
    if (spec.interval_m.has_value() && *spec.interval_m < 2) {
        throw ValidationError("selection interval must be >= 2 when present");
    }
    run.validate();

    // Everything but the final checkpoint, newest first.
    const std::size_t non_final =
        run.checkpoints.empty() ? 0 : run.checkpoints.size() - 1;
    const std::size_t stride = spec.interval_m.value_or(1);
    // Walking k records at this stride reaches back (k-1)*stride + 1 deep.
    const std::size_t required = (spec.k - 1) * stride + 1;
    if (non_final < required) {
        throw ValidationError(
            "insufficient checkpoints: selecting " + std::to_string(spec.k) +
            (spec.interval_m.has_value()
                 ? " at interval " + std::to_string(*spec.interval_m)
                 : std::string()) +
            " requires " + std::to_string(required) + " non-final checkpoints but only " +
            std::to_string(non_final) + " are available");
    }

    std::vector<CheckpointRecord> selected;
    selected.reserve(spec.k);
    for (std::size_t taken = 0; taken < spec.k; ++taken) {
        // newest-first index into the non-final checkpoints
        const std::size_t back_offset = taken * stride;
        selected.push_back(run.checkpoints[non_final - 1 - back_offset]);
    }
    return selected;
}

}  // namespace ckmerge
