#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ckmerge {

/// One saved checkpoint: identifier, training steps elapsed at save time,
/// training loss at save time, and the location of its tensor container.
struct CheckpointRecord {
    std::string id;
    std::uint64_t step = 0;
    double train_loss = 0.0;
    std::filesystem::path path;

    bool operator==(const CheckpointRecord&) const = default;
};

/// A training run's checkpoint stream, sorted by step ascending with
/// strictly increasing steps. The last entry is the final checkpoint —
/// the training-end snapshot that soups exclude but comparisons report.
struct RunManifest {
    std::vector<CheckpointRecord> checkpoints;

    /// Throws ValidationError on empty runs, non-increasing steps,
    /// duplicate ids, or nonpositive losses.
    void validate() const;

    [[nodiscard]] const CheckpointRecord& final_checkpoint() const;
};

/// Soup membership: the newest k non-final checkpoints, optionally taking
/// every interval_m-th (interval_m >= 2 when present; omit it to take
/// adjacent checkpoints).
struct SelectionSpec {
    std::size_t k = 1;
    std::optional<std::size_t> interval_m;

    bool operator==(const SelectionSpec&) const = default;
};

/// Selects soup members: drops the final checkpoint, walks the remaining
/// checkpoints newest-first with stride interval_m (anchored at the newest
/// non-final checkpoint), and collects k records. Returned newest-first,
/// so the first record is the last merging checkpoint. Throws
/// ValidationError when the run is too shallow, stating required versus
/// available counts.
[[nodiscard]] std::vector<CheckpointRecord> select_last_k(const RunManifest& run,
                                                          const SelectionSpec& spec);

}  // namespace ckmerge
