#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ckmerge {

/// One row of a training metrics log: the identity of a saved checkpoint,
/// the optimizer step it was captured at, and the training loss observed
/// at that step.
struct MetricsRow {
    std::string checkpoint_id;
    std::uint64_t step = 0;
    double train_loss = 0.0;

    bool operator==(const MetricsRow&) const = default;
};

/// Reads a JSONL metrics log: one JSON object per non-empty line with keys
/// "checkpoint_id" (string), "step" (unsigned integer), and "train_loss"
/// (positive real). Rows must appear in strictly increasing step order and
/// checkpoint ids must be unique. Malformed rows raise ValidationError with
/// the 1-based line number; an unreadable file raises IoError.
std::vector<MetricsRow> read_metrics_log(const std::string& path);

/// Writes rows as JSONL in the given order, one compact object per line.
/// Raises IoError when the file cannot be created or written.
void write_metrics_log(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace ckmerge
