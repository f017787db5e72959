#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ckmerge/selection.hpp"

namespace ckmerge {

/// Shape of the quadratic landscape a synthetic run was trained on.
/// Carried inside the run manifest so downstream tooling can rebuild the
/// matching evaluator without re-deriving it from the trajectory.
struct LandscapeInfo {
    std::size_t dimension = 0;
    double condition_number = 1.0;

    bool operator==(const LandscapeInfo&) const = default;
};

/// A run manifest file: the checkpoint roster plus optional landscape
/// metadata. Checkpoint paths are stored relative to the manifest's
/// directory and are resolved against it on read.
struct RunManifestFile {
    RunManifest run;
    std::optional<LandscapeInfo> landscape;
};

/// Reads and validates a run manifest. Raises IoError when the file cannot
/// be read and ValidationError when its contents are malformed or violate
/// the roster invariants (ordering, uniqueness, positive losses).
RunManifestFile read_run_manifest(const std::string& path);

/// Writes a run manifest with deterministic key ordering. Checkpoint paths
/// are written exactly as given; callers should pass paths relative to the
/// manifest's directory so the file is location-independent.
void write_run_manifest(const std::string& path,
                        const RunManifest& run,
                        const std::optional<LandscapeInfo>& landscape);

/// One input checkpoint of a merge, with the metric value and linear weight
/// it contributed where the method defines them.
struct MergeInputRecord {
    std::string checkpoint_id;
    std::uint64_t step = 0;
    std::optional<double> metric_value;
    std::optional<double> weight;

    bool operator==(const MergeInputRecord&) const = default;
};

/// Provenance record written next to every merged container: what was
/// merged, how, and the digest of the bytes that came out.
struct MergeManifest {
    std::string name;
    std::string method;
    std::vector<MergeInputRecord> inputs;
    nlohmann::json parameters = nlohmann::json::object();
    std::string output_digest;
};

/// Writes a merge manifest as pretty-printed JSON with sorted keys, so
/// identical merges produce byte-identical manifests.
void write_merge_manifest(const std::string& path, const MergeManifest& manifest);

/// Reads a merge manifest back. Raises IoError / ValidationError mirroring
/// read_run_manifest.
MergeManifest read_merge_manifest(const std::string& path);

}  // namespace ckmerge
