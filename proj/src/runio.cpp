#include "ckmerge/runio.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ckmerge/errors.hpp"

namespace ckmerge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(std::string("cannot open ") + what + " '" + path + "' for reading");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::exception& e) {
        throw ValidationError(std::string(what) + " '" + path + "': malformed JSON: " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text, const char* what) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(std::string("cannot open ") + what + " '" + path + "' for writing");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
        throw IoError(std::string("write failed for ") + what + " '" + path + "'");
    }
}

[[noreturn]] void fail_manifest(const std::string& path, const std::string& what) {
    throw ValidationError("run manifest '" + path + "': " + what);
}

}  // namespace

RunManifestFile read_run_manifest(const std::string& path) {
    const json doc = read_json_file(path, "run manifest");
    if (!doc.is_object() || !doc.contains("checkpoints") || !doc["checkpoints"].is_array()) {
        fail_manifest(path, "missing 'checkpoints' array");
    }

    RunManifestFile out;
    const fs::path base_dir = fs::path(path).parent_path();
    std::size_t index = 0;
    for (const json& entry : doc["checkpoints"]) {
        ++index;
        const std::string where = "checkpoint entry " + std::to_string(index);
        if (!entry.is_object()) {
            fail_manifest(path, where + " is not an object");
        }
        if (!entry.contains("id") || !entry["id"].is_string()) {
            fail_manifest(path, where + ": missing or non-string 'id'");
        }
        if (!entry.contains("step") || !entry["step"].is_number_unsigned()) {
            fail_manifest(path, where + ": missing or non-unsigned-integer 'step'");
        }
        if (!entry.contains("train_loss") || !entry["train_loss"].is_number()) {
            fail_manifest(path, where + ": missing or non-numeric 'train_loss'");
        }
        if (!entry.contains("path") || !entry["path"].is_string()) {
            fail_manifest(path, where + ": missing or non-string 'path'");
        }

        CheckpointRecord record;
        record.id = entry["id"].get<std::string>();
        record.step = entry["step"].get<std::uint64_t>();
        record.train_loss = entry["train_loss"].get<double>();
        const fs::path stored(entry["path"].get<std::string>());
        record.path = (stored.is_absolute() ? stored : base_dir / stored).lexically_normal().string();
        out.run.checkpoints.push_back(std::move(record));
    }

    if (doc.contains("landscape")) {
        const json& land = doc["landscape"];
        if (!land.is_object() || !land.contains("dimension") || !land["dimension"].is_number_unsigned() ||
            !land.contains("condition_number") || !land["condition_number"].is_number()) {
            fail_manifest(path, "malformed 'landscape' block");
        }
        LandscapeInfo info;
        info.dimension = land["dimension"].get<std::size_t>();
        info.condition_number = land["condition_number"].get<double>();
        if (info.dimension == 0 || info.condition_number < 1.0) {
            fail_manifest(path, "landscape dimension must be >= 1 and condition number >= 1");
        }
        out.landscape = info;
    }

    try {
        out.run.validate();
    } catch (const ValidationError& e) {
        fail_manifest(path, e.what());
    }
    return out;
}

void write_run_manifest(const std::string& path,
                        const RunManifest& run,
                        const std::optional<LandscapeInfo>& landscape) {
    run.validate();
    json doc;
    doc["checkpoints"] = json::array();
    for (const CheckpointRecord& record : run.checkpoints) {
        json entry;
        entry["id"] = record.id;
        entry["step"] = record.step;
        entry["train_loss"] = record.train_loss;
        entry["path"] = record.path.generic_string();
        doc["checkpoints"].push_back(std::move(entry));
    }
    if (landscape) {
        doc["landscape"]["dimension"] = landscape->dimension;
        doc["landscape"]["condition_number"] = landscape->condition_number;
    }
    write_text_file(path, doc.dump(2) + "\n", "run manifest");
}

void write_merge_manifest(const std::string& path, const MergeManifest& manifest) {
    json doc;
    doc["name"] = manifest.name;
    doc["method"] = manifest.method;
    doc["inputs"] = json::array();
    for (const MergeInputRecord& input : manifest.inputs) {
        json entry;
        entry["checkpoint_id"] = input.checkpoint_id;
        entry["step"] = input.step;
        if (input.metric_value) {
            entry["metric_value"] = *input.metric_value;
        }
        if (input.weight) {
            entry["weight"] = *input.weight;
        }
        doc["inputs"].push_back(std::move(entry));
    }
    doc["parameters"] = manifest.parameters;
    doc["output_digest"] = manifest.output_digest;
    write_text_file(path, doc.dump(2) + "\n", "merge manifest");
}

MergeManifest read_merge_manifest(const std::string& path) {
    const json doc = read_json_file(path, "merge manifest");
    auto fail = [&](const std::string& what) -> void {
        throw ValidationError("merge manifest '" + path + "': " + what);
    };
    if (!doc.is_object()) {
        fail("top level is not an object");
    }
    for (const char* key : {"name", "method", "output_digest"}) {
        if (!doc.contains(key) || !doc[key].is_string()) {
            fail(std::string("missing or non-string '") + key + "'");
        }
    }
    if (!doc.contains("inputs") || !doc["inputs"].is_array()) {
        fail("missing 'inputs' array");
    }
    if (!doc.contains("parameters") || !doc["parameters"].is_object()) {
        fail("missing 'parameters' object");
    }

    MergeManifest out;
    out.name = doc["name"].get<std::string>();
    out.method = doc["method"].get<std::string>();
    out.parameters = doc["parameters"];
    out.output_digest = doc["output_digest"].get<std::string>();
    for (const json& entry : doc["inputs"]) {
        if (!entry.is_object() || !entry.contains("checkpoint_id") || !entry["checkpoint_id"].is_string() ||
            !entry.contains("step") || !entry["step"].is_number_unsigned()) {
            fail("malformed input entry");
        }
        MergeInputRecord input;
        input.checkpoint_id = entry["checkpoint_id"].get<std::string>();
        input.step = entry["step"].get<std::uint64_t>();
        if (entry.contains("metric_value")) {
            if (!entry["metric_value"].is_number()) {
                fail("non-numeric metric_value");
            }
            input.metric_value = entry["metric_value"].get<double>();
        }
        if (entry.contains("weight")) {
            if (!entry["weight"].is_number()) {
                fail("non-numeric weight");
            }
            input.weight = entry["weight"].get<double>();
        }
        out.inputs.push_back(std::move(input));
    }
    return out;
}

}  // namespace ckmerge
