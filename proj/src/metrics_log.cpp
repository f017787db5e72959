#include "ckmerge/metrics_log.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ckmerge/errors.hpp"

namespace ckmerge {

using nlohmann::json;

namespace {

[[noreturn]] void fail_line(const std::string& path, std::size_t line_no, const std::string& what) {
    throw ValidationError("metrics log '" + path + "' line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::vector<MetricsRow> read_metrics_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open metrics log '" + path + "' for reading");
    }

    std::vector<MetricsRow> rows;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        // Skip blank lines so logs may end with (or contain) empty separators.
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }

        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            fail_line(path, line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!row.is_object()) {
            fail_line(path, line_no, "row is not a JSON object");
        }
        if (!row.contains("checkpoint_id") || !row["checkpoint_id"].is_string()) {
            fail_line(path, line_no, "missing or non-string 'checkpoint_id'");
        }
        if (!row.contains("step") || !row["step"].is_number_unsigned()) {
            fail_line(path, line_no, "missing or non-unsigned-integer 'step'");
        }
        if (!row.contains("train_loss") || !row["train_loss"].is_number()) {
            fail_line(path, line_no, "missing or non-numeric 'train_loss'");
        }

        MetricsRow parsed;
        parsed.checkpoint_id = row["checkpoint_id"].get<std::string>();
        parsed.step = row["step"].get<std::uint64_t>();
        parsed.train_loss = row["train_loss"].get<double>();

        if (parsed.checkpoint_id.empty()) {
            fail_line(path, line_no, "empty checkpoint id");
        }
        if (!seen_ids.insert(parsed.checkpoint_id).second) {
            fail_line(path, line_no, "duplicate checkpoint id '" + parsed.checkpoint_id + "'");
        }
        if (!std::isfinite(parsed.train_loss) || parsed.train_loss <= 0.0) {
            fail_line(path, line_no, "nonpositive loss for checkpoint '" + parsed.checkpoint_id + "'");
        }
        if (!rows.empty() && parsed.step <= rows.back().step) {
            fail_line(path, line_no, "steps not strictly increasing at checkpoint '" + parsed.checkpoint_id + "'");
        }
        rows.push_back(std::move(parsed));
    }
    return rows;
}

void write_metrics_log(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    for (const MetricsRow& row : rows) {
        json obj;
        obj["checkpoint_id"] = row.checkpoint_id;
        obj["step"] = row.step;
        obj["train_loss"] = row.train_loss;
        out << obj.dump() << '\n';
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw IoError("cannot open metrics log '" + path + "' for writing");
    }
    const std::string text = out.str();
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    file.flush();
    if (!file) {
        throw IoError("write failed for metrics log '" + path + "'");
    }
}

}  // namespace ckmerge
