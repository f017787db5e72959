#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <string>
#include <vector>

#include "doctest.h"

#include "ckmerge/errors.hpp"
#include "ckmerge/names.hpp"
#include "ckmerge/selection.hpp"
#include "test_util.hpp"

using namespace ckmerge;

namespace {

RunManifest make_run(std::size_t count, std::uint64_t step_stride = 10) {
    RunManifest run;
    for (std::size_t i = 1; i <= count; ++i) {
        CheckpointRecord record;
        record.step = step_stride * i;
        record.id = "ckpt-" + std::to_string(record.step);
        record.train_loss = 1.0 / static_cast<double>(i);
        record.path = record.id + ".tensors";
        run.checkpoints.push_back(record);
    }
    return run;
}

std::vector<std::uint64_t> steps_of(const std::vector<CheckpointRecord>& records) {
    std::vector<std::uint64_t> steps;
    for (const CheckpointRecord& record : records) steps.push_back(record.step);
    return steps;
}

}  // namespace

TEST_CASE("selection takes the newest non-final checkpoints, newest first") {
    const RunManifest run = make_run(10);  // steps 10..100; step 100 is final
    SelectionSpec spec;
    spec.k = 5;
    CHECK(steps_of(select_last_k(run, spec)) == std::vector<std::uint64_t>{90, 80, 70, 60, 50});
    spec.k = 1;
    CHECK(steps_of(select_last_k(run, spec)) == std::vector<std::uint64_t>{90});
    spec.k = 9;  // the entire non-final roster
    CHECK(select_last_k(run, spec).size() == 9);
    CHECK(select_last_k(run, spec).front().step == 90);
    CHECK(select_last_k(run, spec).back().step == 10);
}

TEST_CASE("interval selection strides from the newest non-final checkpoint") {
    const RunManifest run = make_run(10);
    SelectionSpec spec;
    spec.k = 3;
    spec.interval_m = 2;
    CHECK(steps_of(select_last_k(run, spec)) == std::vector<std::uint64_t>{90, 70, 50});
    spec.k = 2;
    spec.interval_m = 4;
    CHECK(steps_of(select_last_k(run, spec)) == std::vector<std::uint64_t>{90, 50});
}

TEST_CASE("selection failure names the required and available counts") {
    const RunManifest run = make_run(5);  // 4 non-final
    SelectionSpec spec;
    spec.k = 5;
    CHECK_THROWS_CONTAINS(ValidationError, "insufficient checkpoints", select_last_k(run, spec));
    CHECK_THROWS_CONTAINS(ValidationError, "only 4 are available", select_last_k(run, spec));
    spec.k = 3;
    spec.interval_m = 2;  // needs (3-1)*2+1 = 5 > 4
    CHECK_THROWS_CONTAINS(ValidationError, "insufficient checkpoints", select_last_k(run, spec));
    spec.interval_m = 1;
    CHECK_THROWS_CONTAINS(ValidationError, "interval must be >= 2", select_last_k(run, spec));
    spec.interval_m.reset();
    spec.k = 0;
    CHECK_THROWS_CONTAINS(ValidationError, "requires k >= 1", select_last_k(run, spec));
}

TEST_CASE("the boundary selection exactly exhausts the roster") {
    const RunManifest run = make_run(10);  // 9 non-final
    SelectionSpec spec;
    spec.k = 5;
    spec.interval_m = 2;  // needs (5-1)*2+1 = 9 == available
    CHECK(steps_of(select_last_k(run, spec)) == std::vector<std::uint64_t>{90, 70, 50, 30, 10});
}

TEST_CASE("manifest validation rejects malformed rosters") {
    RunManifest empty;
    CHECK_THROWS_CONTAINS(ValidationError, "no checkpoints", empty.validate());

    RunManifest run = make_run(3);
    run.checkpoints[1].id = run.checkpoints[0].id;
    CHECK_THROWS_CONTAINS(ValidationError, "duplicate checkpoint id", run.validate());

    run = make_run(3);
    run.checkpoints[2].step = run.checkpoints[1].step;
    CHECK_THROWS_CONTAINS(ValidationError, "not strictly increasing", run.validate());

    run = make_run(3);
    run.checkpoints[1].train_loss = 0.0;
    CHECK_THROWS_CONTAINS(ValidationError, "nonpositive loss", run.validate());

    run = make_run(3);
    run.checkpoints[0].id.clear();
    CHECK_THROWS_CONTAINS(ValidationError, "empty id", run.validate());
}

TEST_CASE("final checkpoint accessor") {
    const RunManifest run = make_run(4);
    CHECK(run.final_checkpoint().step == 40);
}

TEST_CASE("weighted-average names parse field by field") {
    MergeName name = parse_name("last_10_loss_pf-0_7");
    CHECK(name.k == 10);
    CHECK_FALSE(name.interval_m.has_value());
    CHECK(name.scheme == MergeName::Scheme::Loss);
    CHECK(name.penalty == 0.7);

    name = parse_name("last_4_3_loss_pf-0_8");
    CHECK(name.k == 4);
    CHECK(name.interval_m == 3);
    CHECK(name.penalty == 0.8);

    name = parse_name("last_10_steps_pf-1_05");
    CHECK(name.scheme == MergeName::Scheme::Steps);
    CHECK(name.penalty == 1.05);

    name = parse_name("last_5_3_unweighted");
    CHECK(name.k == 5);
    CHECK(name.interval_m == 3);
    CHECK(name.scheme == MergeName::Scheme::Unweighted);
    CHECK_FALSE(name.penalty.has_value());

    name = parse_name("last_10_loss_pf-0_75");
    CHECK(name.penalty == 0.75);
}

TEST_CASE("weighted-average names format with minimal penalty digits") {
    MergeName name;
    name.k = 10;
    name.scheme = MergeName::Scheme::Loss;
    name.penalty = 0.7;
    CHECK(format_name(name) == "last_10_loss_pf-0_7");
    name.penalty = 0.75;
    CHECK(format_name(name) == "last_10_loss_pf-0_75");
    name.penalty = 1.0;
    CHECK(format_name(name) == "last_10_loss_pf-1_0");
    name.scheme = MergeName::Scheme::Steps;
    name.penalty = 1.05;
    CHECK(format_name(name) == "last_10_steps_pf-1_05");
    name.scheme = MergeName::Scheme::Unweighted;
    name.penalty.reset();
    name.interval_m = 3;
    name.k = 5;
    CHECK(format_name(name) == "last_5_3_unweighted");
}

TEST_CASE("name round-trip holds across random fields") {
    std::mt19937_64 gen(404);
    const double penalties[] = {0.5, 0.6, 0.7, 0.75, 0.8, 0.9, 1.0, 1.05, 0.125, 2.5};
    for (int trial = 0; trial < 500; ++trial) {
        MergeName name;
        name.k = 1 + gen() % 64;
        if (gen() % 2 == 0) name.interval_m = 2 + gen() % 9;
        switch (gen() % 3) {
            case 0:
                name.scheme = MergeName::Scheme::Unweighted;
                break;
            case 1:
                name.scheme = MergeName::Scheme::Loss;
                name.penalty = penalties[gen() % 10];
                break;
            default:
                name.scheme = MergeName::Scheme::Steps;
                name.penalty = penalties[gen() % 10];
                break;
        }
        const std::string text = format_name(name);
        const MergeName reparsed = parse_name(text);
        CHECK(reparsed == name);
        CHECK(format_name(reparsed) == text);
    }
}

TEST_CASE("malformed names are rejected with a position") {
    const char* bad_names[] = {
        "",
        "last",
        "last_",
        "last_0_unweighted",
        "last_5",
        "last_5_loss",
        "last_5_loss_pf-0",
        "last_5_loss_pf0_7",
        "last_5_bogus",
        "last_5_unweighted_extra",
        "last_5_loss_pf-0_7_9",
        "first_5_unweighted",
        "last_x_unweighted",
        "last_5_3_2_unweighted",
        "last_5_loss_pf-_7",
        "last_5_loss_pf-0_",
    };
    for (const char* text : bad_names) {
        CHECK_THROWS_CONTAINS(ValidationError, "position", parse_name(text));
        CHECK_THROWS_CONTAINS(ValidationError, "invalid merge name", parse_name(text));
    }
}

TEST_CASE("comparison-method names parse and round-trip") {
    BaselineName name = parse_baseline_name("dare_ties_last_10_base_first");
    CHECK(name.method == "dare_ties");
    CHECK(name.k == 10);
    CHECK_FALSE(name.interval_m.has_value());
    CHECK(name.base == BaseChoice::FirstCheckpoint);

    name = parse_baseline_name("ties_last_5_3_base_last");
    CHECK(name.method == "ties");
    CHECK(name.k == 5);
    CHECK(name.interval_m == 3);
    CHECK(name.base == BaseChoice::LastCheckpoint);

    name = parse_baseline_name("slerp_last_2_base_last");
    CHECK(name.method == "slerp");
    CHECK(name.k == 2);

    const char* corpus[] = {
        "ties_last_3_base_first",    "ties_last_3_base_last",      "ties_last_5_base_first",
        "ties_last_5_base_last",     "ties_last_10_base_first",    "ties_last_10_base_last",
        "dare_ties_last_3_base_first", "dare_ties_last_3_base_last", "dare_ties_last_5_base_first",
        "dare_ties_last_5_base_last", "dare_ties_last_10_base_first", "dare_ties_last_10_base_last",
        "slerp_last_2_base_first",   "slerp_last_2_base_last",     "ties_last_5_3_base_first",
        "ties_last_5_3_base_last",   "dare_ties_last_5_3_base_first", "dare_ties_last_5_3_base_last",
    };
    for (const char* text : corpus) {
        CHECK(format_baseline_name(parse_baseline_name(text)) == text);
    }
}

TEST_CASE("malformed comparison names are rejected") {
    const char* bad_names[] = {
        "soup_last_5_base_first",
        "ties_last_5",
        "ties_last_5_base_middle",
        "ties_first_5_base_first",
        "dare_last_5_base_first",
        "ties_last_5_base_first_x",
        "ties_last_0_base_first",
    };
    for (const char* text : bad_names) {
        CHECK_THROWS_CONTAINS(ValidationError, "position", parse_baseline_name(text));
    }
}
