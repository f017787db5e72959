#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"

#include "ckmerge/container.hpp"
#include "ckmerge/digest.hpp"
#include "ckmerge/dtypes.hpp"
#include "ckmerge/errors.hpp"
#include "ckmerge/metrics_log.hpp"
#include "ckmerge/runio.hpp"
#include "ckmerge/tensor.hpp"
#include "test_util.hpp"

using namespace ckmerge;

namespace {

void write_raw(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(bool(out));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string container_bytes(const std::string& header, const std::string& data) {
    std::string out;
    const std::uint64_t len = header.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
    out += header;
    out += data;
    return out;
}

template <typename Fn>
ContainerErrc error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const ContainerError& e) {
        return e.code();
    }
    FAIL("expected a ContainerError");
    return ContainerErrc::MalformedHeader;
}

}  // namespace

TEST_CASE("dtype registry") {
    CHECK(element_size(DType::F32) == 4);
    CHECK(element_size(DType::F16) == 2);
    CHECK(element_size(DType::BF16) == 2);
    CHECK(dtype_name(DType::F32) == "f32");
    CHECK(dtype_name(DType::F16) == "f16");
    CHECK(dtype_name(DType::BF16) == "bf16");
    CHECK(dtype_from_name("f32") == DType::F32);
    CHECK(dtype_from_name("f16") == DType::F16);
    CHECK(dtype_from_name("bf16") == DType::BF16);
    CHECK_THROWS_CONTAINS(ValidationError, "unknown dtype 'f64'", dtype_from_name("f64"));
}

TEST_CASE("every half-precision bit pattern survives decode then encode") {
    for (std::uint32_t bits = 0; bits <= 0xffff; ++bits) {
        const std::uint16_t in = static_cast<std::uint16_t>(bits);
        const std::uint16_t out = f32_to_f16_bits(f16_bits_to_f32(in));
        if (out != in) {
            CAPTURE(bits);
            REQUIRE(out == in);
        }
    }
    CHECK(true);  // reached only if every pattern round-tripped
}

TEST_CASE("every bfloat16 bit pattern survives decode then encode") {
    for (std::uint32_t bits = 0; bits <= 0xffff; ++bits) {
        const std::uint16_t in = static_cast<std::uint16_t>(bits);
        const std::uint16_t out = f32_to_bf16_bits(bf16_bits_to_f32(in));
        if (out != in) {
            CAPTURE(bits);
            REQUIRE(out == in);
        }
    }
    CHECK(true);
}

TEST_CASE("binary32 to binary16 rounds to nearest, ties to even") {
    CHECK(f32_to_f16_bits(0.0f) == 0x0000);
    CHECK(f32_to_f16_bits(-0.0f) == 0x8000);
    CHECK(f32_to_f16_bits(1.0f) == 0x3c00);
    CHECK(f32_to_f16_bits(-2.5f) == 0xc100);
    CHECK(f32_to_f16_bits(65504.0f) == 0x7bff);             // largest finite f16
    CHECK(f32_to_f16_bits(65520.0f) == 0x7c00);             // tie above the max -> infinity
    CHECK(f32_to_f16_bits(1.0e6f) == 0x7c00);               // saturating overflow
    CHECK(f32_to_f16_bits(-1.0e6f) == 0xfc00);
    CHECK(f32_to_f16_bits(std::ldexp(1.0f, -24)) == 0x0001);   // smallest subnormal
    CHECK(f32_to_f16_bits(std::ldexp(1.0f, -25)) == 0x0000);   // tie at zero -> even
    CHECK(f32_to_f16_bits(std::ldexp(1.5f, -25)) == 0x0001);   // above the tie rounds up
    CHECK(f32_to_f16_bits(std::ldexp(1.0f, -30)) == 0x0000);   // deep underflow
    CHECK(f32_to_f16_bits(1.0f + std::ldexp(1.0f, -10)) == 0x3c01);
    CHECK(f32_to_f16_bits(1.0f + std::ldexp(1.0f, -11)) == 0x3c00);  // tie -> even mantissa
    CHECK(f32_to_f16_bits(1.0f + 3.0f * std::ldexp(1.0f, -11)) == 0x3c02);
    CHECK(f32_to_f16_bits(std::numeric_limits<float>::infinity()) == 0x7c00);
    const std::uint16_t nan_bits = f32_to_f16_bits(std::numeric_limits<float>::quiet_NaN());
    CHECK((nan_bits & 0x7c00) == 0x7c00);
    CHECK((nan_bits & 0x03ff) != 0);
}

TEST_CASE("binary32 to bfloat16 rounds to nearest, ties to even") {
    CHECK(f32_to_bf16_bits(1.0f) == 0x3f80);
    CHECK(f32_to_bf16_bits(-1.0f) == 0xbf80);
    CHECK(f32_to_bf16_bits(1.0f + std::ldexp(1.0f, -8)) == 0x3f80);          // tie -> even
    CHECK(f32_to_bf16_bits(1.0f + 3.0f * std::ldexp(1.0f, -8)) == 0x3f82);   // tie -> even
    CHECK(f32_to_bf16_bits(1.0f + std::ldexp(1.0f, -7)) == 0x3f81);          // exact
    CHECK(f32_to_bf16_bits(std::numeric_limits<float>::infinity()) == 0x7f80);
    CHECK(bf16_bits_to_f32(0x3f80) == 1.0f);
    // A NaN whose payload lives entirely in the truncated bits must stay NaN.
    float sneaky_nan;
    const std::uint32_t sneaky_bits = 0x7f800001u;
    std::memcpy(&sneaky_nan, &sneaky_bits, sizeof sneaky_nan);
    const std::uint16_t out = f32_to_bf16_bits(sneaky_nan);
    CHECK((out & 0x7f80) == 0x7f80);
    CHECK((out & 0x007f) != 0);
}

TEST_CASE("tensor element access encodes through the declared dtype") {
    Tensor t(DType::F16, {3});
    t.set(0, 1.0);
    t.set(1, 0.1);  // not representable; must round
    t.set(2, -2.5);
    CHECK(t.get(0) == 1.0);
    CHECK(t.get(2) == -2.5);
    CHECK(t.get(1) == doctest::Approx(0.1).epsilon(1e-3));
    CHECK(t.get(1) != 0.1);  // binary16 cannot hold 0.1 exactly

    Tensor scalar(DType::F32, {});
    CHECK(scalar.element_count() == 1);
    scalar.set(0, 7.25);
    CHECK(scalar.get(0) == 7.25);

    const double values[] = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    const Tensor built = Tensor::from_doubles(DType::F32, {2, 3}, values);
    CHECK(built.element_count() == 6);
    CHECK(built.to_doubles() == std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    CHECK_THROWS_CONTAINS(ValidationError, "value count does not match",
                          Tensor::from_doubles(DType::F32, {2, 2}, values));
    CHECK_THROWS_CONTAINS(ValidationError, "zero dimension", Tensor(DType::F32, {2, 0}));
}

TEST_CASE("tensor map validation rejects structural defects") {
    TensorMap ok;
    ok.emplace("w", Tensor(DType::F32, {2}));
    CHECK_NOTHROW(validate_tensor_map(ok));

    TensorMap unnamed;
    unnamed.emplace("", Tensor(DType::F32, {2}));
    CHECK_THROWS_CONTAINS(ValidationError, "empty tensor name", validate_tensor_map(unnamed));

    TensorMap wrong_size;
    Tensor bad(DType::F32, {2});
    bad.data.pop_back();
    wrong_size.emplace("w", std::move(bad));
    CHECK_THROWS_CONTAINS(ValidationError, "buffer size does not match",
                          validate_tensor_map(wrong_size));
}

TEST_CASE("containers round-trip exactly across dtypes, shapes, and payloads") {
    const testutil::TempDir dir("container-roundtrip");
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> value(-100.0, 100.0);
    const DType dtypes[] = {DType::F32, DType::F16, DType::BF16};
    const char* pool[] = {"alpha", "beta.weight", "gamma/bias", "delta", "eps.0", "zeta-z"};

    for (int trial = 0; trial < 1000; ++trial) {
        TensorMap map;
        const std::size_t tensor_count = 1 + gen() % 5;
        for (std::size_t t = 0; t < tensor_count && map.size() < 6; ++t) {
            const std::string name = pool[gen() % 6];
            if (map.count(name)) continue;
            std::vector<std::size_t> shape;
            const std::size_t rank = 1 + gen() % 3;
            for (std::size_t d = 0; d < rank; ++d) shape.push_back(1 + gen() % 6);
            Tensor tensor(dtypes[gen() % 3], shape);
            for (std::size_t i = 0; i < tensor.element_count(); ++i) tensor.set(i, value(gen));
            map.emplace(name, std::move(tensor));
        }

        const std::filesystem::path path = dir.path() / "case.tensors";
        const std::string digest = write_container(map, path);
        const TensorMap restored = read_container(path);
        REQUIRE(restored == map);

        const std::vector<std::byte> original = serialize_container(map);
        const std::vector<std::byte> reserialized = serialize_container(restored);
        REQUIRE(reserialized == original);
        REQUIRE(digest == sha256_hex(original));
    }
}

TEST_CASE("one flipped byte changes the container digest") {
    const testutil::TempDir dir("container-digest");
    TensorMap map;
    Tensor t(DType::F32, {4});
    for (std::size_t i = 0; i < 4; ++i) t.set(i, static_cast<double>(i) + 0.5);
    map.emplace("w", std::move(t));
    const std::filesystem::path path = dir.path() / "model.tensors";
    const std::string digest = write_container(map, path);
    CHECK(digest.size() == 64);

    std::vector<std::byte> bytes = serialize_container(map);
    bytes.back() = static_cast<std::byte>(static_cast<std::uint8_t>(bytes.back()) ^ 0x01);
    CHECK(sha256_hex(bytes) != digest);
}

TEST_CASE("container reader rejects each defect with its own error code") {
    const testutil::TempDir dir("container-defects");
    const auto path_for = [&](const char* tag) { return dir.path() / (std::string(tag) + ".tensors"); };
    const auto read_at = [](const std::filesystem::path& p) { return [p] { (void)read_container(p); }; };

    SUBCASE("file shorter than the length field") {
        const auto p = path_for("short");
        write_raw(p, "abc");
        CHECK(error_code_of(read_at(p)) == ContainerErrc::TruncatedHeader);
    }
    SUBCASE("declared header length exceeds the file") {
        const auto p = path_for("hungry");
        std::string bytes = container_bytes("{}", "");
        bytes[0] = 100;  // lie about the header length
        write_raw(p, bytes);
        CHECK(error_code_of(read_at(p)) == ContainerErrc::TruncatedHeader);
    }
    SUBCASE("header is not JSON") {
        const auto p = path_for("notjson");
        write_raw(p, container_bytes("not json at all", ""));
        CHECK(error_code_of(read_at(p)) == ContainerErrc::MalformedHeader);
    }
    SUBCASE("header lacks the tensors object") {
        const auto p = path_for("notensors");
        write_raw(p, container_bytes(R"({"weights":{}})", ""));
        CHECK(error_code_of(read_at(p)) == ContainerErrc::MalformedHeader);
    }
    SUBCASE("tensor entry missing required keys") {
        const auto p = path_for("bareentry");
        write_raw(p, container_bytes(R"({"tensors":{"w":{}}})", ""));
        CHECK(error_code_of(read_at(p)) == ContainerErrc::MalformedHeader);
    }
    SUBCASE("zero dimension") {
        const auto p = path_for("zerodim");
        write_raw(p, container_bytes(
                         R"({"tensors":{"w":{"dtype":"f32","shape":[0],"offsets":[0,0]}}})", ""));
        CHECK(error_code_of(read_at(p)) == ContainerErrc::MalformedHeader);
    }
    SUBCASE("reversed offsets") {
        const auto p = path_for("reversed");
        write_raw(p, container_bytes(
                         R"({"tensors":{"w":{"dtype":"f32","shape":[1],"offsets":[4,0]}}})",
                         std::string(4, '\0')));
        CHECK(error_code_of(read_at(p)) == ContainerErrc::MalformedHeader);
    }
    SUBCASE("unknown dtype") {
        const auto p = path_for("f64");
        write_raw(p, container_bytes(
                         R"({"tensors":{"w":{"dtype":"f64","shape":[1],"offsets":[0,8]}}})",
                         std::string(8, '\0')));
        CHECK(error_code_of(read_at(p)) == ContainerErrc::UnknownDtype);
    }
    SUBCASE("data region shorter than the declared range") {
        const auto p = path_for("shortdata");
        write_raw(p, container_bytes(
                         R"({"tensors":{"w":{"dtype":"f32","shape":[2],"offsets":[0,8]}}})",
                         std::string(4, '\0')));
        CHECK(error_code_of(read_at(p)) == ContainerErrc::TruncatedData);
    }
    SUBCASE("range length disagrees with shape times dtype") {
        const auto p = path_for("sizemismatch");
        write_raw(p, container_bytes(
                         R"({"tensors":{"w":{"dtype":"f32","shape":[2],"offsets":[0,4]}}})",
                         std::string(8, '\0')));
        CHECK(error_code_of(read_at(p)) == ContainerErrc::SizeMismatch);
    }
    SUBCASE("two tensors claim intersecting ranges") {
        const auto p = path_for("overlap");
        write_raw(p, container_bytes(
                         R"({"tensors":{"a":{"dtype":"f32","shape":[1],"offsets":[0,4]},)"
                         R"("b":{"dtype":"f32","shape":[1],"offsets":[2,6]}}})",
                         std::string(8, '\0')));
        CHECK(error_code_of(read_at(p)) == ContainerErrc::OverlappingRanges);
    }
    SUBCASE("missing file raises a plain I/O error") {
        CHECK_THROWS_CONTAINS(IoError, "cannot open", (void)read_container(dir.path() / "absent.tensors"));
    }
}

TEST_CASE("container error codes have distinct names") {
    CHECK(container_errc_name(ContainerErrc::TruncatedHeader) == "truncated header");
    CHECK(container_errc_name(ContainerErrc::TruncatedData) == "truncated data region");
    CHECK(container_errc_name(ContainerErrc::MalformedHeader) == "malformed header");
    CHECK(container_errc_name(ContainerErrc::UnknownDtype) == "unknown dtype");
    CHECK(container_errc_name(ContainerErrc::SizeMismatch) == "size mismatch");
    CHECK(container_errc_name(ContainerErrc::OverlappingRanges) == "overlapping tensor ranges");
}

TEST_CASE("metrics logs round-trip and tolerate blank or CRLF lines") {
    const testutil::TempDir dir("metrics");
    const std::string path = (dir.path() / "metrics.jsonl").string();
    const std::vector<MetricsRow> rows = {
        {"ckpt-a", 100, 0.75},
        {"ckpt-b", 200, 0.5},
        {"ckpt-c", 300, 0.25},
    };
    write_metrics_log(path, rows);
    CHECK(read_metrics_log(path) == rows);

    const std::string crlf = (dir.path() / "crlf.jsonl").string();
    write_raw(crlf,
              "{\"checkpoint_id\":\"a\",\"step\":1,\"train_loss\":1.5}\r\n"
              "\r\n"
              "   \n"
              "{\"checkpoint_id\":\"b\",\"step\":2,\"train_loss\":0.5}\r\n");
    const std::vector<MetricsRow> parsed = read_metrics_log(crlf);
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0] == MetricsRow{"a", 1, 1.5});
    CHECK(parsed[1] == MetricsRow{"b", 2, 0.5});
}

TEST_CASE("metrics log errors carry the line number and reason") {
    const testutil::TempDir dir("metrics-errors");
    const auto write_log = [&](const char* tag, const std::string& text) {
        const std::string path = (dir.path() / (std::string(tag) + ".jsonl")).string();
        write_raw(path, text);
        return path;
    };
    const std::string good = "{\"checkpoint_id\":\"a\",\"step\":1,\"train_loss\":1.0}\n";

    CHECK_THROWS_CONTAINS(ValidationError, "line 2: malformed JSON",
                          read_metrics_log(write_log("badjson", good + "{oops\n")));
    CHECK_THROWS_CONTAINS(ValidationError, "line 1: row is not a JSON object",
                          read_metrics_log(write_log("array", "[1,2,3]\n")));
    CHECK_THROWS_CONTAINS(ValidationError, "non-string 'checkpoint_id'",
                          read_metrics_log(write_log("noid", "{\"step\":1,\"train_loss\":1.0}\n")));
    CHECK_THROWS_CONTAINS(
        ValidationError, "non-unsigned-integer 'step'",
        read_metrics_log(write_log("badstep", "{\"checkpoint_id\":\"a\",\"step\":-1,\"train_loss\":1.0}\n")));
    CHECK_THROWS_CONTAINS(
        ValidationError, "non-numeric 'train_loss'",
        read_metrics_log(write_log("badloss", "{\"checkpoint_id\":\"a\",\"step\":1,\"train_loss\":\"x\"}\n")));
    CHECK_THROWS_CONTAINS(
        ValidationError, "line 2: duplicate checkpoint id 'a'",
        read_metrics_log(write_log(
            "dup", good + "{\"checkpoint_id\":\"a\",\"step\":2,\"train_loss\":1.0}\n")));
    CHECK_THROWS_CONTAINS(
        ValidationError, "nonpositive loss for checkpoint 'b'",
        read_metrics_log(write_log(
            "zeroloss", good + "{\"checkpoint_id\":\"b\",\"step\":2,\"train_loss\":0.0}\n")));
    CHECK_THROWS_CONTAINS(
        ValidationError, "steps not strictly increasing at checkpoint 'b'",
        read_metrics_log(write_log(
            "badorder", good + "{\"checkpoint_id\":\"b\",\"step\":1,\"train_loss\":1.0}\n")));
    CHECK_THROWS_CONTAINS(IoError, "cannot open",
                          read_metrics_log((dir.path() / "absent.jsonl").string()));
}

TEST_CASE("run manifests round-trip and resolve checkpoint paths relative to the file") {
    const testutil::TempDir dir("run-manifest");
    RunManifest run;
    run.checkpoints.push_back({"ckpt-1", 100, 0.8, "ckpt-1.tensors"});
    run.checkpoints.push_back({"ckpt-2", 200, 0.4, "sub/ckpt-2.tensors"});
    LandscapeInfo landscape{16, 50.0};

    const std::string path = (dir.path() / "run_manifest.json").string();
    write_run_manifest(path, run, landscape);
    const RunManifestFile restored = read_run_manifest(path);

    REQUIRE(restored.run.checkpoints.size() == 2);
    CHECK(restored.run.checkpoints[0].id == "ckpt-1");
    CHECK(restored.run.checkpoints[0].step == 100);
    CHECK(restored.run.checkpoints[0].train_loss == 0.8);
    CHECK(restored.run.checkpoints[0].path ==
          (dir.path() / "ckpt-1.tensors").lexically_normal());
    CHECK(restored.run.checkpoints[1].path ==
          (dir.path() / "sub" / "ckpt-2.tensors").lexically_normal());
    REQUIRE(restored.landscape.has_value());
    CHECK(*restored.landscape == landscape);

    const std::string bare = (dir.path() / "bare.json").string();
    write_run_manifest(bare, run, std::nullopt);
    CHECK_FALSE(read_run_manifest(bare).landscape.has_value());
}

TEST_CASE("run manifest reader rejects malformed documents") {
    const testutil::TempDir dir("run-manifest-errors");
    const auto write_doc = [&](const char* tag, const std::string& text) {
        const std::string path = (dir.path() / (std::string(tag) + ".json")).string();
        write_raw(path, text);
        return path;
    };

    CHECK_THROWS_CONTAINS(IoError, "cannot open",
                          read_run_manifest((dir.path() / "absent.json").string()));
    CHECK_THROWS_CONTAINS(ValidationError, "malformed JSON",
                          read_run_manifest(write_doc("notjson", "{nope")));
    CHECK_THROWS_CONTAINS(ValidationError, "missing 'checkpoints' array",
                          read_run_manifest(write_doc("nolist", "{}")));
    CHECK_THROWS_CONTAINS(
        ValidationError, "checkpoint entry 1: missing or non-string 'id'",
        read_run_manifest(write_doc("noid", R"({"checkpoints":[{"step":1}]})")));
    CHECK_THROWS_CONTAINS(
        ValidationError, "malformed 'landscape' block",
        read_run_manifest(write_doc(
            "badland",
            R"({"checkpoints":[{"id":"a","step":1,"train_loss":1.0,"path":"a.tensors"}],"landscape":{"dimension":"x"}})")));
    CHECK_THROWS_CONTAINS(
        ValidationError, "condition number >= 1",
        read_run_manifest(write_doc(
            "lowcond",
            R"({"checkpoints":[{"id":"a","step":1,"train_loss":1.0,"path":"a.tensors"}],"landscape":{"dimension":4,"condition_number":0.5}})")));
    CHECK_THROWS_CONTAINS(
        ValidationError, "duplicate checkpoint id",
        read_run_manifest(write_doc(
            "dupid",
            R"({"checkpoints":[{"id":"a","step":1,"train_loss":1.0,"path":"a.tensors"},)"
            R"({"id":"a","step":2,"train_loss":1.0,"path":"b.tensors"}]})")));
}

TEST_CASE("merge manifests round-trip with optional per-input fields") {
    const testutil::TempDir dir("merge-manifest");
    MergeManifest manifest;
    manifest.name = "last_3_loss_pf-0_8";
    manifest.method = "mwa";
    manifest.inputs.push_back({"ckpt-1", 100, 0.5, 0.25});
    manifest.inputs.push_back({"ckpt-2", 200, std::nullopt, std::nullopt});
    manifest.parameters = {{"penalty", 0.8}, {"power", 2.0}};
    manifest.output_digest = std::string(64, 'a');

    const std::string path = (dir.path() / "manifest.json").string();
    write_merge_manifest(path, manifest);
    const MergeManifest restored = read_merge_manifest(path);
    CHECK(restored.name == manifest.name);
    CHECK(restored.method == manifest.method);
    CHECK(restored.inputs == manifest.inputs);
    CHECK(restored.parameters == manifest.parameters);
    CHECK(restored.output_digest == manifest.output_digest);

    const std::string again = (dir.path() / "again.json").string();
    write_merge_manifest(again, restored);
    std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());

    write_raw((dir.path() / "bad.json").string(), R"({"name":"x"})");
    CHECK_THROWS_CONTAINS(ValidationError, "missing or non-string 'method'",
                          read_merge_manifest((dir.path() / "bad.json").string()));
}
