#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ckmerge/runio.hpp"
#include "ckmerge/tensor.hpp"

namespace ckmerge {

/// Configuration for simulating noisy SGD on a diagonal quadratic bowl
/// 0.5 * theta' H theta with eigenvalues log-spaced between 1 and the
/// condition number.
struct TrajectoryConfig {
    std::size_t dimension = 64;
    double condition_number = 100.0;
    double noise_std = 0.05;
    double learning_rate = 0.01;
    std::uint64_t total_steps = 2000;
    std::uint64_t checkpoint_every = 100;
    std::uint64_t seed = 0;
};

/// Diagonal Hessian eigenvalues: `dimension` values log-spaced from 1 to
/// `condition_number` inclusive (a single value of 1 when dimension == 1).
std::vector<double> hessian_eigenvalues(std::size_t dimension, double condition_number);

/// 0.5 * sum_i lambda_i * theta_i^2.
double quadratic_loss(const std::vector<double>& eigenvalues, const std::vector<double>& theta);

/// Deterministic standard-normal stream: Box-Muller over the raw 64-bit
/// output of mt19937_64, independent of the C++ standard library's
/// unspecified distribution algorithms so streams are reproducible across
/// toolchains.
class GaussianSource {
public:
    explicit GaussianSource(std::uint64_t seed) : gen_(seed) {}

    double next();

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// A simulated run held in memory: the checkpoint roster (with the file
/// names the checkpoints would be written under), the landscape that
/// generated it, and the parameter snapshots themselves, index-aligned
/// with run.checkpoints.
struct SimulatedRun {
    RunManifest run;
    LandscapeInfo landscape;
    std::vector<TensorMap> snapshots;
};

/// Runs the noisy-SGD simulation and captures a checkpoint every
/// `checkpoint_every` steps (at steps e, 2e, ..., up to total_steps).
/// Parameters are stored in float32, and each checkpoint's recorded loss is
/// computed from the rounded values actually stored. Raises ValidationError
/// for degenerate configurations, including learning rates that make the
/// largest-curvature direction diverge.
SimulatedRun simulate_trajectory(const TrajectoryConfig& config);

/// Simulates a trajectory and writes it under out_dir as one container per
/// checkpoint plus run_manifest.json and metrics.jsonl. Returns the path of
/// the run manifest. The same configuration always produces byte-identical
/// output on a given platform.
std::string write_synthetic_run(const TrajectoryConfig& config, const std::string& out_dir);

}  // namespace ckmerge
