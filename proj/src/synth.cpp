#include "ckmerge/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "ckmerge/container.hpp"
#include "ckmerge/errors.hpp"
#include "ckmerge/metrics_log.hpp"

namespace ckmerge {

namespace fs = std::filesystem;

std::vector<double> hessian_eigenvalues(std::size_t dimension, double condition_number) {
    if (dimension == 0) {
        throw ValidationError("landscape dimension must be >= 1");
    }
    if (!std::isfinite(condition_number) || condition_number < 1.0) {
        throw ValidationError("condition number must be a finite value >= 1");
    }
    std::vector<double> eigenvalues(dimension, 1.0);
    if (dimension == 1) {
        return eigenvalues;
    }
    const double log_kappa = std::log(condition_number);
    for (std::size_t i = 0; i < dimension; ++i) {
        const double fraction = static_cast<double>(i) / static_cast<double>(dimension - 1);
        eigenvalues[i] = std::exp(fraction * log_kappa);
    }
    // Pin the endpoints so rounding in exp/log cannot move them.
    eigenvalues.front() = 1.0;
    eigenvalues.back() = condition_number;
    return eigenvalues;
}

double quadratic_loss(const std::vector<double>& eigenvalues, const std::vector<double>& theta) {
    if (eigenvalues.size() != theta.size()) {
        throw ValidationError("parameter dimension does not match landscape dimension");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        acc += eigenvalues[i] * theta[i] * theta[i];
    }
    return 0.5 * acc;
}

double GaussianSource::next() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller on two 53-bit uniforms taken from the top bits of raw
    // mt19937_64 output. u1 is shifted into (0, 1] so log(u1) is finite.
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

namespace {

void validate_config(const TrajectoryConfig& config, const std::vector<double>& eigenvalues) {
    if (!std::isfinite(config.noise_std) || config.noise_std < 0.0) {
        throw ValidationError("noise standard deviation must be a finite value >= 0");
    }
    if (!std::isfinite(config.learning_rate) || config.learning_rate <= 0.0) {
        throw ValidationError("learning rate must be a finite value > 0");
    }
    if (config.total_steps == 0) {
        throw ValidationError("total steps must be >= 1");
    }
    if (config.checkpoint_every == 0) {
        throw ValidationError("checkpoint interval must be >= 1");
    }
    if (config.checkpoint_every > config.total_steps) {
        throw ValidationError("checkpoint interval exceeds total steps; no checkpoint would be saved");
    }
    const double contraction = config.learning_rate * eigenvalues.back();
    if (contraction >= 2.0) {
        throw ValidationError("unstable learning rate: learning_rate * max_eigenvalue = " +
                              std::to_string(contraction) + " must be < 2");
    }
}

std::string checkpoint_id_for_step(std::uint64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt-%08llu", static_cast<unsigned long long>(step));
    return buf;
}

}  // namespace

SimulatedRun simulate_trajectory(const TrajectoryConfig& config) {
    const std::vector<double> eigenvalues = hessian_eigenvalues(config.dimension, config.condition_number);
    validate_config(config, eigenvalues);

    SimulatedRun result;
    result.landscape.dimension = config.dimension;
    result.landscape.condition_number = config.condition_number;

    GaussianSource noise(config.seed);
    std::vector<double> theta(config.dimension);
    for (double& coordinate : theta) {
        coordinate = noise.next();
    }

    for (std::uint64_t step = 1; step <= config.total_steps; ++step) {
        for (std::size_t i = 0; i < config.dimension; ++i) {
            const double gradient = eigenvalues[i] * theta[i] + config.noise_std * noise.next();
            theta[i] -= config.learning_rate * gradient;
        }
        if (step % config.checkpoint_every != 0) {
            continue;
        }

        Tensor stored = Tensor::from_doubles(DType::F32, {config.dimension}, theta);
        // Record the loss of the parameters as stored, after float32
        // rounding, so the log and the saved tensors agree exactly.
        const double logged_loss = quadratic_loss(eigenvalues, stored.to_doubles());

        CheckpointRecord record;
        record.id = checkpoint_id_for_step(step);
        record.step = step;
        record.train_loss = logged_loss;
        record.path = record.id + ".tensors";
        result.run.checkpoints.push_back(std::move(record));

        TensorMap snapshot;
        snapshot.emplace("theta", std::move(stored));
        result.snapshots.push_back(std::move(snapshot));
    }

    result.run.validate();
    return result;
}

std::string write_synthetic_run(const TrajectoryConfig& config, const std::string& out_dir) {
    const SimulatedRun simulated = simulate_trajectory(config);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
    }

    for (std::size_t i = 0; i < simulated.snapshots.size(); ++i) {
        const fs::path container_path = fs::path(out_dir) / simulated.run.checkpoints[i].path;
        write_container(simulated.snapshots[i], container_path);
    }

    std::vector<MetricsRow> rows;
    rows.reserve(simulated.run.checkpoints.size());
    for (const CheckpointRecord& record : simulated.run.checkpoints) {
        rows.push_back({record.id, record.step, record.train_loss});
    }
    write_metrics_log((fs::path(out_dir) / "metrics.jsonl").string(), rows);

    const std::string manifest_path = (fs::path(out_dir) / "run_manifest.json").string();
    write_run_manifest(manifest_path, simulated.run, simulated.landscape);
    return manifest_path;
}

}  // namespace ckmerge
