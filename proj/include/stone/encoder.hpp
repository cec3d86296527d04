#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stone/preprocess.hpp"
#include "stone/random.hpp"
#include "stone/triplet_sampler.hpp"

namespace stone {

/// Dense row-major array of doubles with an explicit shape. Storage is
/// aligned to Eigen's widest packet.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double, Eigen::aligned_allocator<double>> values;

    static Tensor zeros(std::vector<std::size_t> shape);
    std::size_t size() const noexcept { return values.size(); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct EncoderConfig {
    std::size_t conv1_filters = 64;
    std::size_t conv2_filters = 128;
    std::size_t fc_units = 100;
    std::size_t embed_dim = 5;
    double dropout_rate = 0.25;
    double margin_alpha = 0.2;
    double noise_sigma = 0.10;

    void validate() const;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

enum class Mode { Train, Infer };

struct Parameter {
    std::string name;
    Tensor value;

    friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Shared-weight convolutional encoder:
///   [noise] -> conv2x2 -> ReLU -> [dropout] -> conv2x2 -> ReLU -> [dropout]
///   -> flatten -> FC -> ReLU -> FC(embed_dim) -> L2 normalize
/// Bracketed stages are active in Mode::Train only. Convolutions are valid
/// (unpadded) with stride 1. A zero pre-normalization vector maps to
/// (1, 0, ..., 0).
class EncoderModel {
public:
    EncoderModel() = default;
    EncoderModel(EncoderConfig config, std::size_t input_side, std::vector<Parameter> params);

    const EncoderConfig& config() const noexcept { return config_; }
    EncoderConfig& config() noexcept { return config_; }
    std::size_t input_side() const noexcept { return input_side_; }

    std::vector<Parameter>& parameters() noexcept { return params_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    const Tensor& parameter(const std::string& name) const;

    std::size_t parameter_count() const noexcept;

    /// Rounds every parameter to the nearest float so the model survives a
    /// 32-bit serialization round trip unchanged.
    void round_to_float();

    /// Expected parameter names and shapes for a configuration.
    static std::vector<Parameter> layout(const EncoderConfig& config, std::size_t input_side);

    friend bool operator==(const EncoderModel&, const EncoderModel&) = default;

private:
    EncoderConfig config_;
    std::size_t input_side_ = 0;
    std::vector<Parameter> params_;
};

/// He-style uniform initialization (limit sqrt(6 / fan_in)), zero biases.
EncoderModel init_model(const EncoderConfig& config, std::size_t input_side, std::uint64_t seed);

using Embedding = std::vector<double>;

/// Single-image forward pass. `rng` must be non-null exactly in Mode::Train.
Embedding encode(const EncoderModel& model, const FingerprintImage& img, Mode mode, Rng* rng = nullptr);

/// Inference-mode embeddings, one column per image. Column i equals
/// encode(model, images[i], Mode::Infer) bit for bit.
Eigen::MatrixXd encode_batch(const EncoderModel& model, std::span<const FingerprintImage> images);

double triplet_loss(std::span<const double> anchor, std::span<const double> positive, std::span<const double> negative,
                    double alpha);

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
};

struct StepResult {
    double mean_loss = 0.0;      // before the update
    std::size_t active = 0;      // triplets with a positive hinge
};

/// One Adam update on the mean hinged triplet loss of `batch`. A batch with
/// no active hinge leaves model and optimizer untouched.
StepResult train_step(EncoderModel& model, std::span<const Triplet> batch, AdamState& opt, Rng& rng);

/// Mean hinged loss over a batch and, when `grads` is non-null, its gradient
/// aligned with model.parameters(). Triplet i occupies images 3i..3i+2 of a
/// single batched forward pass, so all branches share one parameter set.
double batch_loss_and_gradient(const EncoderModel& model, std::span<const Triplet> batch, double alpha,
                               std::vector<Tensor>* grads, Mode mode, Rng* rng, std::size_t* active = nullptr);

class GradientCheckError : public Error {
public:
    using Error::Error;
};

class InactiveHingeError : public GradientCheckError {
public:
    using GradientCheckError::GradientCheckError;
};

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

/// Compares the analytic gradient of the triplet loss with central
/// differences (step 1e-5) for every parameter. Relative error is
/// |a - n| / max(|a|, |n|, 1e-6). Throws GradientCheckError when dropout or
/// noise is enabled, InactiveHingeError when the loss is already zero.
GradientCheckResult gradient_check(const EncoderModel& model, const Triplet& triplet, double alpha,
                                   double step = 1e-5);

/// Smallest |pre-activation| over every ReLU unit for the batch (inference mode).
double relu_margin(const EncoderModel& model, std::span<const Triplet> batch);

/// Gradient check of a freshly initialized encoder (default widths, dropout
/// and noise off, alpha 0.2, small random biases) on a random triplet whose
/// hinge is active and whose ReLU inputs all clear zero by at least 1e-4.
GradientCheckResult random_gradient_check(std::uint64_t seed, std::size_t input_side = 3, std::size_t embed_dim = 3);

}  // namespace stone
