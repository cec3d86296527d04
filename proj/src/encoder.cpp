#include "stone/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stone {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMatrix, Eigen::AlignedMax>;
using Weights = Eigen::Map<RowMatrix, Eigen::AlignedMax>;
using ConstBias = Eigen::Map<const Vector, Eigen::AlignedMax>;
using Bias = Eigen::Map<Vector, Eigen::AlignedMax>;

constexpr std::size_t kKernel = 2;
constexpr std::size_t kTaps = kKernel * kKernel;
constexpr double kMinNorm = 1e-12;
// Central differences with step h are only valid when no ReLU input lies
// within about h of zero.
constexpr double kKinkMargin = 1e-4;

enum ParamIndex : std::size_t { kConv1W, kConv1B, kConv2W, kConv2B, kFc1W, kFc1B, kEmbedW, kEmbedB, kParamCount };

ConstWeights weights(const Tensor& t, std::size_t rows) {
    return ConstWeights(t.values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(t.size() / rows));
}
Weights weights(Tensor& t, std::size_t rows) {
    return Weights(t.values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(t.size() / rows));
}
ConstBias bias(const Tensor& t) { return ConstBias(t.values.data(), static_cast<Eigen::Index>(t.size())); }
Bias bias(Tensor& t) { return Bias(t.values.data(), static_cast<Eigen::Index>(t.size())); }

// Activations of a conv stage are stored as (channels, positions * images)
// with column index image * side^2 + row * side + col.
// Output buffers are resized in place so repeated same-shape calls reuse storage.
void im2col(const Matrix& in, std::size_t side, std::size_t images, Matrix& cols) {
    const std::size_t channels = static_cast<std::size_t>(in.rows());
    const std::size_t out_side = side - 1;
    const std::size_t in_pos = side * side;
    const std::size_t out_pos = out_side * out_side;
    cols.resize(static_cast<Eigen::Index>(channels * kTaps), static_cast<Eigen::Index>(out_pos * images));
    for (std::size_t n = 0; n < images; ++n)
        for (std::size_t i = 0; i < out_side; ++i)
            for (std::size_t j = 0; j < out_side; ++j) {
                const auto col = static_cast<Eigen::Index>(n * out_pos + i * out_side + j);
                for (std::size_t c = 0; c < channels; ++c)
                    for (std::size_t ki = 0; ki < kKernel; ++ki)
                        for (std::size_t kj = 0; kj < kKernel; ++kj)
                            cols(static_cast<Eigen::Index>(c * kTaps + ki * kKernel + kj), col) =
                                in(static_cast<Eigen::Index>(c),
                                   static_cast<Eigen::Index>(n * in_pos + (i + ki) * side + (j + kj)));
            }
}

void col2im(const Matrix& cols, std::size_t channels, std::size_t side, std::size_t images, Matrix& out) {
    const std::size_t out_side = side - 1;
    const std::size_t in_pos = side * side;
    const std::size_t out_pos = out_side * out_side;
    out.setZero(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(in_pos * images));
    for (std::size_t n = 0; n < images; ++n)
        for (std::size_t i = 0; i < out_side; ++i)
            for (std::size_t j = 0; j < out_side; ++j) {
                const auto col = static_cast<Eigen::Index>(n * out_pos + i * out_side + j);
                for (std::size_t c = 0; c < channels; ++c)
                    for (std::size_t ki = 0; ki < kKernel; ++ki)
                        for (std::size_t kj = 0; kj < kKernel; ++kj)
                            out(static_cast<Eigen::Index>(c),
                                static_cast<Eigen::Index>(n * in_pos + (i + ki) * side + (j + kj))) +=
                                cols(static_cast<Eigen::Index>(c * kTaps + ki * kKernel + kj), col);
            }
}

// (channels, positions * images) -> (channels * positions, images)
void flatten(const Matrix& in, std::size_t positions, std::size_t images, Matrix& out) {
    const auto channels = static_cast<std::size_t>(in.rows());
    out.resize(static_cast<Eigen::Index>(channels * positions), static_cast<Eigen::Index>(images));
    for (std::size_t n = 0; n < images; ++n)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < positions; ++p)
                out(static_cast<Eigen::Index>(c * positions + p), static_cast<Eigen::Index>(n)) =
                    in(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(n * positions + p));
}

void unflatten(const Matrix& in, std::size_t channels, std::size_t positions, std::size_t images, Matrix& out) {
    out.resize(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(positions * images));
    for (std::size_t n = 0; n < images; ++n)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < positions; ++p)
                out(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(n * positions + p)) =
                    in(static_cast<Eigen::Index>(c * positions + p), static_cast<Eigen::Index>(n));
}

// Inverted dropout: kept units are scaled by 1 / (1 - rate).
void dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng, Matrix& mask) {
    mask.resize(rows, cols);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = u(rng) < rate ? 0.0 : keep_scale;
}

struct ForwardPass {
    std::size_t images = 0;
    Matrix input;
    Matrix cols1, z1, a1, mask1;
    Matrix cols2, z2, a2, mask2;
    Matrix flat, h_pre, h, g;
    Vector norms;
    Matrix e;
};

// Fully connected layers and normalization, starting from f.flat.
void forward_head(const EncoderModel& model, ForwardPass& f) {
    const auto& cfg = model.config();
    const auto& p = model.parameters();
    f.h_pre.noalias() = weights(p[kFc1W].value, cfg.fc_units) * f.flat;
    f.h_pre.colwise() += bias(p[kFc1B].value);
    f.h = f.h_pre.cwiseMax(0.0);
    f.g.noalias() = weights(p[kEmbedW].value, cfg.embed_dim) * f.h;
    f.g.colwise() += bias(p[kEmbedB].value);

    f.norms = f.g.colwise().norm().transpose().cwiseMax(kMinNorm);
    f.e = f.g * f.norms.cwiseInverse().asDiagonal();
    // A vanishing g has no direction; it maps to the first axis with zero gradient.
    for (Eigen::Index c = 0; c < f.e.cols(); ++c)
        if (f.norms(c) <= kMinNorm) {
            f.e.col(c).setZero();
            f.e(0, c) = 1.0;
        }
}

void forward(const EncoderModel& model, std::span<const FingerprintImage* const> images, Mode mode, Rng* rng,
             ForwardPass& f) {
    const auto& cfg = model.config();
    const auto& p = model.parameters();
    const std::size_t side = model.input_side();
    const std::size_t n = images.size();
    if (mode == Mode::Train && rng == nullptr) throw Error("training-mode forward pass needs a generator");
    if (mode == Mode::Infer && rng != nullptr) throw Error("inference-mode forward pass takes no generator");

    Matrix& input = f.input;
    input.resize(1, static_cast<Eigen::Index>(side * side * n));
    for (std::size_t k = 0; k < n; ++k) {
        const FingerprintImage& img = *images[k];
        if (img.side != side || img.pixels.size() != side * side)
            throw Error("image side " + std::to_string(img.side) + " does not match model input side " +
                        std::to_string(side));
        if (mode == Mode::Train && cfg.noise_sigma > 0.0) {
            const FingerprintImage noisy = add_gaussian_noise(img, cfg.noise_sigma, *rng);
            std::copy(noisy.pixels.begin(), noisy.pixels.end(), input.data() + k * side * side);
        } else {
            std::copy(img.pixels.begin(), img.pixels.end(), input.data() + k * side * side);
        }
    }

    const bool drop = mode == Mode::Train && cfg.dropout_rate > 0.0;
    f.images = n;

    im2col(input, side, n, f.cols1);
    f.z1.noalias() = weights(p[kConv1W].value, cfg.conv1_filters) * f.cols1;
    f.z1.colwise() += bias(p[kConv1B].value);
    f.a1 = f.z1.cwiseMax(0.0);
    if (drop) {
        dropout_mask(f.a1.rows(), f.a1.cols(), cfg.dropout_rate, *rng, f.mask1);
        f.a1.array() *= f.mask1.array();
    } else {
        f.mask1.resize(0, 0);
    }

    const std::size_t side1 = side - 1;
    const std::size_t side2 = side - 2;
    im2col(f.a1, side1, n, f.cols2);
    f.z2.noalias() = weights(p[kConv2W].value, cfg.conv2_filters) * f.cols2;
    f.z2.colwise() += bias(p[kConv2B].value);
    f.a2 = f.z2.cwiseMax(0.0);
    if (drop) {
        dropout_mask(f.a2.rows(), f.a2.cols(), cfg.dropout_rate, *rng, f.mask2);
        f.a2.array() *= f.mask2.array();
    } else {
        f.mask2.resize(0, 0);
    }

    flatten(f.a2, side2 * side2, n, f.flat);
    forward_head(model, f);
}

ForwardPass forward(const EncoderModel& model, std::span<const FingerprintImage* const> images, Mode mode,
                    Rng* rng) {
    ForwardPass f;
    forward(model, images, mode, rng, f);
    return f;
}

struct BackwardScratch {
    Matrix dg, dh, dflat, dz2, dcols2, dz1;
};

void backward(const EncoderModel& model, const ForwardPass& f, const Matrix& d_embed, std::vector<Tensor>& grads,
              BackwardScratch& b) {
    const auto& cfg = model.config();
    const auto& p = model.parameters();
    const std::size_t side = model.input_side();
    const std::size_t n = f.images;
    const std::size_t side2 = side - 2;

    // e = g / |g|  =>  dg = (de - e (e . de)) / |g|
    const Eigen::RowVectorXd dots = (f.e.array() * d_embed.array()).colwise().sum();
    b.dg = (d_embed - f.e * dots.asDiagonal()) * f.norms.cwiseInverse().asDiagonal();
    for (Eigen::Index c = 0; c < b.dg.cols(); ++c)
        if (f.norms(c) <= kMinNorm) b.dg.col(c).setZero();

    weights(grads[kEmbedW], cfg.embed_dim).noalias() += b.dg * f.h.transpose();
    bias(grads[kEmbedB]) += b.dg.rowwise().sum();
    b.dh.noalias() = weights(p[kEmbedW].value, cfg.embed_dim).transpose() * b.dg;
    b.dh.array() *= (f.h_pre.array() > 0.0).cast<double>();

    weights(grads[kFc1W], cfg.fc_units).noalias() += b.dh * f.flat.transpose();
    bias(grads[kFc1B]) += b.dh.rowwise().sum();
    b.dflat.noalias() = weights(p[kFc1W].value, cfg.fc_units).transpose() * b.dh;

    unflatten(b.dflat, cfg.conv2_filters, side2 * side2, n, b.dz2);
    if (f.mask2.size() != 0) b.dz2.array() *= f.mask2.array();
    b.dz2.array() *= (f.z2.array() > 0.0).cast<double>();

    weights(grads[kConv2W], cfg.conv2_filters).noalias() += b.dz2 * f.cols2.transpose();
    bias(grads[kConv2B]) += b.dz2.rowwise().sum();
    b.dcols2.noalias() = weights(p[kConv2W].value, cfg.conv2_filters).transpose() * b.dz2;

    col2im(b.dcols2, cfg.conv1_filters, side - 1, n, b.dz1);
    if (f.mask1.size() != 0) b.dz1.array() *= f.mask1.array();
    b.dz1.array() *= (f.z1.array() > 0.0).cast<double>();

    weights(grads[kConv1W], cfg.conv1_filters).noalias() += b.dz1 * f.cols1.transpose();
    bias(grads[kConv1B]) += b.dz1.rowwise().sum();
}

// Per-thread buffers for training passes; shapes repeat from step to step, so
// after the first step no large allocations happen.
struct Workspace {
    ForwardPass forward;
    BackwardScratch backward;
    Matrix d_embed;
    std::vector<const FingerprintImage*> images;
};

Workspace& workspace() {
    thread_local Workspace ws;
    return ws;
}

void zero_grads(const std::vector<Parameter>& params, std::vector<Tensor>& grads) {
    bool same = grads.size() == params.size();
    for (std::size_t k = 0; same && k < params.size(); ++k) same = grads[k].shape == params[k].value.shape;
    if (!same) {
        grads.clear();
        for (const auto& prm : params) grads.push_back(Tensor::zeros(prm.value.shape));
        return;
    }
    for (auto& g : grads) std::fill(g.values.begin(), g.values.end(), 0.0);
}

std::vector<Tensor> zero_like(const std::vector<Parameter>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& prm : params) out.push_back(Tensor::zeros(prm.value.shape));
    return out;
}

double hinge_raw(const Matrix& e, Eigen::Index a, Eigen::Index pidx, Eigen::Index nidx, double alpha) {
    return (e.col(a) - e.col(pidx)).squaredNorm() - (e.col(a) - e.col(nidx)).squaredNorm() + alpha;
}

// Embeddings laid out as consecutive (anchor, positive, negative) columns.
double mean_hinge(const Matrix& e, double alpha) {
    const Eigen::Index triplets = e.cols() / 3;
    double total = 0.0;
    for (Eigen::Index i = 0; i < triplets; ++i) total += std::max(0.0, hinge_raw(e, 3 * i, 3 * i + 1, 3 * i + 2, alpha));
    return total / static_cast<double>(triplets);
}

void triplet_images(std::span<const Triplet> batch, std::vector<const FingerprintImage*>& images) {
    images.clear();
    for (const auto& t : batch) {
        images.push_back(&t.anchor);
        images.push_back(&t.positive);
        images.push_back(&t.negative);
    }
}

std::vector<const FingerprintImage*> triplet_images(std::span<const Triplet> batch) {
    std::vector<const FingerprintImage*> images;
    triplet_images(batch, images);
    return images;
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    const std::size_t count =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<std::size_t>());
    Tensor t;
    t.shape = std::move(shape);
    t.values.assign(count, 0.0);
    return t;
}

void EncoderConfig::validate() const {
    if (conv1_filters == 0 || conv2_filters == 0 || fc_units == 0) throw Error("layer widths must be positive");
    if (embed_dim == 0) throw Error("embed_dim must be at least 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error("dropout_rate must lie in [0, 1)");
    if (!(margin_alpha >= 0.0) || !std::isfinite(margin_alpha)) throw Error("margin_alpha must be non-negative");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw Error("noise_sigma must be non-negative");
}

std::vector<Parameter> EncoderModel::layout(const EncoderConfig& cfg, std::size_t input_side) {
    if (input_side < 3)
        throw Error("input side " + std::to_string(input_side) + " is too small for two 2x2 convolutions");
    const std::size_t out2 = (input_side - 2) * (input_side - 2);
    return {
        {"conv1.weight", Tensor::zeros({cfg.conv1_filters, 1, kKernel, kKernel})},
        {"conv1.bias", Tensor::zeros({cfg.conv1_filters})},
        {"conv2.weight", Tensor::zeros({cfg.conv2_filters, cfg.conv1_filters, kKernel, kKernel})},
        {"conv2.bias", Tensor::zeros({cfg.conv2_filters})},
        {"fc1.weight", Tensor::zeros({cfg.fc_units, cfg.conv2_filters * out2})},
        {"fc1.bias", Tensor::zeros({cfg.fc_units})},
        {"embed.weight", Tensor::zeros({cfg.embed_dim, cfg.fc_units})},
        {"embed.bias", Tensor::zeros({cfg.embed_dim})},
    };
}

EncoderModel::EncoderModel(EncoderConfig config, std::size_t input_side, std::vector<Parameter> params)
    : config_(config), input_side_(input_side), params_(std::move(params)) {
    config_.validate();
    const auto expected = layout(config_, input_side_);
    if (params_.size() != expected.size()) throw Error("wrong number of parameter tensors");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (params_[i].name != expected[i].name || params_[i].value.shape != expected[i].value.shape)
            throw Error("parameter '" + params_[i].name + "' does not match the configured architecture");
        if (params_[i].value.values.size() != expected[i].value.size())
            throw Error("parameter '" + params_[i].name + "' has the wrong element count");
        for (double v : params_[i].value.values)
            if (!std::isfinite(v)) throw Error("parameter '" + params_[i].name + "' is not finite");
    }
}

const Tensor& EncoderModel::parameter(const std::string& name) const {
    for (const auto& prm : params_)
        if (prm.name == name) return prm.value;
    throw Error("no parameter named '" + name + "'");
}

std::size_t EncoderModel::parameter_count() const noexcept {
    std::size_t total = 0;
    for (const auto& prm : params_) total += prm.value.size();
    return total;
}

void EncoderModel::round_to_float() {
    for (auto& prm : params_)
        for (double& v : prm.value.values) v = static_cast<double>(static_cast<float>(v));
}

EncoderModel init_model(const EncoderConfig& config, std::size_t input_side, std::uint64_t seed) {
    config.validate();
    auto params = EncoderModel::layout(config, input_side);
    Rng rng(seed);
    for (auto& prm : params) {
        if (prm.value.shape.size() < 2) continue;  // biases start at zero
        const std::size_t fan_in = prm.value.size() / prm.value.shape[0];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (double& v : prm.value.values) v = u(rng);
    }
    return EncoderModel(config, input_side, std::move(params));
}

Embedding encode(const EncoderModel& model, const FingerprintImage& img, Mode mode, Rng* rng) {
    const FingerprintImage* ptr = &img;
    const ForwardPass f = forward(model, std::span<const FingerprintImage* const>(&ptr, 1), mode, rng);
    return Embedding(f.e.data(), f.e.data() + f.e.size());
}

Eigen::MatrixXd encode_batch(const EncoderModel& model, std::span<const FingerprintImage> images) {
    Matrix out(static_cast<Eigen::Index>(model.config().embed_dim), static_cast<Eigen::Index>(images.size()));
    ForwardPass& f = workspace().forward;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const FingerprintImage* ptr = &images[i];
        forward(model, std::span<const FingerprintImage* const>(&ptr, 1), Mode::Infer, nullptr, f);
        out.col(static_cast<Eigen::Index>(i)) = f.e.col(0);
    }
    return out;
}

double triplet_loss(std::span<const double> anchor, std::span<const double> positive, std::span<const double> negative,
                    double alpha) {
    if (anchor.size() != positive.size() || anchor.size() != negative.size())
        throw Error("triplet embeddings differ in length");
    double ap = 0.0, an = 0.0;
    for (std::size_t i = 0; i < anchor.size(); ++i) {
        ap += (anchor[i] - positive[i]) * (anchor[i] - positive[i]);
        an += (anchor[i] - negative[i]) * (anchor[i] - negative[i]);
    }
    return std::max(0.0, ap - an + alpha);
}

double batch_loss_and_gradient(const EncoderModel& model, std::span<const Triplet> batch, double alpha,
                               std::vector<Tensor>* grads, Mode mode, Rng* rng, std::size_t* active) {
    if (batch.empty()) throw Error("empty triplet batch");
    Workspace& ws = workspace();
    triplet_images(batch, ws.images);
    forward(model, ws.images, mode, rng, ws.forward);
    const ForwardPass& f = ws.forward;

    const double scale = 1.0 / static_cast<double>(batch.size());
    Matrix& d_embed = ws.d_embed;
    d_embed.setZero(f.e.rows(), f.e.cols());
    double total = 0.0;
    std::size_t n_active = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto a = static_cast<Eigen::Index>(3 * i);
        const double raw = hinge_raw(f.e, a, a + 1, a + 2, alpha);
        if (raw <= 0.0) continue;
        total += raw;
        ++n_active;
        // d/da = 2(n - p), d/dp = -2(a - p), d/dn = 2(a - n)
        d_embed.col(a) = 2.0 * scale * (f.e.col(a + 2) - f.e.col(a + 1));
        d_embed.col(a + 1) = -2.0 * scale * (f.e.col(a) - f.e.col(a + 1));
        d_embed.col(a + 2) = 2.0 * scale * (f.e.col(a) - f.e.col(a + 2));
    }
    if (active != nullptr) *active = n_active;
    if (grads != nullptr) {
        zero_grads(model.parameters(), *grads);
        if (n_active > 0) backward(model, f, d_embed, *grads, ws.backward);
    }
    return total * scale;
}

StepResult train_step(EncoderModel& model, std::span<const Triplet> batch, AdamState& opt, Rng& rng) {
    thread_local std::vector<Tensor> grads;
    StepResult result;
    result.mean_loss =
        batch_loss_and_gradient(model, batch, model.config().margin_alpha, &grads, Mode::Train, &rng, &result.active);
    if (!std::isfinite(result.mean_loss))
        throw Error("non-finite training loss at step " + std::to_string(opt.step + 1));
    auto& params = model.parameters();
    for (std::size_t k = 0; k < grads.size(); ++k)
        for (std::size_t i = 0; i < grads[k].size(); ++i)
            if (!std::isfinite(grads[k].values[i])) {
                std::ostringstream msg;
                msg << "non-finite gradient for " << params[k].name << "[" << i << "] at step " << opt.step + 1
                    << " (batch loss " << result.mean_loss << ")";
                throw Error(msg.str());
            }
    if (result.active == 0) return result;

    if (opt.first_moment.empty()) {
        opt.first_moment = zero_like(params);
        opt.second_moment = zero_like(params);
    }
    ++opt.step;
    const double t = static_cast<double>(opt.step);
    const double correction1 = 1.0 - std::pow(opt.beta1, t);
    const double correction2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = params[k].value.values;
        auto& m = opt.first_moment[k].values;
        auto& v = opt.second_moment[k].values;
        const auto& g = grads[k].values;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            w[i] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
        }
    }
    return result;
}

GradientCheckResult gradient_check(const EncoderModel& model, const Triplet& triplet, double alpha, double step) {
    if (model.config().dropout_rate > 0.0 || model.config().noise_sigma > 0.0)
        throw GradientCheckError("gradient check needs dropout and input noise disabled");
    const std::span<const Triplet> batch(&triplet, 1);
    std::vector<Tensor> analytic;
    const double loss = batch_loss_and_gradient(model, batch, alpha, &analytic, Mode::Infer, nullptr);
    if (!(loss > 0.0)) throw InactiveHingeError("triplet loss is zero; the hinge is inactive");

    const auto images = triplet_images(batch);
    const ForwardPass base = forward(model, images, Mode::Infer, nullptr);
    EncoderModel probe = model;
    // Convolutional features do not depend on the head parameters, so those
    // probes rerun only the fully connected layers on the cached features.
    auto probe_loss = [&](std::size_t k) {
        if (k >= kFc1W) {
            ForwardPass f;
            f.flat = base.flat;
            forward_head(probe, f);
            return mean_hinge(f.e, alpha);
        }
        return mean_hinge(forward(probe, images, Mode::Infer, nullptr).e, alpha);
    };

    GradientCheckResult result;
    for (std::size_t k = 0; k < probe.parameters().size(); ++k) {
        auto& values = probe.parameters()[k].value.values;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = probe_loss(k);
            values[i] = saved - step;
            const double down = probe_loss(k);
            values[i] = saved;

            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[k].values[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            ++result.checked;
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_parameter = probe.parameters()[k].name;
                result.worst_index = i;
            }
        }
    }
    return result;
}

double relu_margin(const EncoderModel& model, std::span<const Triplet> batch) {
    const ForwardPass f = forward(model, triplet_images(batch), Mode::Infer, nullptr);
    return std::min({f.z1.cwiseAbs().minCoeff(), f.z2.cwiseAbs().minCoeff(), f.h_pre.cwiseAbs().minCoeff()});
}

GradientCheckResult random_gradient_check(std::uint64_t seed, std::size_t input_side, std::size_t embed_dim) {
    EncoderConfig cfg;
    cfg.embed_dim = embed_dim;
    cfg.dropout_rate = 0.0;
    cfg.noise_sigma = 0.0;
    EncoderModel model = init_model(cfg, input_side, make_stream(seed, 0)());

    // Small random biases so no unit sits exactly on a ReLU kink.
    Rng rng = make_stream(seed, 1);
    std::uniform_real_distribution<double> small(-0.1, 0.1);
    for (auto& prm : model.parameters())
        if (prm.value.shape.size() == 1)
            for (double& v : prm.value.values) v = small(rng);

    std::uniform_real_distribution<double> pixel(0.05, 1.0);
    auto random_image = [&] {
        FingerprintImage img{input_side, input_side * input_side, std::vector<double>(input_side * input_side)};
        for (double& v : img.pixels) v = pixel(rng);
        return img;
    };
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const Triplet t{random_image(), random_image(), random_image(), 0, 1};
        const std::span<const Triplet> one(&t, 1);
        if (batch_loss_and_gradient(model, one, cfg.margin_alpha, nullptr, Mode::Infer, nullptr) <= 0.0) continue;
        if (relu_margin(model, one) < kKinkMargin) continue;
        return gradient_check(model, t, cfg.margin_alpha);
    }
    throw InactiveHingeError("no random triplet with an active hinge clear of ReLU kinks");
}

}  // namespace stone
