// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include "scorediff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scorediff/error.hpp"

namespace scorediff {

using nlohmann::json;

void DenoiserConfig::validate() const {
    if (input_dim == 0 || hidden_dim == 0 || ffn_dim == 0) throw ConfigError("denoiser: dimensions must be positive");
    if (num_heads == 0 || hidden_dim % num_heads != 0)
        throw ConfigError("denoiser: hidden_dim must be a positive multiple of num_heads");
    if (hidden_dim % 2 != 0) throw ConfigError("denoiser: hidden_dim must be even for sinusoidal embeddings");
    if (decoder_layers == 0) throw ConfigError("denoiser: decoder_layers must be positive");
    if (codebook_size < 1) throw ConfigError("denoiser: codebook_size must be positive");
    if (num_train_steps < 1) throw ConfigError("denoiser: num_train_steps must be positive");
    if (!(logit_eps > 0.0 && logit_eps < 0.5)) throw ConfigError("denoiser: logit_eps must lie in (0, 0.5)");
}

std::size_t quantize_bin(double score, std::size_t num_bins) {
    const double k = static_cast<double>(num_bins);
    const double scaled = std::floor(std::clamp(score, 0.0, 1.0) * k);
    return std::min(static_cast<std::size_t>(scaled), num_bins - 1);
}

Tensor sinusoidal_embedding(std::span<const double> positions, std::size_t dim) {
    const std::size_t half = dim / 2;
    std::vector<double> out(positions.size() * dim, 0.0);
    for (std::size_t p = 0; p < positions.size(); ++p)
        for (std::size_t i = 0; i < half; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * i) / static_cast<double>(dim));
            out[p * dim + 2 * i] = std::sin(positions[p] * freq);
            out[p * dim + 2 * i + 1] = std::cos(positions[p] * freq);
        }
    return Tensor::from({positions.size(), dim}, std::move(out));
}

Tensor pos_embed(std::size_t n, std::size_t dim) {
    std::vector<double> pos(n);
    std::iota(pos.begin(), pos.end(), 0.0);
    return sinusoidal_embedding(pos, dim);
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

struct AttentionWeights {
    const Tensor &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo;
};

// Multi-head attention with input/output projections. Logits are scaled by
// 1/sqrt(head_dim).
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionWeights& w,
                            std::size_t heads, Tensor* probs_out) {
    const Tensor qh = linear(q, w.wq, w.bq);
    const Tensor kh = linear(k, w.wk, w.bk);
    const Tensor vh = linear(v, w.wv, w.bv);
    const std::size_t d = qh.cols(), dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> outs;
    outs.reserve(heads);
    std::vector<double> avg;
    if (probs_out != nullptr) avg.assign(q.rows() * k.rows(), 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qs = slice_cols(qh, h * dh, (h + 1) * dh);
        const Tensor ks = slice_cols(kh, h * dh, (h + 1) * dh);
        const Tensor vs = slice_cols(vh, h * dh, (h + 1) * dh);
        const Tensor p = softmax_rows(scale(matmul_transposed(qs, ks), inv_sqrt));
        if (probs_out != nullptr) {
            const auto pd = p.data();
            for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += pd[i] / static_cast<double>(heads);
        }
        outs.push_back(matmul(p, vs));
    }
    if (probs_out != nullptr) *probs_out = Tensor::from({q.rows(), k.rows()}, std::move(avg));
    return linear(heads == 1 ? outs[0] : concat_cols(outs), w.wo, w.bo);
}

Tensor mlp(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
    return linear(silu(linear(x, w1, b1)), w2, b2);
}

// Parameter initialisation mirrors common framework defaults: U(+-1/sqrt(fan_in))
// for affine layers, N(0, 1) for the codebook.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    void linear(ParameterMap& p, const std::string& name_w, const std::string& name_b, std::size_t in, std::size_t out) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        p[name_w] = uniform({in, out}, bound);
        p[name_b] = uniform({1, out}, bound);
    }
    void zeros(ParameterMap& p, const std::string& name, Shape shape) { p[name] = Tensor::zeros(std::move(shape), true); }
    void constant(ParameterMap& p, const std::string& name, Shape shape, double v) {
        p[name] = Tensor::full(std::move(shape), v, true);
    }
    Tensor normal(Shape shape) {
        std::normal_distribution<double> dist(0.0, 1.0);
        Tensor t = Tensor::zeros(std::move(shape), true);
        for (double& x : t.mutable_data()) x = dist(rng_);
        return t;
    }

private:
    Tensor uniform(Shape shape, double bound) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        Tensor t = Tensor::zeros(std::move(shape), true);
        for (double& x : t.mutable_data()) x = dist(rng_);
        return t;
    }
    std::mt19937_64 rng_;
};

void init_attention(Initializer& init, ParameterMap& p, const std::string& prefix, std::size_t d) {
    for (const char* m : {"q", "k", "v", "o"})
        init.linear(p, prefix + "attn.w" + m, prefix + "attn.b" + m, d, d);
}

void init_mlp(Initializer& init, ParameterMap& p, const std::string& prefix, std::size_t d, std::size_t f) {
    init.linear(p, prefix + "mlp.w1", prefix + "mlp.b1", d, f);
    init.linear(p, prefix + "mlp.w2", prefix + "mlp.b2", f, d);
}

void init_block(Initializer& init, ParameterMap& p, const std::string& prefix, std::size_t d, std::size_t f) {
    init_attention(init, p, prefix, d);
    init_mlp(init, p, prefix, d, f);
    // Zero modulation: every gate, scale and shift starts at 0.
    init.zeros(p, prefix + "adaln.w", {d, 6 * d});
    init.zeros(p, prefix + "adaln.b", {1, 6 * d});
}

json config_to_json(const DenoiserConfig& c) {
    return {{"input_dim", c.input_dim},         {"hidden_dim", c.hidden_dim},
            {"num_heads", c.num_heads},         {"ffn_dim", c.ffn_dim},
            {"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
            {"codebook_size", c.codebook_size}, {"decoder_self_attention", c.decoder_self_attention},
            {"num_train_steps", c.num_train_steps}, {"logit_eps", c.logit_eps}};
}

DenoiserConfig config_from_json(const json& j) {
    DenoiserConfig c;
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
    c.codebook_size = j.at("codebook_size").get<std::size_t>();
    c.decoder_self_attention = j.at("decoder_self_attention").get<bool>();
    c.num_train_steps = j.at("num_train_steps").get<int>();
    c.logit_eps = j.at("logit_eps").get<double>();
    return c;
}

}  // namespace

Tensor adaln_block(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& condition, const BlockWeights& w,
                   std::size_t num_heads, Tensor* attention_out) {
    if (q.cols() != k.cols() || k.cols() != v.cols() || k.rows() != v.rows())
        throw DimensionError("adaln_block: query/key/value widths differ");
    if (condition.rows() != q.rows() || condition.rows() != k.rows())
        throw DimensionError("adaln_block: condition rows must match query and key rows");
    const std::size_t d = q.cols();
    const Tensor mod = linear(condition, w.mod_w, w.mod_b);
    if (mod.cols() != 6 * d) throw DimensionError("adaln_block: modulation width must be 6 * D");
    const Tensor a1 = slice_cols(mod, 0, d);
    const Tensor b1 = slice_cols(mod, d, 2 * d);
    const Tensor g1 = slice_cols(mod, 2 * d, 3 * d);
    const Tensor a2 = slice_cols(mod, 3 * d, 4 * d);
    const Tensor b2 = slice_cols(mod, 4 * d, 5 * d);
    const Tensor g2 = slice_cols(mod, 5 * d, 6 * d);

    const Tensor qp = scale_shift(q, g1, b1);
    const bool self = k.node() == q.node();
    const Tensor kp = self ? qp : scale_shift(k, g1, b1);
    const Tensor vp = v.node() == k.node() ? kp : scale_shift(v, g1, b1);
    const AttentionWeights aw{w.wq, w.bq, w.wk, w.bk, w.wv, w.bv, w.wo, w.bo};
    const Tensor x1 = add(mul(a1, multi_head_attention(qp, kp, vp, aw, num_heads, attention_out)), qp);
    const Tensor x2 = scale_shift(x1, g2, b2);
    return add(mul(a2, mlp(x2, w.mlp_w1, w.mlp_b1, w.mlp_w2, w.mlp_b2)), x2);
}

// ---------------------------------------------------------------------------
// Denoiser

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Initializer init(seed);
    const std::size_t d = config_.hidden_dim, f = config_.ffn_dim;
    init.linear(params_, "proj.w", "proj.b", config_.input_dim, d);
    for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
        const std::string p = "enc." + std::to_string(i) + ".";
        init.constant(params_, p + "norm1.scale", {1, d}, 1.0);
        init.zeros(params_, p + "norm1.shift", {1, d});
        init.constant(params_, p + "norm2.scale", {1, d}, 1.0);
        init.zeros(params_, p + "norm2.shift", {1, d});
        init_attention(init, params_, p, d);
        init_mlp(init, params_, p, d, f);
    }
    for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
        const std::string p = "dec." + std::to_string(i) + ".";
        init_block(init, params_, p, d, f);
        if (config_.decoder_self_attention) init_block(init, params_, p + "self_", d, f);
    }
    init.linear(params_, "time_mlp.w1", "time_mlp.b1", d, d);
    init.linear(params_, "time_mlp.w2", "time_mlp.b2", d, d);
    params_["codebook"] = init.normal({config_.codebook_size, d});
    init.linear(params_, "head.w", "head.b", d, 1);
}

Denoiser::Denoiser(DenoiserConfig config, ParameterMap params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    // Shapes must agree with a freshly built model of the same config.
    const Denoiser reference(config_, 0);
    for (const auto& [name, t] : reference.params_) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ValidationError("checkpoint is missing parameter '" + name + "'");
        if (it->second.shape() != t.shape() && it->second.size() == t.size())
            it->second = reshape(it->second, t.shape()).detach();
        if (it->second.shape() != t.shape()) throw ValidationError("parameter '" + name + "' has the wrong shape");
        it->second.set_requires_grad(true);
    }
    if (params_.size() != reference.params_.size()) throw ValidationError("checkpoint has unexpected parameters");
}

const Tensor& Denoiser::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return it->second;
}

BlockWeights Denoiser::block(const std::string& prefix) const {
    const auto g = [&](const char* n) { return param(prefix + n); };
    return {g("attn.wq"), g("attn.bq"), g("attn.wk"), g("attn.bk"), g("attn.wv"), g("attn.bv"), g("attn.wo"),
            g("attn.bo"), g("mlp.w1"),  g("mlp.b1"),  g("mlp.w2"),  g("mlp.b2"),  g("adaln.w"), g("adaln.b")};
}

Tensor Denoiser::encode_video(const FeatureMatrix& features) const {
    if (features.cols != config_.input_dim)
        throw DimensionError("encode_video: feature dim " + std::to_string(features.cols) + ", model expects " +
                             std::to_string(config_.input_dim));
    if (features.rows < 1) throw DimensionError("encode_video: no frames");
    const Tensor x = Tensor::from({features.rows, features.cols}, features.values);
    Tensor h = linear(x, param("proj.w"), param("proj.b"));
    for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
        const std::string p = "enc." + std::to_string(i) + ".";
        const AttentionWeights aw{param(p + "attn.wq"), param(p + "attn.bq"), param(p + "attn.wk"),
                                  param(p + "attn.bk"), param(p + "attn.wv"), param(p + "attn.bv"),
                                  param(p + "attn.wo"), param(p + "attn.bo")};
        const Tensor n1 = scale_shift(layernorm_rows(h), sub(param(p + "norm1.scale"), Tensor::full({1, h.cols()}, 1.0)),
                                      param(p + "norm1.shift"));
        h = add(h, multi_head_attention(n1, n1, n1, aw, config_.num_heads, nullptr));
        const Tensor n2 = scale_shift(layernorm_rows(h), sub(param(p + "norm2.scale"), Tensor::full({1, h.cols()}, 1.0)),
                                      param(p + "norm2.shift"));
        h = add(h, mlp(n2, param(p + "mlp.w1"), param(p + "mlp.b1"), param(p + "mlp.w2"), param(p + "mlp.b2")));
    }
    return h;
}

Tensor Denoiser::time_embed(int t) const {
    if (t < 1 || t > config_.num_train_steps)
        throw ContractError("time_embed: t=" + std::to_string(t) + " outside [1, " +
                            std::to_string(config_.num_train_steps) + "]");
    const double pos = t;
    const Tensor base = sinusoidal_embedding(std::span<const double>(&pos, 1), config_.hidden_dim);
    return linear(silu(linear(base, param("time_mlp.w1"), param("time_mlp.b1"))), param("time_mlp.w2"),
                  param("time_mlp.b2"));
}

Tensor Denoiser::quantize_embed(std::span<const double> u_t) const {
    std::vector<std::size_t> bins(u_t.size());
    for (std::size_t i = 0; i < u_t.size(); ++i)
        bins[i] = quantize_bin(1.0 / (1.0 + std::exp(-u_t[i])), config_.codebook_size);
    return gather_rows(param("codebook"), bins);
}

Tensor Denoiser::decode_hidden(std::span<const double> u_t, int t, const Tensor& z, std::vector<double>* attention) const {
    const std::size_t n = u_t.size(), d = config_.hidden_dim;
    if (z.rows() != n || z.cols() != d)
        throw DimensionError("denoiser: condition must be " + std::to_string(n) + " x " + std::to_string(d));
    const Tensor condition = silu(add(pos_embed(n, d), time_embed(t)));
    Tensor q = quantize_embed(u_t);
    std::vector<double> mass;
    if (attention != nullptr) mass.assign(n, 0.0);
    std::size_t maps = 0;
    auto collect = [&](const Tensor& probs) {
        const auto pd = probs.data();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) mass[j] += pd[i * n + j];
        ++maps;
    };
    for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
        const std::string p = "dec." + std::to_string(i) + ".";
        Tensor probs;
        const bool want_cross = attention != nullptr && !config_.decoder_self_attention;
        q = adaln_block(q, z, z, condition, block(p), config_.num_heads, want_cross ? &probs : nullptr);
        if (want_cross) collect(probs);
        if (config_.decoder_self_attention) {
            q = adaln_block(q, q, q, condition, block(p + "self_"), config_.num_heads, attention ? &probs : nullptr);
            if (attention != nullptr) collect(probs);
        }
    }
    if (attention != nullptr) {
        const double norm = static_cast<double>(maps * n);
        for (double& m : mass) m /= norm;
        *attention = std::move(mass);
    }
    return q;
}

Denoiser::Output Denoiser::forward(std::span<const double> u_t, int t, const Tensor& z) const {
    Output out;
    const Tensor hidden = decode_hidden(u_t, t, z, &out.attention);
    out.logits = reshape(linear(hidden, param("head.w"), param("head.b")), {u_t.size()});
    out.scores = sigmoid(out.logits);
    return out;
}

Denoiser Denoiser::clone() const {
    ParameterMap copy;
    for (const auto& [name, t] : params_) copy.emplace(name, t.detach());
    return Denoiser(config_, std::move(copy));
}

std::filesystem::path checkpoint_meta_path(const std::filesystem::path& checkpoint) {
    auto p = checkpoint;
    p += ".meta.json";
    return p;
}

void Denoiser::save(const std::filesystem::path& checkpoint) const {
    save_parameters(checkpoint, params_);
    std::ofstream meta(checkpoint_meta_path(checkpoint));
    if (!meta) throw std::runtime_error("cannot write " + checkpoint_meta_path(checkpoint).string());
    meta << json{{"denoiser", config_to_json(config_)}}.dump(1) << '\n';
}

Denoiser Denoiser::load(const std::filesystem::path& checkpoint) {
    std::ifstream meta_in(checkpoint_meta_path(checkpoint));
    if (!meta_in) throw ValidationError("missing checkpoint metadata " + checkpoint_meta_path(checkpoint).string());
    DenoiserConfig cfg;
    try {
        cfg = config_from_json(json::parse(meta_in).at("denoiser"));
    } catch (const json::exception& e) {
        throw ValidationError("bad checkpoint metadata: " + std::string(e.what()));
    }
    return Denoiser(cfg, load_parameters(checkpoint));
}

// ---------------------------------------------------------------------------
// Inference adapter

ConditionedDenoiser::ConditionedDenoiser(const Denoiser& model, const FeatureMatrix& features)
    : model_(&model), frames_(features.rows) {
    z_ = model.encode_video(features).detach();
    z_null_ = model.encode_video(FeatureMatrix(features.rows, features.cols, 0.0)).detach();
}

Prediction ConditionedDenoiser::predict(std::span<const double> u_t, int t, bool null_condition) const {
    if (u_t.size() != frames_)
        throw DimensionError("predict: expected " + std::to_string(frames_) + " logits, got " + std::to_string(u_t.size()));
    const Denoiser::Output out = model_->forward(u_t, t, null_condition ? z_null_ : z_);
    // The head emits logits; clip through the score domain so the sampler
    // never sees values outside the trainable range.
    const auto s = out.scores.data();
    return {to_logit(s, model_->config().logit_eps), out.attention};
}

// ---------------------------------------------------------------------------
// Training

Tensor score_loss(const Tensor& target, const Tensor& predicted) {
    if (target.size() != predicted.size())
        throw DimensionError("loss: lengths " + std::to_string(target.size()) + " and " + std::to_string(predicted.size()));
    return squared_distance(predicted, target);
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be non-negative");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (epochs == 0) throw ConfigError("train: epochs must be positive");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("train: ema_decay must lie in [0, 1)");
    if (!(cond_dropout_prob >= 0.0 && cond_dropout_prob < 1.0))
        throw ConfigError("train: cond_dropout_prob must lie in [0, 1)");
    if (num_train_steps < 1) throw ConfigError("train: num_train_steps must be positive");
    if (!(logit_eps > 0.0 && logit_eps < 0.5)) throw ConfigError("train: logit_eps must lie in (0, 0.5)");
}

namespace {

constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

ParameterMap zeros_like(const ParameterMap& params) {
    ParameterMap out;
    for (const auto& [name, t] : params) out.emplace(name, Tensor::zeros(t.shape()));
    return out;
}

}  // namespace

Trainer::Trainer(const std::vector<VideoRecord>& dataset, Denoiser model, TrainConfig config)
    : dataset_(&dataset),
      model_(std::move(model)),
      ema_(model_.clone()),
      config_(config),
      rng_(config.seed) {
    config_.validate();
    if (dataset.empty()) throw ConfigError("train: dataset is empty");
    if (config_.num_train_steps != model_.config().num_train_steps)
        throw ConfigError("train: num_train_steps differs from the denoiser's");
    for (const auto& v : dataset) {
        validate(v);
        if (v.features.cols != model_.config().input_dim)
            throw DimensionError("train: video '" + v.id + "' feature dim does not match the denoiser");
        std::vector<ScoreVector> targets;
        for (const auto& a : v.annotations) targets.push_back(logit_clip(a, config_.logit_eps));
        targets_.push_back(std::move(targets));
    }
    schedule_ = make_schedule(config_.schedule, config_.num_train_steps);
    adam_.first_moment = zeros_like(model_.parameters());
    adam_.second_moment = zeros_like(model_.parameters());
    order_.resize(dataset.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
}

std::size_t Trainer::steps_per_epoch() const {
    return (dataset_->size() + config_.batch_size - 1) / config_.batch_size;
}

std::size_t Trainer::total_steps() const { return steps_per_epoch() * config_.epochs; }

Trainer::Example Trainer::draw_example(std::mt19937_64& rng, std::size_t& cursor, std::vector<std::size_t>& order) const {
    if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
    }
    Example ex;
    ex.video = order[cursor++];
    const std::size_t annotators = targets_[ex.video].size();
    ex.annotator = std::uniform_int_distribution<std::size_t>(0, annotators - 1)(rng);
    ex.t = std::uniform_int_distribution<int>(1, config_.num_train_steps)(rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    ex.noise.resize((*dataset_)[ex.video].num_frames());
    for (double& x : ex.noise) x = normal(rng);
    ex.drop_condition = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config_.cond_dropout_prob;
    return ex;
}

double Trainer::example_loss(const Example& ex, const Denoiser& model, bool with_grad) const {
    const VideoRecord& video = (*dataset_)[ex.video];
    const ScoreVector& target = targets_[ex.video][ex.annotator];
    const std::vector<double> u0 = to_logit(target, config_.logit_eps);
    const std::vector<double> u_t = forward_sample(u0, ex.t, schedule_, ex.noise);
    const FeatureMatrix& features =
        ex.drop_condition ? FeatureMatrix(video.features.rows, video.features.cols, 0.0) : video.features;
    const Tensor z = model.encode_video(features);
    const Denoiser::Output out = model.forward(u_t, ex.t, z);
    const Tensor loss = score_loss(Tensor::from({target.size()}, target), out.scores);
    if (with_grad) backward(scale(loss, 1.0 / static_cast<double>(config_.batch_size)));
    return loss.item();
}

double Trainer::current_learning_rate() const {
    const double progress = static_cast<double>(adam_.step) / static_cast<double>(std::max<std::size_t>(1, total_steps()));
    return 0.5 * config_.learning_rate * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

void Trainer::apply_update() {
    const double lr = current_learning_rate();
    ++adam_.step;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_.step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_.step));
    for (auto& [name, p] : model_.parameters()) {
        auto theta = p.mutable_data();
        const auto g = p.grad();
        auto m = adam_.first_moment.at(name).mutable_data();
        auto v = adam_.second_moment.at(name).mutable_data();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
            theta[i] *= 1.0 - lr * config_.weight_decay;
            theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
        }
    }
    const double d = config_.ema_decay;
    for (auto& [name, e] : ema_.parameters()) {
        auto ed = e.mutable_data();
        const auto pd = model_.param(name).data();
        for (std::size_t i = 0; i < ed.size(); ++i) ed[i] = d * ed[i] + (1.0 - d) * pd[i];
    }
}

double Trainer::step() {
    for (auto& [name, p] : model_.parameters()) p.zero_grad();
    double total = 0.0;
    for (std::size_t b = 0; b < config_.batch_size; ++b) {
        const Example ex = draw_example(rng_, cursor_, order_);
        Tape tape;
        Tape::Scope scope(tape);
        const double loss = example_loss(ex, model_, true);
        if (!std::isfinite(loss)) {
            std::ostringstream os;
            os << "non-finite loss at step " << adam_.step << " (video " << (*dataset_)[ex.video].id << ", annotator "
               << ex.annotator << ", t=" << ex.t << ")";
            throw NumericalError(os.str());
        }
        total += loss;
    }
    for (const auto& [name, p] : model_.parameters())
        for (double g : p.grad())
            if (!std::isfinite(g)) throw NumericalError("non-finite gradient in '" + name + "' at step " + std::to_string(adam_.step));
    apply_update();
    return total / static_cast<double>(config_.batch_size);
}

std::vector<double> Trainer::run_epochs(std::size_t count) {
    std::vector<double> losses;
    for (std::size_t e = 0; e < count && epochs_done_ < config_.epochs; ++e) {
        double acc = 0.0;
        const std::size_t spe = steps_per_epoch();
        for (std::size_t s = 0; s < spe; ++s) acc += step();
        const double mean = acc / static_cast<double>(spe);
        log_.epoch_loss.push_back(mean);
        losses.push_back(mean);
        ++epochs_done_;
    }
    return losses;
}

double Trainer::evaluate_batch(std::uint64_t seed, std::size_t size) const {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(dataset_->size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    double total = 0.0;
    for (std::size_t b = 0; b < size; ++b) total += example_loss(draw_example(rng, cursor, order), model_, false);
    return total / static_cast<double>(size);
}

void Trainer::save_state(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    model_.save(dir / "model.json");
    save_parameters(dir / "ema.json", ema_.parameters());
    save_parameters(dir / "adam_m.json", adam_.first_moment);
    save_parameters(dir / "adam_v.json", adam_.second_moment);
    std::ostringstream rng_state;
    rng_state << rng_;
    const json state{{"step", adam_.step},    {"epochs_done", epochs_done_}, {"cursor", cursor_},
                     {"order", order_},       {"rng", rng_state.str()},      {"epoch_loss", log_.epoch_loss}};
    std::ofstream out(dir / "state.json");
    out << state.dump(1) << '\n';
}

void Trainer::load_state(const std::filesystem::path& dir) {
    Denoiser loaded = Denoiser::load(dir / "model.json");
    if (loaded.parameters().size() != model_.parameters().size())
        throw ValidationError("trainer state does not match the model architecture");
    model_ = std::move(loaded);
    ema_ = Denoiser(model_.config(), load_parameters(dir / "ema.json"));
    adam_.first_moment = load_parameters(dir / "adam_m.json");
    adam_.second_moment = load_parameters(dir / "adam_v.json");
    std::ifstream in(dir / "state.json");
    if (!in) throw ValidationError("missing trainer state in " + dir.string());
    try {
        const json state = json::parse(in);
        adam_.step = state.at("step").get<std::size_t>();
        epochs_done_ = state.at("epochs_done").get<std::size_t>();
        cursor_ = state.at("cursor").get<std::size_t>();
        order_ = state.at("order").get<std::vector<std::size_t>>();
        log_.epoch_loss = state.at("epoch_loss").get<std::vector<double>>();
        std::istringstream rng_state(state.at("rng").get<std::string>());
        rng_state >> rng_;
    } catch (const json::exception& e) {
        throw ValidationError("bad trainer state: " + std::string(e.what()));
    }
    if (order_.size() != dataset_->size()) throw ValidationError("trainer state was saved for a different dataset");
}

void save_checkpoint(const std::filesystem::path& checkpoint, const Denoiser& model, const TrainConfig& config) {
    save_parameters(checkpoint, model.parameters());
    const json train{{"learning_rate", config.learning_rate},
                     {"weight_decay", config.weight_decay},
                     {"batch_size", config.batch_size},
                     {"epochs", config.epochs},
                     {"ema_decay", config.ema_decay},
                     {"cond_dropout_prob", config.cond_dropout_prob},
                     {"seed", config.seed},
                     {"logit_eps", config.logit_eps}};
    const json meta{{"denoiser", config_to_json(model.config())},
                    {"train", train},
                    {"schedule", {{"kind", to_string(config.schedule)}, {"num_train_steps", config.num_train_steps}}}};
    std::ofstream out(checkpoint_meta_path(checkpoint));
    if (!out) throw std::runtime_error("cannot write " + checkpoint_meta_path(checkpoint).string());
    out << meta.dump(1) << '\n';
}

TrainConfig load_checkpoint_train_config(const std::filesystem::path& checkpoint) {
    std::ifstream in(checkpoint_meta_path(checkpoint));
    if (!in) throw ValidationError("missing checkpoint metadata " + checkpoint_meta_path(checkpoint).string());
    TrainConfig c;
    try {
        const json meta = json::parse(in);
        if (meta.contains("schedule")) {
            c.schedule = parse_schedule_kind(meta["schedule"].at("kind").get<std::string>());
            c.num_train_steps = meta["schedule"].at("num_train_steps").get<int>();
        } else {
            c.num_train_steps = meta.at("denoiser").at("num_train_steps").get<int>();
        }
        if (meta.contains("train")) {
            const json& t = meta["train"];
            c.learning_rate = t.at("learning_rate").get<double>();
            c.weight_decay = t.at("weight_decay").get<double>();
            c.batch_size = t.at("batch_size").get<std::size_t>();
            c.epochs = t.at("epochs").get<std::size_t>();
            c.ema_decay = t.at("ema_decay").get<double>();
            c.cond_dropout_prob = t.at("cond_dropout_prob").get<double>();
            c.seed = t.at("seed").get<std::uint64_t>();
            c.logit_eps = t.at("logit_eps").get<double>();
        }
    } catch (const json::exception& e) {
        throw ValidationError("bad checkpoint metadata: " + std::string(e.what()));
    } catch (const std::invalid_argument& e) {
        throw ValidationError("bad checkpoint metadata: " + std::string(e.what()));
    }
    return c;
}

TrainResult train(const std::vector<VideoRecord>& dataset, Denoiser model, const TrainConfig& config) {
    Trainer trainer(dataset, std::move(model), config);
    trainer.run_epochs(config.epochs);
    return {trainer.model().clone(), trainer.ema_model().clone(), trainer.log()};
}

}  // namespace scorediff
