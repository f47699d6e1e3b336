// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "denoiser_check.hpp"
#include "scorediff/data.hpp"
#include "scorediff/denoiser.hpp"
#include "scorediff/error.hpp"

using namespace scorediff;
namespace fs = std::filesystem;

namespace {

FeatureMatrix random_features(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    FeatureMatrix f(n, d);
    for (double& x : f.values) x = normal(rng);
    return f;
}

DenoiserConfig small_config(std::size_t input_dim = 4) {
    DenoiserConfig c;
    c.input_dim = input_dim;
    c.hidden_dim = 16;
    c.num_heads = 2;
    c.ffn_dim = 32;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.codebook_size = 50;
    c.num_train_steps = 100;
    return c;
}

std::vector<VideoRecord> one_video(std::size_t frames, std::uint64_t seed) {
    SynthConfig s;
    s.num_videos = 1;
    s.frames_per_video = frames;
    s.feature_dim = 4;
    s.num_annotators = 1;
    s.num_modes = 1;
    s.seed = seed;
    return synth_generate(s).videos;
}

TrainConfig quick_train(std::size_t epochs) {
    TrainConfig t;
    t.learning_rate = 3e-3;
    t.batch_size = 4;
    t.epochs = epochs;
    t.cond_dropout_prob = 0.0;
    t.num_train_steps = 100;
    t.seed = 3;
    return t;
}

}  // namespace

TEST(Encoder, OutputShape) {
    const Denoiser model(small_config(), 1);
    for (std::size_t n : {2u, 17u, 100u}) {
        const Tensor z = model.encode_video(random_features(n, 4, n));
        EXPECT_EQ(z.rows(), n);
        EXPECT_EQ(z.cols(), 16u);
    }
    EXPECT_THROW(model.encode_video(random_features(5, 3, 0)), DimensionError);
}

TEST(Encoder, PermutationEquivariant) {
    const Denoiser model(small_config(), 2);
    const FeatureMatrix f = random_features(9, 4, 7);
    const std::vector<std::size_t> perm{3, 0, 8, 1, 7, 2, 6, 4, 5};
    FeatureMatrix g(9, 4);
    for (std::size_t r = 0; r < 9; ++r)
        for (std::size_t c = 0; c < 4; ++c) g(r, c) = f(perm[r], c);
    const Tensor zf = model.encode_video(f), zg = model.encode_video(g);
    for (std::size_t r = 0; r < 9; ++r)
        for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(zg(r, c), zf(perm[r], c), 1e-12);
}

TEST(Encoder, ProjectionGradientMatchesFiniteDifferences) {
    Denoiser model(small_config(), 3);
    const FeatureMatrix f = random_features(6, 4, 8);
    auto functional = [&] {
        const Tensor z = model.encode_video(f);
        return sum(mul(sigmoid(z), z));
    };
    Tensor& w = model.parameters().at("proj.w");
    w.zero_grad();
    {
        Tape tape;
        Tape::Scope scope(tape);
        tape.backward(functional());
    }
    const double h = 1e-6;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double orig = w.data()[i];
        w.mutable_data()[i] = orig + h;
        const double up = functional().item();
        w.mutable_data()[i] = orig - h;
        const double down = functional().item();
        w.mutable_data()[i] = orig;
        const double numeric = (up - down) / (2 * h);
        EXPECT_LT(std::abs(numeric - w.grad()[i]) / std::max(1.0, std::abs(numeric)), 1e-4);
    }
}

TEST(Embeddings, TimeDistinctAndPositionClosedForm) {
    const Denoiser model(small_config(), 4);
    const Tensor a = model.time_embed(1), b = model.time_embed(2), c = model.time_embed(100);
    double dab = 0, dac = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dab += std::abs(a.data()[i] - b.data()[i]);
        dac += std::abs(a.data()[i] - c.data()[i]);
    }
    EXPECT_GT(dab, 0.0);
    EXPECT_GT(dac, 0.0);
    const Tensor phi = pos_embed(5, 8);
    for (std::size_t c2 = 0; c2 < 8; ++c2) EXPECT_DOUBLE_EQ(phi(0, c2), c2 % 2 == 0 ? 0.0 : 1.0);
    EXPECT_NEAR(phi(3, 0), std::sin(3.0), 1e-15);
    EXPECT_THROW(model.time_embed(0), ContractError);
}

TEST(Codebook, BinArithmetic) {
    EXPECT_EQ(quantize_bin(0.5, 200), 100u);
    EXPECT_EQ(quantize_bin(0.995, 200), 199u);
    EXPECT_EQ(quantize_bin(1.0, 200), 199u);
    EXPECT_EQ(quantize_bin(0.0, 200), 0u);
    DenoiserConfig cfg = small_config();
    cfg.codebook_size = 200;
    const Denoiser model(cfg, 5);
    // sigmoid(0.001) and sigmoid(0.002) share bin 100.
    const std::vector<double> u{0.001, 0.002, 3.0};
    const Tensor e = model.quantize_embed(u);
    for (std::size_t c = 0; c < e.cols(); ++c) EXPECT_EQ(e(0, c), e(1, c));
    double diff = 0;
    for (std::size_t c = 0; c < e.cols(); ++c) diff += std::abs(e(0, c) - e(2, c));
    EXPECT_GT(diff, 0.0);
}

TEST(AdaLN, ZeroGatesAreIdentity) {
    const Denoiser model(small_config(), 6);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> q(5 * 16), k(7 * 16), cond(5 * 16);
    for (double& x : q) x = normal(rng);
    for (double& x : k) x = normal(rng);
    for (double& x : cond) x = normal(rng);
    const Tensor qt = Tensor::from({5, 16}, q), kt = Tensor::from({7, 16}, k), ct = Tensor::from({5, 16}, cond);
    // Self-attention form (keys are the queries).
    const Tensor out = adaln_block(qt, qt, qt, ct, model.block("dec.0.self_"), 2);
    ASSERT_EQ(out.rows(), 5u);
    ASSERT_EQ(out.cols(), 16u);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(out.data()[i], q[i]);
    EXPECT_THROW(adaln_block(qt, kt, kt, ct, model.block("dec.0."), 2), DimensionError);
}

TEST(AdaLN, BlockGradientOnSmallInstance) {
    Denoiser model(small_config(), 7);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& [name, p] : model.parameters())
        if (name.rfind("dec.0.", 0) == 0)
            for (double& x : p.mutable_data()) x += 0.3 * normal(rng);
    DenoiserConfig cfg = small_config();
    std::vector<double> q(3 * 16), c(3 * 16);
    for (double& x : q) x = normal(rng);
    for (double& x : c) x = normal(rng);
    Tensor qt = Tensor::from({3, 16}, q, true);
    const Tensor ct = Tensor::from({3, 16}, c);
    const BlockWeights w = model.block("dec.0.self_");
    auto f = [&] { return sum(mul(adaln_block(qt, qt, qt, ct, w, 2), adaln_block(qt, qt, qt, ct, w, 2))); };
    {
        Tape tape;
        Tape::Scope scope(tape);
        tape.backward(f());
    }
    const double h = 1e-6;
    for (std::size_t i = 0; i < qt.size(); ++i) {
        const double orig = qt.data()[i];
        qt.mutable_data()[i] = orig + h;
        const double up = f().item();
        qt.mutable_data()[i] = orig - h;
        const double down = f().item();
        qt.mutable_data()[i] = orig;
        const double numeric = (up - down) / (2 * h);
        EXPECT_LT(std::abs(numeric - qt.grad()[i]) / std::max(1.0, std::abs(numeric)), 1e-4);
    }
    (void)cfg;
}

TEST(Denoiser, FreshStackIsIdentityOnCodebookQuery) {
    const Denoiser model(small_config(), 8);
    const std::vector<double> u{-3.0, -0.2, 0.0, 0.4, 2.5, 6.0};
    const Tensor z = model.encode_video(random_features(6, 4, 9));
    const Tensor hidden = model.decode_hidden(u, 37, z);
    const Tensor c = model.quantize_embed(u);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(hidden.data()[i], c.data()[i]);
}

TEST(Denoiser, ScoresInUnitIntervalAndAttentionNormalised) {
    const Denoiser model(small_config(), 9);
    const std::vector<double> u{-30.0, -0.2, 0.0, 0.4, 2.5, 30.0};
    const auto out = model.forward(u, 50, model.encode_video(random_features(6, 4, 10)));
    for (double s : out.scores.data()) {
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
    }
    double mass = 0;
    for (double a : out.attention) mass += a;
    EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(Denoiser, FullGradientMatchesFiniteDifferences) {
    const auto r = scorediff::testing::denoiser_gradcheck(scorediff::testing::tiny_denoiser_config(), 4, 11);
    EXPECT_GT(r.checked, 500u);
    EXPECT_LT(r.max_rel_error, 1e-4) << "worst " << r.worst_param;
}

TEST(Loss, ClosedForms) {
    const Tensor a = Tensor::from({2}, {0.3, 0.8});
    EXPECT_EQ(score_loss(a, a).item(), 0.0);
    EXPECT_DOUBLE_EQ(score_loss(Tensor::from({2}, {1, 0}), Tensor::from({2}, {0, 1})).item(), 2.0);
    Tensor pred = Tensor::from({2}, {0.1, 0.9}, true);
    const Tensor target = Tensor::from({2}, {0.6, 0.2});
    {
        Tape tape;
        Tape::Scope scope(tape);
        tape.backward(score_loss(target, pred));
    }
    EXPECT_NEAR(pred.grad()[0], 2 * (0.1 - 0.6), 1e-15);
    EXPECT_NEAR(pred.grad()[1], 2 * (0.9 - 0.2), 1e-15);
}

TEST(Training, AppendixDefaults) {
    const TrainConfig t;
    EXPECT_EQ(t.learning_rate, 5e-5);
    EXPECT_EQ(t.batch_size, 256u);
    EXPECT_EQ(t.ema_decay, 0.999);
    EXPECT_NO_THROW(t.validate());
    TrainConfig bad;
    bad.batch_size = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Training, FixedBatchLossDecreasesWhenOverfitting) {
    const auto data = one_video(16, 1);
    Trainer trainer(data, Denoiser(small_config(), 12), quick_train(100));
    const double before = trainer.evaluate_batch(99, 32);
    for (int s = 0; s < 50; ++s) trainer.step();
    EXPECT_LT(trainer.evaluate_batch(99, 32), before);
}

TEST(Training, SeedDeterminism) {
    const auto data = one_video(12, 2);
    const auto a = train(data, Denoiser(small_config(), 13), quick_train(5));
    const auto b = train(data, Denoiser(small_config(), 13), quick_train(5));
    EXPECT_EQ(a.log.epoch_loss, b.log.epoch_loss);
}

TEST(Training, ResumeReproducesTrajectory) {
    const auto data = one_video(12, 3);
    Trainer full(data, Denoiser(small_config(), 14), quick_train(6));
    full.run_epochs(6);

    const fs::path dir = fs::temp_directory_path() / "scorediff_resume_test";
    fs::remove_all(dir);
    {
        Trainer first(data, Denoiser(small_config(), 14), quick_train(6));
        first.run_epochs(3);
        first.save_state(dir);
    }
    Trainer resumed(data, Denoiser(small_config(), 99), quick_train(6));
    resumed.load_state(dir);
    resumed.run_epochs(3);
    EXPECT_EQ(resumed.log().epoch_loss, full.log().epoch_loss);
    for (const auto& [name, p] : full.model().parameters()) {
        const auto q = resumed.model().param(name).data();
        for (std::size_t i = 0; i < p.size(); ++i) ASSERT_EQ(q[i], p.data()[i]) << name;
    }
    fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripAndShapeValidation) {
    const Denoiser model(small_config(), 15);
    const fs::path p = fs::temp_directory_path() / "scorediff_ckpt_test.json";
    save_checkpoint(p, model, quick_train(2));
    const Denoiser back = Denoiser::load(p);
    EXPECT_EQ(back.config().hidden_dim, 16u);
    for (const auto& [name, t] : model.parameters()) EXPECT_EQ(back.param(name).shape(), t.shape());
    const std::vector<double> u{0.1, -0.2, 0.3};
    const FeatureMatrix f = random_features(3, 4, 3);
    const auto a = model.forward(u, 10, model.encode_video(f)), b = back.forward(u, 10, back.encode_video(f));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.scores.data()[i], b.scores.data()[i]);
    EXPECT_EQ(load_checkpoint_train_config(p).batch_size, 4u);
    fs::remove(p);
    fs::remove(checkpoint_meta_path(p));
}
