#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpas/checkpoint.hpp"
#include "gpas/cli.hpp"
#include "gpas/errors.hpp"
#include "gpas/synth.hpp"
#include "gpas/training.hpp"

using namespace gpas;
using ad::Tape;
using ad::Var;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
    fs::path dir = fs::temp_directory_path() / ("gpas_train_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelConfig micro(Variant v = Variant::none, GraphKind g = GraphKind::basic) {
    ModelConfig c = preset("micro").model;
    c.variant = v;
    c.graph = g;
    return c;
}

// small synthetic corpus encoded for a reduced desk-shaped model
struct SmallCorpus {
    ModelConfig model;
    std::vector<ProposalRecord> train, val;
};

SmallCorpus small_corpus(std::size_t n_train, std::size_t n_val, Variant v = Variant::none) {
    SynthSpec spec;
    spec.segments = 3;
    spec.words = 5;
    spec.visual_dim = 6;
    const auto raw = gen_corpus(spec, n_train, n_val);
    const Vocabulary vocab = build_vocab(raw.train);
    SmallCorpus c;
    c.model = preset("desk").model;
    c.model.variant = v;
    c.model.hidden = 16;
    c.model.embed = 8;
    c.model.segments = spec.segments;
    c.model.words = spec.words;
    c.model.visual_dim = spec.visual_dim;
    c.model.vocab_size = vocab.size();
    const CorpusLayout layout{spec.segments, spec.words, spec.visual_dim};
    c.train = encode_corpus(raw.train, vocab, layout).records;
    c.val = encode_corpus(raw.validation, vocab, layout, SplitRole::validation).records;
    return c;
}

} // namespace

TEST(Schedule, LearningRateSteps) {
    const TrainConfig tc;
    for (std::size_t e : {0, 1, 2}) EXPECT_DOUBLE_EQ(lr_at(e, tc), 3.0e-4);
    EXPECT_NEAR(lr_at(3, tc), 2.4e-4, 1e-18);
    EXPECT_NEAR(lr_at(6, tc), 1.92e-4, 1e-18);
    for (std::size_t e = 0; e < 30; ++e) {
        if (e % 3 != 0) {
            EXPECT_EQ(lr_at(e, tc), lr_at(e - 1, tc));
        } else if (e > 0) {
            EXPECT_LT(lr_at(e, tc), lr_at(e - 1, tc));
        }
    }
}

TEST(CrossEntropy, ClosedForms) {
    Tape t;
    const std::vector<TokenId> ref{2, 0, 3};
    const std::vector<double> all(3, 1.0);
    std::vector<double> sharp(3 * 4, -1e3);
    for (std::size_t i = 0; i < 3; ++i) sharp[i * 4 + ref[i]] = 1e3;
    EXPECT_EQ(cross_entropy(t.constant({3, 4}, sharp), ref, all).item(), 0.0);
    EXPECT_NEAR(cross_entropy(t.zeros({3, 4}), ref, all).item(), std::log(4.0), 1e-15);

    // masking a position removes it exactly: compare against the 2-row slice
    std::vector<double> z(12);
    RngStream rng(1);
    for (double &v : z) v = rng.normal();
    auto full = t.constant({3, 4}, z);
    const std::vector<double> mask{1, 1, 0};
    const std::vector<TokenId> two{2, 0};
    const std::vector<double> ones{1, 1};
    EXPECT_EQ(cross_entropy(full, ref, mask).item(), cross_entropy(ad::slice(full, 0, 0, 2), two, ones).item());
    EXPECT_THROW(cross_entropy(full, ref, std::vector<double>(3, 0.0)), NumericError);
}

TEST(Discriminative, ClosedFormsAndGradient) {
    ModelConfig c = micro();
    ModelParams p = ModelParams::zeros(c);
    const std::vector<TokenId> ref{7, 9, token::eos};
    const auto bow = bag_of_words(ref, c.vocab_size);
    EXPECT_EQ(bow[7], 1.0);
    EXPECT_EQ(bow[token::eos], 0.0);
    EXPECT_EQ(bow[8], 0.0);
    Tape t;
    const std::vector<Var> hs{t.constant({1, c.hidden}, std::vector<double>(c.hidden, 0.3))};
    EXPECT_NEAR(discriminative_loss(hs, p, ref).item(), std::log(2.0), 1e-15);

    for (std::size_t k = 0; k < c.vocab_size; ++k) p.disc_bias.value[k] = bow[k] > 0 ? 800.0 : -800.0;
    Tape t2;
    const std::vector<Var> hs2{t2.constant({1, c.hidden}, std::vector<double>(c.hidden, 0.3))};
    EXPECT_LT(discriminative_loss(hs2, p, ref).item(), 1e-300);

    RngStream rng(2);
    ModelParams q = ModelParams::init(c, rng);
    const ad::NamedParameter ps[] = {{"disc.weight", &q.disc_weight}, {"disc.bias", &q.disc_bias}};
    auto f = [&](Tape &tape) {
        const std::vector<Var> h{tape.constant({1, c.hidden}, std::vector<double>(c.hidden, 0.7)),
                                 tape.constant({1, c.hidden}, std::vector<double>(c.hidden, -0.2))};
        return discriminative_loss(h, q, ref);
    };
    EXPECT_TRUE(ad::grad_check(f, ps).passed);
}

TEST(TotalLoss, LambdaPathsAndPositivity) {
    const ModelConfig c = micro(Variant::agcn_out);
    RngStream rng(3);
    ModelParams p = ModelParams::init(c, rng);
    const auto rec = random_record(c, rng);
    TrainConfig tc;
    tc.lambda_d = 0.0;
    Tape a;
    auto zero = total_loss(a, rec, p, c, tc, RunMode{});
    EXPECT_EQ(zero.total.item(), zero.cross_entropy.item());
    tc.lambda_d = 0.1;
    Tape b;
    auto dflt = total_loss(b, rec, p, c, tc, RunMode{});
    EXPECT_DOUBLE_EQ(dflt.total.item(), dflt.cross_entropy.item() + 0.1 * dflt.discriminative.item());
    EXPECT_EQ(dflt.cross_entropy.item(), zero.cross_entropy.item());
    EXPECT_GT(dflt.total.item(), 0.0);
    EXPECT_TRUE(std::isfinite(dflt.total.item()));
    EXPECT_EQ(TrainConfig{}.lambda_d, 0.1);
}

TEST(TotalLoss, SmallGradientStepDoesNotIncreaseLoss) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ModelConfig c = micro(seed % 2 ? Variant::agcn_in : Variant::agcn_out,
                                    seed % 3 ? GraphKind::basic : GraphKind::expanded);
        RngStream rng(seed);
        ModelParams p = ModelParams::init(c, rng);
        const auto rec = random_record(c, rng);
        const TrainConfig tc;
        Tape t;
        auto before = total_loss(t, rec, p, c, tc, RunMode{});
        const double l0 = before.total.item();
        t.backward(before.total);
        for (auto &np : p.named())
            for (std::size_t i = 0; i < np.param->value.size(); ++i) np.param->value[i] -= 1e-6 * np.param->grad[i];
        Tape t2;
        EXPECT_LE(total_loss(t2, rec, p, c, tc, RunMode{}).total.item(), l0) << seed;
    }
}

TEST(Adam, FirstStepZeroGradientAndClipping) {
    ad::Parameter a({1, 3});
    a.value = {1, 2, 3};
    a.grad = {0.5, -7, 0};
    const ad::NamedParameter ps[] = {{"a", &a}};
    AdamState st = AdamState::for_params(ps);
    adam_step(ps, st, 1e-3);
    EXPECT_NEAR(a.value[0], 1 - 1e-3, 1e-10);
    EXPECT_NEAR(a.value[1], 2 + 1e-3, 1e-10);
    EXPECT_EQ(a.value[2], 3.0);
    EXPECT_EQ(st.step, 1u);

    ad::Parameter b({1, 2});
    b.grad = {3, 4};
    const ad::NamedParameter bs[] = {{"b", &b}};
    EXPECT_DOUBLE_EQ(clip_gradients(bs, 1.0), 5.0);
    EXPECT_NEAR(b.grad[0], 0.6, 1e-15);
    EXPECT_NEAR(b.grad[1], 0.8, 1e-15);
    EXPECT_DOUBLE_EQ(clip_gradients(bs, 0.0), 1.0);
    EXPECT_NEAR(b.grad[0], 0.6, 1e-15);
}

TEST(Metrics, EpochJsonRoundTrip) {
    const EpochMetrics m{4, 0.125, 1.0 / 3, 0.875, 1.92e-4};
    EXPECT_EQ(EpochMetrics::from_json(m.to_json()), m);
    EXPECT_EQ(m.to_json().rfind("{\"epoch\":4,", 0), 0u);
}

TEST(Config, KeyValueRoundTrip) {
    TrainConfig tc;
    tc.lr0 = 1.5e-3;
    tc.mask_padding = false;
    tc.target_val_acc = 0.9;
    TrainConfig back;
    EXPECT_TRUE(back.apply(tc.to_pairs()).empty());
    EXPECT_EQ(back, tc);
    tc.batch_size = 0;
    EXPECT_THROW(tc.validate(), ConfigError);
}

TEST(Train, OverfitsOneRecord) {
    const auto c = small_corpus(1, 1);
    ModelConfig m = c.model;
    m.keep_prob = 1.0;
    TrainConfig tc;
    tc.lr0 = 3e-2;
    tc.decay_factor = 1.0; // one step per epoch: the usual decay would freeze training
    tc.batch_size = 1;
    tc.epochs = 300;
    const std::vector<ProposalRecord> one{c.train[0]};
    const auto res = train(TrainRun{m, tc, std::nullopt, std::nullopt, std::nullopt}, one, one);
    ASSERT_FALSE(res.log.empty());
    EXPECT_LT(res.log.back().train_loss, 0.01);
    ModelParams last = res.last;
    const auto d = greedy_decode(one[0], last, m);
    std::vector<TokenId> want;
    for (TokenId id : one[0].reference) {
        want.push_back(id);
        if (id == token::eos) break;
    }
    EXPECT_EQ(d.ids, want);
}

TEST(Train, SecondEpochImprovesAndRunsAreDeterministic) {
    const auto c = small_corpus(200, 20);
    TrainConfig tc;
    tc.epochs = 2;
    tc.lr0 = 3e-3;
    const auto dir_a = scratch("det_a"), dir_b = scratch("det_b");
    const auto a = train(TrainRun{c.model, tc, dir_a, std::nullopt, std::nullopt}, c.train, c.val);
    const auto b = train(TrainRun{c.model, tc, dir_b, std::nullopt, std::nullopt}, c.train, c.val);
    ASSERT_EQ(a.log.size(), 2u);
    EXPECT_LT(a.log[1].train_loss, a.log[0].train_loss);
    EXPECT_EQ(a.log, b.log);
    EXPECT_EQ(slurp(dir_a / "metrics.jsonl"), slurp(dir_b / "metrics.jsonl"));
    EXPECT_EQ(slurp(dir_a / "last.ckpt"), slurp(dir_b / "last.ckpt"));
    EXPECT_TRUE(fs::exists(dir_a / "best.ckpt"));
}

TEST(Train, ResumeContinuesBitIdentically) {
    const auto c = small_corpus(60, 10, Variant::agcn_in);
    TrainConfig tc;
    tc.epochs = 4;
    tc.lr0 = 3e-3;
    const auto whole = scratch("resume_whole"), staged = scratch("resume_staged");
    train(TrainRun{c.model, tc, whole, std::nullopt, std::nullopt}, c.train, c.val);
    train(TrainRun{c.model, tc, staged, std::nullopt, 2}, c.train, c.val);
    EXPECT_EQ(load_checkpoint(staged / "last.ckpt").extra.back().second.empty(), false);
    train(TrainRun{c.model, tc, staged, staged / "last.ckpt", std::nullopt}, c.train, c.val);
    EXPECT_EQ(slurp(whole / "metrics.jsonl"), slurp(staged / "metrics.jsonl"));
    EXPECT_EQ(slurp(whole / "last.ckpt"), slurp(staged / "last.ckpt"));
    EXPECT_EQ(slurp(whole / "best.ckpt"), slurp(staged / "best.ckpt"));
}

TEST(Train, EarlyStopAndValidation) {
    const auto c = small_corpus(4, 2);
    ModelConfig m = c.model;
    m.keep_prob = 1.0;
    TrainConfig tc;
    tc.lr0 = 1e-2;
    tc.decay_factor = 1.0;
    tc.batch_size = 1;
    tc.epochs = 300;
    tc.target_val_acc = 1.0;
    const std::vector<ProposalRecord> one{c.train[0]};
    const auto res = train(TrainRun{m, tc, std::nullopt, std::nullopt, std::nullopt}, one, one);
    EXPECT_TRUE(res.stopped_early);
    EXPECT_LT(res.log.size(), tc.epochs);
    EXPECT_EQ(res.log.back().val_token_acc, 1.0);
    EXPECT_EQ(res.best_epoch, res.log.back().epoch);
    EXPECT_THROW(train(TrainRun{c.model, tc, std::nullopt, std::nullopt, std::nullopt}, {}, c.val), ConfigError);
    ModelConfig wrong = c.model;
    wrong.words += 1;
    EXPECT_THROW(train(TrainRun{wrong, tc, std::nullopt, std::nullopt, std::nullopt}, c.train, c.val),
                 DimensionError);
}
