#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpas/checkpoint.hpp"
#include "gpas/cli.hpp"
#include "gpas/errors.hpp"

using namespace gpas;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
    fs::path dir = fs::temp_directory_path() / ("gpas_ckpt_" + name);
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

ModelConfig config() {
    ModelConfig c = preset("micro").model;
    c.variant = Variant::agcn_in;
    c.graph = GraphKind::expanded;
    c.rounds = 2;
    return c;
}

ModelParams params_for(const ModelConfig &c) {
    RngStream rng(17);
    ModelParams p = ModelParams::init(c, rng);
    // awkward values survive the binary round trip
    p.output_bias.value[0] = -0.0;
    p.output_bias.value[1] = 1e-310;
    p.output_bias.value[2] = 0.1;
    return p;
}

} // namespace

TEST(Checkpoint, RoundTripIsBitIdentical) {
    const auto dir = scratch("roundtrip");
    const ModelConfig c = config();
    const ModelParams p = params_for(c);
    save_checkpoint(dir / "a.ckpt", c, p, {{"note", "hello"}});
    Checkpoint ck = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(ck.config, c);
    ASSERT_EQ(ck.extra.size(), 1u);
    EXPECT_EQ(ck.extra[0].second, "hello");
    const auto a = p.named();
    const auto b = std::as_const(ck.params).named();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].first, b[i].first);
        EXPECT_EQ(a[i].second->shape, b[i].second->shape);
        EXPECT_EQ(std::memcmp(a[i].second->value.data(), b[i].second->value.data(),
                              a[i].second->value.size() * sizeof(double)),
                  0)
            << a[i].first;
    }
    EXPECT_TRUE(std::signbit(ck.params.output_bias.value[0]));

    // saving the loaded copy reproduces the file byte for byte
    save_checkpoint(dir / "b.ckpt", ck.config, ck.params, ck.extra);
    EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
}

TEST(Checkpoint, LogitsAndDecodeBitIdenticalAfterReload) {
    const auto dir = scratch("logits");
    const ModelConfig c = config();
    ModelParams p = params_for(c);
    save_checkpoint(dir / "m.ckpt", c, p);
    Checkpoint ck = load_checkpoint(dir / "m.ckpt");
    RngStream rng(3);
    const auto rec = random_record(c, rng);
    ad::Tape ta, tb;
    auto la = forward_teacher_forced(ta, rec, p, c, RunMode{}).logits;
    auto lb = forward_teacher_forced(tb, rec, ck.params, ck.config, RunMode{}).logits;
    EXPECT_TRUE(std::equal(la.value().begin(), la.value().end(), lb.value().begin(), lb.value().end()));
    const auto da = greedy_decode(rec, p, c);
    const auto db = greedy_decode(rec, ck.params, ck.config);
    EXPECT_EQ(da.ids, db.ids);
    EXPECT_EQ(da.probs, db.probs);
}

TEST(Checkpoint, OptimizerBlocksAreOptionalState) {
    const auto dir = scratch("state");
    const ModelConfig c = config();
    const ModelParams p = params_for(c);
    ad::Parameter m({2, 3});
    m.value = {1, 2, 3, 4, 5, 6};
    save_checkpoint(dir / "s.ckpt", c, p, {}, {{"optimizer/m/x", &m}});
    const Checkpoint ck = load_checkpoint(dir / "s.ckpt");
    ASSERT_EQ(ck.state.count("optimizer/m/x"), 1u);
    EXPECT_EQ(ck.state.at("optimizer/m/x").value, m.value);
    EXPECT_THROW(save_checkpoint(dir / "t.ckpt", c, p, {}, {{"bogus", &m}}), SchemaError);
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const auto dir = scratch("corrupt");
    const ModelConfig c = config();
    const ModelParams p = params_for(c);
    save_checkpoint(dir / "ok.ckpt", c, p);
    const std::string good = slurp(dir / "ok.ckpt");

    std::ofstream(dir / "trunc.ckpt", std::ios::binary) << good.substr(0, good.size() - 5);
    EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt"), SchemaError);

    std::ofstream(dir / "magic.ckpt", std::ios::binary) << "NOT-A-CHECKPOINT 1\n" << good.substr(good.find('\n') + 1);
    EXPECT_THROW(load_checkpoint(dir / "magic.ckpt"), SchemaError);

    // header claims the expanded graph but the blocks come from the basic one
    ModelConfig basic = c;
    basic.graph = GraphKind::basic;
    RngStream rng(1);
    save_checkpoint(dir / "basic.ckpt", basic, ModelParams::init(basic, rng));
    std::string swapped = slurp(dir / "basic.ckpt");
    const auto at = swapped.find("graph = basic");
    ASSERT_NE(at, std::string::npos);
    swapped.replace(at, 13, "graph = expanded");
    std::ofstream(dir / "missing.ckpt", std::ios::binary) << swapped;
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), SchemaError);

    // and the reverse leaves unexpected blocks behind
    std::string extra = good;
    extra.replace(extra.find("graph = expanded"), 16, "graph = basic");
    std::ofstream(dir / "extra.ckpt", std::ios::binary) << extra;
    EXPECT_THROW(load_checkpoint(dir / "extra.ckpt"), SchemaError);

    EXPECT_THROW(load_checkpoint(dir / "nope.ckpt"), SchemaError);
}
