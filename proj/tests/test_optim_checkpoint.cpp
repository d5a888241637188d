#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "lsconf/checkpoint.hpp"
#include "lsconf/errors.hpp"
#include "lsconf/optim.hpp"
#include "support/gradcheck.hpp"

using namespace lsconf;

TEST(SgdStep, Examples)
{
    NdArray p({1}, 1.0);
    const NdArray g({1}, 2.0);
    sgd_step({&p}, {&g}, 0.1);
    EXPECT_DOUBLE_EQ(p[0], 0.8);

    NdArray q({3}, std::vector<double>{1, 2, 3});
    const NdArray zero({3}, 0.0);
    sgd_step({&q}, {&zero}, 0.5);
    EXPECT_EQ(q.storage(), (std::vector<double>{1, 2, 3}));
}

TEST(SgdStep, RejectsNonPositiveRate)
{
    NdArray p({1}, 1.0);
    const NdArray g({1}, 1.0);
    EXPECT_THROW(sgd_step({&p}, {&g}, 0.0), ContractError);
    EXPECT_THROW(Sgd(-1.0), ContractError);
}

TEST(Sgd, QuadraticBowl)
{
    Tensor p = Tensor::parameter(NdArray({1}, 1.0));
    std::vector<Tensor> params{p};
    Sgd opt(0.1);
    for (int i = 0; i < 50; ++i) {
        Tape tape;
        Tape::Scope s(tape);
        tape.backward(sum(square(p)));
        opt.step(params);
    }
    // Each step multiplies p by 0.8.
    EXPECT_NEAR(p.value()[0], std::pow(0.8, 50), 1e-15);
    EXPECT_LT(std::abs(p.value()[0]), 1e-3);
}

TEST(Adam, ConvergesOnQuadratic)
{
    Tensor p = Tensor::parameter(NdArray({2}, std::vector<double>{3.0, -2.0}));
    std::vector<Tensor> params{p};
    Adam opt(0.05);
    for (int i = 0; i < 2000; ++i) {
        Tape tape;
        Tape::Scope s(tape);
        tape.backward(sum(square(p)));
        opt.step(params);
    }
    EXPECT_LT(std::abs(p.value()[0]), 1e-3);
    EXPECT_LT(std::abs(p.value()[1]), 1e-3);
}

TEST(Adam, FirstStepMovesByLearningRate)
{
    // With bias correction the first update is lr * g / (|g| + eps).
    Tensor p = Tensor::parameter(NdArray({1}, 1.0));
    std::vector<Tensor> params{p};
    Adam opt(0.01);
    Tape tape;
    Tape::Scope s(tape);
    tape.backward(sum(scale(p, 4.0)));
    opt.step(params);
    EXPECT_NEAR(p.value()[0], 1.0 - 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
    EXPECT_FALSE(p.has_grad());
}

TEST(OptimizerKind, Parse)
{
    EXPECT_EQ(parse_optimizer_kind("adam"), OptimizerKind::adam);
    EXPECT_EQ(parse_optimizer_kind("sgd"), OptimizerKind::sgd);
    EXPECT_THROW(parse_optimizer_kind("rmsprop"), ConfigError);
}

namespace {

Checkpoint sample_checkpoint()
{
    std::mt19937_64 rng(1);
    Checkpoint ck;
    ck.entries.push_back({"a.weight", lsconf::testing::random_array({3, 2}, rng)});
    ck.entries.push_back({"b", NdArray({1}, -0.0)});
    NdArray odd({4});
    odd[0] = 1e-310;  // subnormal
    odd[1] = std::nextafter(1.0, 2.0);
    odd[2] = -123456.789;
    odd[3] = 0.1;
    ck.entries.push_back({"odd", odd});
    ck.meta["note"] = "x";
    return ck;
}

}  // namespace

TEST(Checkpoint, BitExactRoundTrip)
{
    const Checkpoint ck = sample_checkpoint();
    const std::string bytes = encode_checkpoint(ck);
    EXPECT_EQ(bytes.substr(0, 4), "LSF1");
    const Checkpoint back = decode_checkpoint(bytes);
    ASSERT_EQ(back.entries.size(), ck.entries.size());
    for (std::size_t i = 0; i < ck.entries.size(); ++i) {
        EXPECT_EQ(back.entries[i].name, ck.entries[i].name);
        ASSERT_EQ(back.entries[i].value.shape(), ck.entries[i].value.shape());
        for (std::size_t k = 0; k < ck.entries[i].value.size(); ++k)
            EXPECT_EQ(std::bit_cast<std::uint64_t>(back.entries[i].value[k]),
                      std::bit_cast<std::uint64_t>(ck.entries[i].value[k]));
    }
    EXPECT_EQ(back.meta["note"], "x");
    EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, FileRoundTripAndFingerprint)
{
    const auto dir = std::filesystem::temp_directory_path() / "lsconf_ckpt_test";
    std::filesystem::create_directories(dir);
    const Checkpoint ck = sample_checkpoint();
    write_checkpoint(dir / "c.lsf", ck);
    const Checkpoint back = read_checkpoint(dir / "c.lsf");
    EXPECT_EQ(back.get("a.weight"), ck.get("a.weight"));
    const std::string fp = payload_fingerprint(encode_checkpoint(ck));
    EXPECT_EQ(fp.size(), 64u);
    EXPECT_EQ(fp, payload_fingerprint(read_file(dir / "c.lsf")));

    Checkpoint changed = ck;
    changed.entries[0].value[0] += 1e-12;
    EXPECT_NE(payload_fingerprint(encode_checkpoint(changed)), fp);
    // Meta is not part of the payload hash.
    Checkpoint meta_only = ck;
    meta_only.meta["note"] = "y";
    EXPECT_EQ(payload_fingerprint(encode_checkpoint(meta_only)), fp);
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, Sha256KnownVector)
{
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Checkpoint, CorruptInputIsIoError)
{
    const std::string bytes = encode_checkpoint(sample_checkpoint());
    EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), IoError);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
    EXPECT_THROW(decode_checkpoint("LSF"), IoError);
    EXPECT_THROW(read_checkpoint("/nonexistent/dir/none.lsf"), IoError);
    EXPECT_THROW(sample_checkpoint().get("missing"), IoError);
}
