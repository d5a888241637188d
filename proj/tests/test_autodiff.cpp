#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lsconf/autodiff.hpp"
#include "lsconf/errors.hpp"

using namespace lsconf;

TEST(NdArray, ShapeAndSizeAgree)
{
    NdArray a({2, 3, 4});
    EXPECT_EQ(a.size(), 24u);
    EXPECT_EQ(a.rank(), 3u);
    EXPECT_EQ(a.dim(1), 3u);
    EXPECT_THROW(NdArray({2, 0}), DimensionError);
    EXPECT_THROW(NdArray({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(NdArray, AtIndexesRowMajor)
{
    NdArray a({2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5});
    EXPECT_EQ(a.at({1, 2}), 5.0);
    EXPECT_EQ(a.at({0, 1}), 1.0);
    EXPECT_EQ(a.reshaped({3, 2}).at({2, 0}), 4.0);
}

TEST(Backward, SumGivesOnes)
{
    Tensor w = Tensor::parameter(NdArray({3}, std::vector<double>{1, -2, 5}));
    Tape tape;
    Tape::Scope s(tape);
    tape.backward(sum(w));
    for (double g : w.grad().storage()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareSum)
{
    Tensor w = Tensor::parameter(NdArray({2}, std::vector<double>{1, 2}));
    Tape tape;
    Tape::Scope s(tape);
    tape.backward(sum(square(w)));
    EXPECT_EQ(w.grad()[0], 2.0);
    EXPECT_EQ(w.grad()[1], 4.0);
}

TEST(Backward, FanOutAccumulates)
{
    Tensor x = Tensor::parameter(NdArray({1}, 3.0));
    Tape tape;
    Tape::Scope s(tape);
    tape.backward(sum(x + x));
    EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Backward, NonScalarLossRejected)
{
    Tensor x = Tensor::parameter(NdArray({2}, 1.0));
    Tape tape;
    Tape::Scope s(tape);
    EXPECT_THROW(tape.backward(x * x), ContractError);
}

TEST(Backward, FrozenUntilReset)
{
    Tensor x = Tensor::parameter(NdArray({2}, 1.0));
    Tape tape;
    Tape::Scope s(tape);
    Tensor loss = sum(square(x));
    tape.backward(loss);
    EXPECT_TRUE(tape.frozen());
    EXPECT_THROW(tape.backward(loss), ContractError);
    tape.reset();
    x.zero_grad();
    tape.backward(sum(scale(x, 3.0)));
    EXPECT_EQ(x.grad()[0], 3.0);
}

TEST(Backward, FreeFunctionNeedsActiveTape)
{
    Tensor x = Tensor::parameter(NdArray({1}, 1.0));
    Tensor loss = sum(x);
    EXPECT_THROW(backward(loss), ContractError);
}

TEST(Tape, NothingRecordedWithoutTape)
{
    Tensor x = Tensor::parameter(NdArray({2}, 1.0));
    Tensor y = square(x);
    EXPECT_DOUBLE_EQ(y.value()[0], 1.0);
    Tape tape;
    EXPECT_EQ(tape.size(), 0u);
    {
        Tape::Scope s(tape);
        Tensor c(NdArray({2}, 1.0));
        Tensor cc = square(c);  // constants only: not recorded
        EXPECT_EQ(tape.size(), 0u);
        Tensor z = square(x);
        EXPECT_EQ(tape.size(), 1u);
    }
}

TEST(Tape, FirstNonFiniteOpNamesTheSource)
{
    Tensor x = Tensor::parameter(NdArray({2}, std::vector<double>{1.0, 800.0}));
    Tape tape;
    Tape::Scope s(tape);
    Tensor y = square(x);
    Tensor e = lsconf::exp(y);  // overflows to inf
    Tensor l = sum(e);
    EXPECT_FALSE(std::isfinite(l.item()));
    EXPECT_EQ(tape.first_non_finite_op(), "exp");
}

TEST(Ops, ReluExamples)
{
    Tensor x = Tensor::parameter(NdArray({3}, std::vector<double>{-1, 0, 2}));
    Tape tape;
    Tape::Scope s(tape);
    Tensor y = relu(x);
    EXPECT_EQ(y.value().storage(), (std::vector<double>{0, 0, 2}));
    tape.backward(sum(y));
    EXPECT_EQ(x.grad().storage(), (std::vector<double>{0, 0, 1}));
}

TEST(Ops, ReluAllNegative)
{
    Tensor x = Tensor::parameter(NdArray({4}, -0.5));
    Tape tape;
    Tape::Scope s(tape);
    Tensor y = relu(x);
    tape.backward(sum(y));
    for (double v : y.value().storage()) EXPECT_EQ(v, 0.0);
    for (double g : x.grad().storage()) EXPECT_EQ(g, 0.0);
}

TEST(Ops, SoftplusStableAndPositive)
{
    Tensor x(NdArray({4}, std::vector<double>{-800.0, 0.0, 3.0, 800.0}));
    const NdArray y = softplus(x).value();
    EXPECT_GE(y[0], 0.0);
    EXPECT_NEAR(y[1], std::log(2.0), 1e-15);
    EXPECT_NEAR(y[2], std::log1p(std::exp(3.0)), 1e-14);
    EXPECT_DOUBLE_EQ(y[3], 800.0);
    EXPECT_TRUE(y.all_finite());
}

TEST(Ops, LogRejectsNonPositive)
{
    Tensor x(NdArray({2}, std::vector<double>{1.0, 0.0}));
    EXPECT_THROW(lsconf::log(x), ContractError);
}

TEST(Ops, ShapeMismatchIsDimensionError)
{
    Tensor a(NdArray({2}, 1.0)), b(NdArray({3}, 1.0));
    EXPECT_THROW(add(a, b), DimensionError);
    EXPECT_THROW(mul(a, b), DimensionError);
    EXPECT_THROW(reshape(a, {3}), DimensionError);
}

TEST(Ops, MeanAndReshapeGradients)
{
    Tensor x = Tensor::parameter(NdArray({2, 2}, std::vector<double>{1, 2, 3, 4}));
    Tape tape;
    Tape::Scope s(tape);
    Tensor m = mean(reshape(x, {4}));
    EXPECT_DOUBLE_EQ(m.item(), 2.5);
    tape.backward(m);
    for (double g : x.grad().storage()) EXPECT_DOUBLE_EQ(g, 0.25);
}

TEST(Determinism, ForwardRepeatable)
{
    Tensor x(NdArray({3}, std::vector<double>{0.1, -0.7, 2.3}));
    const auto a = softplus(square(x)).value();
    const auto b = softplus(square(x)).value();
    EXPECT_EQ(a, b);
}

TEST(Ops, ReluPropagatesNaN)
{
    Tensor x(NdArray({2}, std::vector<double>{std::nan(""), -1.0}));
    const NdArray y = relu(x).value();
    EXPECT_TRUE(std::isnan(y[0]));
    EXPECT_EQ(y[1], 0.0);
}
