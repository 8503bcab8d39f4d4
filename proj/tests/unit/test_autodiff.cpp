#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "invdec/ad_ops.hpp"
#include "invdec/autodiff.hpp"
#include "invdec/error.hpp"
#include "invdec/gradcheck.hpp"
#include "invdec/tensor_ops.hpp"
#include "test_util.hpp"

using invdec::Parameter;
using invdec::ParameterStore;
using invdec::Tape;
using invdec::Tensor;
using invdec::Var;
namespace ad = invdec::ad;

namespace {

using LossFn = std::function<Var(Tape&, ParameterStore&)>;

/// Contracts a non-scalar output against fixed random weights so that
/// every output element carries a distinct adjoint.
Var contract(const Var& out, std::uint64_t seed = 77) {
  std::mt19937_64 rng(seed);
  Var w = out.tape().constant(testutil::random_tensor(out.shape(), rng));
  return ad::sum(ad::mul(out, w));
}

double evaluate(ParameterStore& store, const LossFn& loss) {
  Tape tape;
  return loss(tape, store).value().item();
}

/// Largest relative error between backward() and central differences over
/// every parameter in `store`.
double grad_error(ParameterStore& store, const LossFn& loss) {
  store.zero_grads();
  Tape tape;
  tape.backward(loss(tape, store));
  double worst = 0.0;
  for (auto& p : store) {
    Tensor numeric = invdec::finite_diff_grad([&] { return evaluate(store, loss); }, p);
    worst = std::max(worst, invdec::max_grad_rel_error(p.grad, numeric));
  }
  return worst;
}

struct GradCase {
  const char* name;
  std::vector<std::pair<std::string, invdec::Shape>> params;
  LossFn loss;
  double scale = 1.0;
};

Var P(Tape& t, ParameterStore& s, const char* name) { return t.param(*s.find(name)); }

std::vector<GradCase> grad_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"add", {{"a", {2, 3}}, {"b", {2, 3}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::add(P(t, s, "a"), P(t, s, "b"))); }});
  cases.push_back({"sub", {{"a", {2, 3}}, {"b", {2, 3}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::sub(P(t, s, "a"), P(t, s, "b"))); }});
  cases.push_back({"mul", {{"a", {4}}, {"b", {4}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::mul(P(t, s, "a"), P(t, s, "b"))); }});
  cases.push_back({"scale", {{"a", {3, 2}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::scale(P(t, s, "a"), -1.7)); }});
  cases.push_back({"mul_scalar", {{"a", {2, 2, 2}}, {"s", {1}}},
                   [](Tape& t, ParameterStore& s) {
                     return contract(ad::mul_scalar(P(t, s, "a"), P(t, s, "s")));
                   }});
  cases.push_back({"mean", {{"a", {3, 4}}},
                   [](Tape& t, ParameterStore& s) {
                     Var a = P(t, s, "a");
                     return ad::mean(ad::mul(a, a));
                   }});
  cases.push_back({"mse", {{"a", {3, 4}}, {"b", {3, 4}}},
                   [](Tape& t, ParameterStore& s) { return ad::mse(P(t, s, "a"), P(t, s, "b")); }});
  cases.push_back({"add_trailing", {{"a", {2, 3, 4}}, {"b", {3, 4}}},
                   [](Tape& t, ParameterStore& s) {
                     return contract(ad::add_trailing(P(t, s, "a"), P(t, s, "b")));
                   }});
  cases.push_back({"matmul", {{"a", {3, 4}}, {"b", {4, 2}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::matmul(P(t, s, "a"), P(t, s, "b"))); }});
  cases.push_back({"linear", {{"x", {2, 3, 4}}, {"w", {4, 5}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::linear(P(t, s, "x"), P(t, s, "w"))); }});
  cases.push_back({"linear_t", {{"x", {3, 4}}, {"w", {5, 4}}},
                   [](Tape& t, ParameterStore& s) {
                     return contract(ad::linear_t(P(t, s, "x"), P(t, s, "w")));
                   }});
  cases.push_back({"softmax_rows", {{"a", {3, 5}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::softmax_rows(P(t, s, "a"))); }});
  cases.push_back({"layer_norm", {{"a", {3, 6}}, {"g", {6}}, {"b", {6}}},
                   [](Tape& t, ParameterStore& s) {
                     return contract(ad::layer_norm(P(t, s, "a"), P(t, s, "g"), P(t, s, "b")));
                   }});
  cases.push_back({"gelu", {{"a", {10}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::gelu(P(t, s, "a"))); }, 2.0});
  cases.push_back({"sigmoid", {{"a", {6}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::sigmoid(P(t, s, "a"))); }, 2.0});
  cases.push_back({"dropout", {{"a", {4, 5}}},
                   [](Tape& t, ParameterStore& s) {
                     std::mt19937_64 rng(5);
                     return contract(ad::dropout(P(t, s, "a"), 0.4, true, rng));
                   }});
  cases.push_back({"reshape", {{"a", {2, 6}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::reshape(P(t, s, "a"), {3, 4})); }});
  cases.push_back({"transpose_last2", {{"a", {2, 3, 4}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::transpose_last2(P(t, s, "a"))); }});
  cases.push_back({"mean_over_tokens", {{"a", {2, 3, 4}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::mean_over_tokens(P(t, s, "a"))); }});
  cases.push_back({"repeat_tokens", {{"a", {2, 4}}},
                   [](Tape& t, ParameterStore& s) { return contract(ad::repeat_tokens(P(t, s, "a"), 3)); }});
  cases.push_back({"attention", {{"q", {2, 3, 4}}, {"k", {2, 3, 4}}, {"v", {2, 3, 4}}},
                   [](Tape& t, ParameterStore& s) {
                     return contract(ad::attention(P(t, s, "q"), P(t, s, "k"), P(t, s, "v"), 2).output);
                   }});
  return cases;
}

}  // namespace

TEST(Parameter, GradMirrorsValueShape) {
  Parameter p("w", Tensor({2, 3}, 1.5));
  EXPECT_EQ(p.grad.shape(), p.value.shape());
  for (double g : p.grad.values()) EXPECT_EQ(g, 0.0);
  p.grad[0] = 3.0;
  p.zero_grad();
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(ParameterStore, DuplicateNameRejected) {
  ParameterStore s;
  s.add("w", Tensor({1}));
  EXPECT_THROW(s.add("w", Tensor({1})), invdec::ConfigError);
}

TEST(ParameterStore, FindAndZeroGrads) {
  ParameterStore s;
  auto id = s.add("enc.w", Tensor({2, 2}));
  s.add("b", Tensor({3}));
  EXPECT_EQ(s.find("enc.w"), &s[id]);
  EXPECT_EQ(s.find("missing"), nullptr);
  EXPECT_EQ(s.total_elements(), 7u);
  for (auto& p : s) p.grad = Tensor(p.value.shape(), 2.0);
  s.zero_grads();
  for (const auto& p : s)
    for (double g : p.grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, LinearMapGradientIsOuterProduct) {
  ParameterStore s;
  auto w = s.add("W", Tensor({3, 2}, 0.5));
  Tape t;
  Var x = t.constant(Tensor::matrix({{1, -2, 4}}));
  t.backward(ad::sum(ad::linear(x, t.param(s[w]))));
  EXPECT_EQ(s[w].grad, Tensor::matrix({{1, 1}, {-2, -2}, {4, 4}}));
}

TEST(Backward, SoftmaxMseMatchesFiniteDifferences) {
  ParameterStore s;
  std::mt19937_64 rng(4);
  s.add("W", testutil::random_tensor({3, 4}, rng));
  Tensor target = invdec::ops::softmax_rows(testutil::random_tensor({3, 4}, rng));
  LossFn loss = [&](Tape& t, ParameterStore& st) {
    return ad::mse(ad::softmax_rows(P(t, st, "W")), t.constant(target));
  };
  EXPECT_LT(grad_error(s, loss), 1e-4);
}

TEST(Backward, ReusedParameterSumsPaths) {
  ParameterStore s;
  auto w = s.add("w", Tensor::vector({0.3, -1.2, 2.0}));
  LossFn loss = [](Tape& t, ParameterStore& st) {
    Var a = P(t, st, "w");
    Var b = P(t, st, "w");
    return ad::sum(ad::add(ad::mul(a, a), ad::scale(b, 3.0)));
  };
  EXPECT_LT(grad_error(s, loss), 1e-4);
  const Tensor& g = s[w].grad;
  EXPECT_NEAR(g[0], 2 * 0.3 + 3.0, 1e-12);
  EXPECT_NEAR(g[1], 2 * -1.2 + 3.0, 1e-12);
  EXPECT_NEAR(g[2], 2 * 2.0 + 3.0, 1e-12);
}

TEST(Backward, AccumulatesAcrossCallsUntilZeroed) {
  ParameterStore s;
  auto w = s.add("w", Tensor::vector({1.0, 2.0}));
  for (int i = 0; i < 2; ++i) {
    Tape t;
    t.backward(ad::sum(t.param(s[w])));
  }
  EXPECT_EQ(s[w].grad, Tensor::vector({2.0, 2.0}));
  s.zero_grads();
  EXPECT_EQ(s[w].grad, Tensor::vector({0.0, 0.0}));
}

TEST(Backward, NonScalarLossRejected) {
  ParameterStore s;
  auto w = s.add("w", Tensor({2}));
  Tape t;
  EXPECT_THROW(t.backward(ad::scale(t.param(s[w]), 2.0)), invdec::UsageError);
}

TEST(Backward, ForeignTapeRejected) {
  Tape a, b;
  Var x = a.constant(Tensor::scalar(1.0));
  EXPECT_THROW(b.backward(x), invdec::UsageError);
  EXPECT_THROW(ad::add(x, b.constant(Tensor::scalar(1.0))), invdec::UsageError);
}

TEST(Backward, ReplayVisitsEachNodeOnceInReverseOrder) {
  ParameterStore s;
  std::mt19937_64 rng(12);
  auto w1 = s.add("w1", testutil::random_tensor({4, 6}, rng));
  auto w2 = s.add("w2", testutil::random_tensor({6, 2}, rng));
  Tape t;
  Var x = t.constant(testutil::random_tensor({5, 4}, rng));
  Var h = ad::gelu(ad::linear(x, t.param(s[w1])));
  Var y = ad::linear(h, t.param(s[w2]));
  Var loss = ad::add(ad::mean(ad::mul(y, y)), ad::sum(h));
  t.backward(loss);
  const auto& order = t.last_replay();
  ASSERT_FALSE(order.empty());
  EXPECT_EQ(order.front(), loss.id());
  for (std::size_t i = 1; i < order.size(); ++i) EXPECT_LT(order[i], order[i - 1]);
}

TEST(Backward, TwoLayerNetworkMatchesFiniteDifferences) {
  ParameterStore s;
  std::mt19937_64 rng(31);
  s.add("w1", testutil::random_tensor({3, 5}, rng));
  s.add("b1", testutil::random_tensor({5}, rng));
  s.add("w2", testutil::random_tensor({5, 2}, rng));
  Tensor x = testutil::random_tensor({4, 3}, rng);
  Tensor y = testutil::random_tensor({4, 2}, rng);
  LossFn loss = [&](Tape& t, ParameterStore& st) {
    Var h = ad::gelu(ad::add_trailing(ad::linear(t.constant(x), P(t, st, "w1")), P(t, st, "b1")));
    return ad::mse(ad::linear(h, P(t, st, "w2")), t.constant(y));
  };
  EXPECT_LT(grad_error(s, loss), 1e-4);
}

TEST(Backward, EveryOpMatchesFiniteDifferences) {
  for (const auto& c : grad_cases()) {
    SCOPED_TRACE(c.name);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      std::mt19937_64 rng(seed * 1000 + 17);
      ParameterStore s;
      for (const auto& [name, shape] : c.params) {
        Tensor v = testutil::random_tensor(shape, rng, c.scale);
        if (name == "g") for (double& e : v.data()) e += 1.0;
        s.add(name, std::move(v));
      }
      EXPECT_LT(grad_error(s, c.loss), 1e-4) << "seed " << seed;
    }
  }
}

TEST(Backward, ConstantsReceiveNoParameterGradient) {
  Tape t;
  Var x = t.constant(Tensor::vector({1, 2}));
  EXPECT_FALSE(x.requires_grad());
  Var y = ad::scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tape, FirstNonFiniteLocatesNode) {
  Tape t;
  t.constant(Tensor::scalar(1.0));
  Var bad = t.constant(Tensor::scalar(std::nan("")));
  EXPECT_EQ(t.first_non_finite(), bad.id());
  Tape clean;
  clean.constant(Tensor::scalar(1.0));
  EXPECT_EQ(clean.first_non_finite(), clean.size());
}

TEST(Attention, WeightsAreRowStochastic) {
  std::mt19937_64 rng(2);
  Tape t;
  auto q = t.constant(testutil::random_tensor({3, 5, 8}, rng, 3.0));
  auto k = t.constant(testutil::random_tensor({3, 5, 8}, rng, 3.0));
  auto v = t.constant(testutil::random_tensor({3, 5, 8}, rng));
  auto r = ad::attention(q, k, v, 4);
  EXPECT_EQ(r.weights.shape(), (invdec::Shape{3, 4, 5, 5}));
  EXPECT_EQ(r.output.shape(), (invdec::Shape{3, 5, 8}));
  for (std::size_t row = 0; row < r.weights.numel() / 5; ++row) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 5; ++j) sum += r.weights[row * 5 + j];
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Attention, SingleTokenReturnsValue) {
  std::mt19937_64 rng(6);
  Tape t;
  Tensor vt = testutil::random_tensor({2, 1, 4}, rng);
  auto q = t.constant(testutil::random_tensor({2, 1, 4}, rng));
  auto r = ad::attention(q, q, t.constant(vt), 2);
  EXPECT_EQ(r.output.value(), vt);
  for (double w : r.weights.values()) EXPECT_EQ(w, 1.0);
}

TEST(Attention, HeadsMustDivideDim) {
  Tape t;
  auto q = t.constant(Tensor({1, 2, 6}));
  EXPECT_THROW(ad::attention(q, q, q, 4), invdec::ConfigError);
}

TEST(FiniteDiff, Quadratic) {
  Parameter p("p", Tensor::vector({1.0, 2.0}));
  Tensor g = invdec::finite_diff_grad(
      [&] { return p.value[0] * p.value[0] + p.value[1] * p.value[1]; }, p);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
  EXPECT_EQ(p.value, Tensor::vector({1.0, 2.0}));
}

TEST(FiniteDiff, LinearGivesOnes) {
  std::mt19937_64 rng(3);
  Parameter p("p", testutil::random_tensor({5}, rng));
  Tensor g = invdec::finite_diff_grad(
      [&] {
        double s = 0.0;
        for (double v : p.value.values()) s += v;
        return s;
      },
      p);
  for (double v : g.values()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(FiniteDiff, RelativeErrorFloor) {
  EXPECT_EQ(invdec::grad_rel_error(1.0, 1.0), 0.0);
  EXPECT_NEAR(invdec::grad_rel_error(1.0, 1.0001), 1e-4 / 1.0001, 1e-15);
  // Both tiny: measured against the absolute floor.
  EXPECT_LT(invdec::grad_rel_error(1e-12, -1e-12), 1e-4);
  EXPECT_GT(invdec::grad_rel_error(1e-6, -1e-6), 1e-4);
}
