#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "trama/checkpoint.hpp"
#include "trama/errors.hpp"
#include "trama/grad_check.hpp"
#include "trama/layers.hpp"
#include "trama/optim.hpp"

using namespace trama;
using namespace trama::nn;

namespace {

Matrix<double> row(std::initializer_list<double> v) {
  Matrix<double> m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(Mlp, IdentityLayerPassesInputThrough) {
  ParamStore<double> ps;
  Rng rng(1);
  auto net = Mlp<double>::create(ps, "m", 2, {{2, Activation::kIdentity}}, rng);
  ps.value(net.weight(0)) = Matrix<double>::Identity(2, 2);
  ps.value(net.bias(0)).setZero();
  Tape<double> t;
  auto y = mlp_forward(t, ps, net, t.constant(row({1, 2})));
  EXPECT_EQ(t.value(y)(0, 0), 1.0);
  EXPECT_EQ(t.value(y)(0, 1), 2.0);
}

TEST(Mlp, ZeroWeightTanhGivesZero) {
  ParamStore<double> ps;
  Rng rng(1);
  auto net = Mlp<double>::create(ps, "m", 3, {{4, Activation::kTanh}}, rng, Init::kZero, Init::kZero);
  Tape<double> t;
  auto y = net.forward(t, ps, t.constant(row({0.3, -7, 2})));
  EXPECT_TRUE(t.value(y).isZero(0.0));
}

TEST(Mlp, TwoLayerMatchesHandRolledMatmul) {
  ParamStore<double> ps;
  Rng rng(7);
  auto net = Mlp<double>::create(ps, "m", 3, {{5, Activation::kRelu}, {2, Activation::kTanh}}, rng);
  const auto x = row({0.5, -1.25, 2.0});
  Tape<double> t;
  auto y = net.forward(t, ps, t.constant(x));

  const auto& w0 = ps.value(net.weight(0));
  const auto& b0 = ps.value(net.bias(0));
  const auto& w1 = ps.value(net.weight(1));
  const auto& b1 = ps.value(net.bias(1));
  double hidden[5];
  for (int j = 0; j < 5; ++j) {
    double acc = b0(0, j);
    for (int i = 0; i < 3; ++i) acc += x(0, i) * w0(i, j);
    hidden[j] = acc > 0 ? acc : 0;
  }
  for (int j = 0; j < 2; ++j) {
    double acc = b1(0, j);
    for (int i = 0; i < 5; ++i) acc += hidden[i] * w1(i, j);
    EXPECT_NEAR(t.value(y)(0, j), std::tanh(acc), 1e-12);
  }
}

TEST(Mlp, WidthMismatchNamesLayer) {
  ParamStore<double> ps;
  Rng rng(1);
  auto net = Mlp<double>::create(ps, "m", 3, {{2, Activation::kRelu}}, rng);
  Tape<double> t;
  try {
    net.forward(t, ps, t.constant(row({1, 2})));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
  }
}

TEST(Gru, ZeroWeightsHalveHidden) {
  ParamStore<double> ps;
  Rng rng(3);
  auto cell = GruCell<double>::create(ps, "g", 2, 3, rng, Init::kZero);
  Tape<double> t;
  auto h = gru_step(t, ps, cell, t.constant(row({4, -1})), t.constant(row({0.2, -0.6, 1.0})));
  EXPECT_DOUBLE_EQ(t.value(h)(0, 0), 0.1);
  EXPECT_DOUBLE_EQ(t.value(h)(0, 1), -0.3);
  EXPECT_DOUBLE_EQ(t.value(h)(0, 2), 0.5);

  Tape<double> t2;
  auto h0 = gru_step(t2, ps, cell, t2.constant(row({0, 0})), t2.constant(row({0, 0, 0})));
  EXPECT_TRUE(t2.value(h0).isZero(0.0));
}

TEST(Gru, ThreeStepsMatchScalarOracle) {
  ParamStore<double> ps;
  Rng rng(11);
  const int in = 2, hid = 3;
  auto cell = GruCell<double>::create(ps, "g", in, hid, rng);
  const auto& wx = ps.value(ps.id("g.wx"));
  const auto& wh = ps.value(ps.id("g.wh"));
  const auto& bx = ps.value(ps.id("g.bx"));
  const auto& bh = ps.value(ps.id("g.bh"));
  const double xs[3][2] = {{0.5, -0.3}, {1.2, 0.1}, {-0.7, 0.9}};

  std::vector<double> h_ref(hid, 0.0);
  Tape<double> t;
  Var h = t.constant(Matrix<double>::Zero(1, hid));
  for (int s = 0; s < 3; ++s) {
    h = cell.step(t, ps, t.constant(row({xs[s][0], xs[s][1]})), h, s);
    std::vector<double> next(hid);
    for (int j = 0; j < hid; ++j) {
      auto gx = [&](int g) {
        double a = bx(0, g * hid + j);
        for (int i = 0; i < in; ++i) a += xs[s][i] * wx(i, g * hid + j);
        return a;
      };
      auto gh = [&](int g) {
        double a = bh(0, g * hid + j);
        for (int i = 0; i < hid; ++i) a += h_ref[i] * wh(i, g * hid + j);
        return a;
      };
      const double r = sigmoid_d(gx(0) + gh(0));
      const double z = sigmoid_d(gx(1) + gh(1));
      const double n = std::tanh(gx(2) + r * gh(2));
      next[j] = (1 - z) * n + z * h_ref[j];
    }
    h_ref = next;
    for (int j = 0; j < hid; ++j) EXPECT_NEAR(t.value(h)(0, j), h_ref[j], 1e-12) << "step " << s;
  }
}

TEST(Gru, NonFiniteInputNamesStep) {
  ParamStore<double> ps;
  Rng rng(3);
  auto cell = GruCell<double>::create(ps, "g", 1, 2, rng);
  Tape<double> t;
  try {
    cell.step(t, ps, t.constant(row({NAN})), t.constant(row({0, 0})), 4);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 4"), std::string::npos);
  }
}

TEST(Gru, HiddenStaysInsideUnitInterval) {
  ParamStore<double> ps;
  Rng rng(5);
  auto cell = GruCell<double>::create(ps, "g", 4, 8, rng);
  for (auto& p : ps) p.value *= 2.0;
  Rng data(9);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix<double> x(1, 4), h(1, 8);
    for (auto& v : x.reshaped()) v = data.uniform(-3, 3);
    for (auto& v : h.reshaped()) v = data.uniform(-0.999, 0.999);
    Tape<double> t;
    auto out = cell.step(t, ps, t.constant(x), t.constant(h));
    EXPECT_LT(t.value(out).cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(GradCheck, QuadraticIsExact) {
  ParamStore<double> ps;
  auto w = ps.add("w", row({1, -2}));
  auto loss = [&](Tape<double>& t) { return weighted_sum_sq(t, t.param(ps, w), {1.0}); };
  Tape<double> t;
  t.backward(loss(t));
  EXPECT_DOUBLE_EQ(ps.at(w).grad(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(ps.at(w).grad(0, 1), -4.0);
  ps.zero_grad();
  EXPECT_LT(grad_check(ps, loss), 1e-8);
}

TEST(GradCheck, SoftmaxCrossEntropy) {
  ParamStore<double> ps;
  Rng rng(2);
  Matrix<double> logits(4, 3);
  for (auto& v : logits.reshaped()) v = rng.normal();
  auto l = ps.add("logits", logits);
  auto loss = [&](Tape<double>& t) {
    return softmax_cross_entropy(t, t.param(ps, l), {0, 2, 1, 2}, {1.0, 0.5, 2.0, 1.0});
  };
  EXPECT_LT(grad_check(ps, loss), 1e-6);
}

TEST(GradCheck, EveryOpThroughOneGraph) {
  ParamStore<double> ps;
  Rng rng(4);
  auto mlp = Mlp<double>::create(ps, "m", 3, {{6, Activation::kTanh}, {4, Activation::kSigmoid}}, rng);
  auto cell = GruCell<double>::create(ps, "g", 4, 4, rng);
  Matrix<double> table(5, 4);
  for (auto& v : table.reshaped()) v = rng.normal();
  auto tab = ps.add("table", table);
  Matrix<double> wq(2, 8);
  for (auto& v : wq.reshaped()) v = rng.normal();
  auto wqid = ps.add("wq", wq);
  Matrix<double> x(2, 3);
  for (auto& v : x.reshaped()) v = rng.normal();

  auto loss = [&](Tape<double>& t) {
    Var h = mlp.forward(t, ps, t.constant(x));
    Var rows = gather_rows(t, t.param(ps, tab), {1, 3});
    Var h2 = cell.step(t, ps, h, tanh(t, rows));
    Var e = elu(t, sub(t, h2, scale(t, rows, 0.3)));
    Var a = abs(t, t.param(ps, wqid));
    Var parts[2] = {e, relu(t, h)};
    Var cat = concat_cols(t, std::span<const Var>(parts, 2));
    Var q = slice_cols(t, cat, 2, 2);
    Var bil = rowwise_bilinear(t, q, reshape(t, slice_cols(t, a, 0, 8), 2, 8));
    Var g = gather_cols(t, bil, {3, 0});
    Var s = add(t, sum(t, mul(t, g, g)), row_sum(t, reshape(t, bil, 1, 8)));
    return add(t, s, weighted_sum_sq(t, h2, {0.7, 1.3}));
  };
  EXPECT_LT(grad_check(ps, loss), 1e-6);
}

TEST(GradCheck, StopGradientAndDiscreteAreReplayed) {
  ParamStore<double> ps;
  auto w = ps.add("w", row({0.3, -0.8, 1.1}));
  auto loss = [&](Tape<double>& t) {
    Var v = t.param(ps, w);
    auto pick = t.discrete(masked_argmax_rows<double>(t.value(v), nullptr));
    Var chosen = gather_cols(t, v, pick);
    Var held = stop_gradient(t, v);
    return add(t, sum(t, mul(t, chosen, chosen)), sum(t, mul(t, held, v)));
  };
  EXPECT_LT(grad_check(ps, loss), 1e-8);
}

TEST(Tape, GradientAccumulationIsAdditive) {
  ParamStore<double> ps;
  Rng rng(8);
  auto net = Mlp<double>::create(ps, "m", 2, {{3, Activation::kTanh}, {1, Activation::kIdentity}}, rng);
  const auto x = row({0.4, -0.9});
  auto l1 = [&](Tape<double>& t) { return sum(t, net.forward(t, ps, t.constant(x))); };
  auto l2 = [&](Tape<double>& t) {
    Var y = net.forward(t, ps, t.constant(x));
    return sum(t, mul(t, y, y));
  };
  {
    Tape<double> t;
    t.backward(add(t, l1(t), l2(t)));
  }
  std::vector<Matrix<double>> joint;
  for (auto& p : ps) joint.push_back(p.grad);
  ps.zero_grad();
  {
    Tape<double> t;
    t.backward(l2(t));
  }
  {
    Tape<double> t;
    t.backward(l1(t));
  }
  std::size_t i = 0;
  for (auto& p : ps) EXPECT_LT((p.grad - joint[i++]).cwiseAbs().maxCoeff(), 1e-12) << p.name;
}

TEST(Adam, SingleStepFromZero) {
  ParamStore<double> ps;
  auto w = ps.add("w", row({0}));
  ps.at(w).grad = row({1});
  ps.mark_grads_populated();
  adam_step(ps, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  EXPECT_NEAR(ps.value(w)(0, 0), -0.1, 1e-8);
  EXPECT_EQ(ps.step_count(), 1);
  EXPECT_EQ(ps.at(w).grad(0, 0), 0.0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore<double> ps;
  auto w = ps.add("w", row({0.5, -3}));
  ps.at(w).grad.setZero();
  ps.mark_grads_populated();
  adam_step(ps, AdamConfig{});
  EXPECT_EQ(ps.value(w)(0, 0), 0.5);
  EXPECT_EQ(ps.value(w)(0, 1), -3.0);
}

TEST(Adam, TwoStepTrace) {
  ParamStore<double> ps;
  auto w = ps.add("w", row({0}));
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0, ref = 0;
  for (int s = 1; s <= 2; ++s) {
    ps.at(w).grad = row({1});
    ps.mark_grads_populated();
    adam_step(ps, AdamConfig{lr, b1, b2, eps});
    m = b1 * m + (1 - b1);
    v = b2 * v + (1 - b2);
    ref -= lr * (m / (1 - std::pow(b1, s))) / (std::sqrt(v / (1 - std::pow(b2, s))) + eps);
  }
  EXPECT_NEAR(ps.value(w)(0, 0), ref, 1e-12);
  EXPECT_NEAR(ref, -0.2, 1e-6);
}

TEST(Adam, RequiresPopulatedGradients) {
  ParamStore<float> ps;
  ps.add("w", Matrix<float>::Zero(1, 1));
  EXPECT_THROW(adam_step(ps, AdamConfig{}), PreconditionError);
}

TEST(Adam, ClipScalesJointNorm) {
  ParamStore<double> ps;
  auto a = ps.add("a.w", row({0}));
  auto b = ps.add("b.w", row({0, 0}));
  ps.at(a).grad = row({3});
  ps.at(b).grad = row({0, 4});
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0, {"a.", "b."}), 5.0);
  EXPECT_NEAR(ps.at(a).grad(0, 0), 0.6, 1e-12);
  EXPECT_NEAR(ps.at(b).grad(0, 1), 0.8, 1e-12);
}

TEST(Checkpoint, RoundTripAndVersionCheck) {
  ParamStore<float> ps;
  Rng rng(1);
  Mlp<float>::create(ps, "m", 3, {{2, Activation::kRelu}}, rng);
  ps.set_step_count(17);
  for (auto& p : ps) p.adam_m.setConstant(0.25f);
  Archive ar;
  put_params(ar, "net", ps);
  ar.put_string("note", "hello");
  std::stringstream buf;
  ar.write(buf);

  auto back = Archive::read(buf);
  ParamStore<float> ps2;
  Rng rng2(99);
  Mlp<float>::create(ps2, "m", 3, {{2, Activation::kRelu}}, rng2);
  get_params(back, "net", ps2);
  EXPECT_EQ(ps2.step_count(), 17);
  EXPECT_EQ(back.string("note"), "hello");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_EQ(ps.at(i).value, ps2.at(i).value);
    EXPECT_EQ(ps2.at(i).adam_m(0, 0), 0.25f);
  }

  std::string bytes = buf.str();
  bytes[0] = static_cast<char>(Archive::kVersion + 1);
  std::stringstream bad(bytes);
  EXPECT_THROW(Archive::read(bad), VersionError);
}

TEST(Rng, ReproducibleAndSplittable) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(42);
  auto s1 = c.split(1);
  auto s2 = c.split(2);
  EXPECT_NE(s1.next_u64(), s2.next_u64());
  EXPECT_EQ(c.next_u64(), Rng(42).next_u64());
  double mean = 0;
  for (int i = 0; i < 20000; ++i) mean += c.uniform();
  EXPECT_NEAR(mean / 20000, 0.5, 0.01);
}
