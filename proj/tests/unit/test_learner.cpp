#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "chartsample/dataset.hpp"
#include "chartsample/errors.hpp"
#include "chartsample/image.hpp"
#include "chartsample/learner.hpp"
#include "chartsample/random.hpp"
#include "chartsample/sampler.hpp"
#include "chartsample/simd/kernels.hpp"

#include "test_util.hpp"

namespace cs = chartsample;
using namespace cs::learner;
using cs::simd::Isa;

namespace {

struct Data {
  LabeledImages train, validation, test;
};

/// IID ratio dataset rendered in memory.
Data make_data(std::size_t n_train, std::size_t n_val, std::size_t n_test, std::uint64_t seed) {
  const auto domain = cs::domain::ratio_bin_domain(cs::domain::enumerate_pairs(false));
  const auto split = cs::sampling::split_holdout(domain, seed);
  const auto plan = cs::sampling::sample_iid(domain, split, 28, seed);
  cs::dataset::DatasetSpec spec;
  spec.roles = cs::dataset::roles_from_plan(plan, n_train, n_val, n_test);
  spec.master_seed = seed;
  const auto rendered = cs::dataset::render_dataset(spec, 4);
  Data d;
  for (std::size_t i = 0; i < rendered.records.size(); ++i) {
    const auto& r = rendered.records[i];
    auto& set = r.role == cs::stimulus::SplitRole::Train        ? d.train
                : r.role == cs::stimulus::SplitRole::Validation ? d.validation
                                                               : d.test;
    set.images.push_back(cs::decode_png(rendered.png[i]));
    set.labels.push_back(r.truth);
  }
  return d;
}

LearnerConfig small_config(std::size_t hidden = 16, std::size_t epochs = 2) {
  LearnerConfig c;
  c.hidden_units = hidden;
  c.max_epochs = epochs;
  c.seed = 5;
  return c;
}

template <typename T>
std::vector<T> random_vector(cs::Rng& rng, std::size_t n) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(2.0 * rng.unit() - 1.0);
  return v;
}

template <typename T>
void expect_kernels_equivalent(double tol) {
  if (!cs::simd::isa_available(Isa::Avx2)) GTEST_SKIP() << "AVX2 not available";
  const auto& s = cs::simd::kernels<T>(Isa::Scalar);
  const auto& v = cs::simd::kernels<T>(Isa::Avx2);
  cs::Rng rng(11);
  for (std::size_t n : {0, 1, 3, 7, 8, 9, 15, 16, 17, 31, 33, 64, 100, 255, 256, 1001}) {
    const auto a = random_vector<T>(rng, n), b = random_vector<T>(rng, n);
    EXPECT_NEAR(s.dot(a.data(), b.data(), n), v.dot(a.data(), b.data(), n), tol * (1.0 + n)) << n;

    std::vector<std::vector<T>> xs;
    for (int k = 0; k < 4; ++k) xs.push_back(random_vector<T>(rng, n));
    const T* ptrs[4] = {xs[0].data(), xs[1].data(), xs[2].data(), xs[3].data()};
    T out_s[4], out_v[4];
    s.dot4(a.data(), ptrs, n, out_s);
    v.dot4(a.data(), ptrs, n, out_v);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(out_s[k], out_v[k], tol * (1.0 + n));

    auto ys = b, yv = b;
    s.axpy(T(0.37), a.data(), ys.data(), n);
    v.axpy(T(0.37), a.data(), yv.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(ys[i], yv[i], tol);

    const T alpha[4] = {T(0.1), T(-0.7), T(1.3), T(0.05)};
    ys = b, yv = b;
    s.axpy4(alpha, ptrs, ys.data(), n);
    v.axpy4(alpha, ptrs, yv.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(ys[i], yv[i], tol * 4);

    auto ws = a, wv = a, vs = b, vv = b;
    const auto g = random_vector<T>(rng, n);
    s.nesterov(ws.data(), vs.data(), g.data(), T(0.01), T(0.9), n);
    v.nesterov(wv.data(), vv.data(), g.data(), T(0.01), T(0.9), n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(ws[i], wv[i], tol);
      EXPECT_NEAR(vs[i], vv[i], tol);
    }

    std::vector<std::uint8_t> px(n);
    for (auto& p : px) p = static_cast<std::uint8_t>(rng.below(256));
    std::vector<T> us(n), uv(n);
    s.unit_scale_u8(px.data(), us.data(), n);
    v.unit_scale_u8(px.data(), uv.data(), n);
    EXPECT_EQ(us, uv);
  }
}

}  // namespace

TEST(Simd, Avx2MatchesScalarFloat) { expect_kernels_equivalent<float>(2e-6); }
TEST(Simd, Avx2MatchesScalarDouble) { expect_kernels_equivalent<double>(1e-13); }

TEST(Simd, ScalarNesterovFormula) {
  const auto& k = cs::simd::kernels<double>(Isa::Scalar);
  double w = 1.0, v = 0.5;
  const double g = 2.0;
  k.nesterov(&w, &v, &g, 0.1, 0.9, 1);
  EXPECT_DOUBLE_EQ(v, 0.9 * 0.5 - 0.1 * 2.0);
  EXPECT_DOUBLE_EQ(w, 1.0 + 0.9 * v - 0.1 * 2.0);
}

TEST(Simd, ActiveIsaIsAvailable) { EXPECT_TRUE(cs::simd::isa_available(cs::simd::active_isa())); }

TEST(Featurize, ConstantAndSinglePixelImages) {
  const auto white = featurize(cs::GrayImage(100, 100, 255));
  ASSERT_EQ(white.size(), 10000u);
  for (float x : white) EXPECT_EQ(x, 1.0f);
  for (float x : featurize(cs::GrayImage(100, 100, 0))) EXPECT_EQ(x, 0.0f);
  cs::GrayImage one(100, 100, 255);
  one.at(0, 0) = 0;
  const auto f = featurize(one);
  EXPECT_EQ(f[0], 0.0f);
  EXPECT_EQ(std::count(f.begin(), f.end(), 0.0f), 1);
  EXPECT_THROW(featurize(cs::GrayImage(50, 100, 255)), cs::ArgumentError);
}

TEST(Gradient, FiniteDifferencesTinyNetwork) {
  cs::Rng rng(1);
  std::vector<std::vector<double>> xs(3);
  for (auto& x : xs) x = random_vector<double>(rng, 7);
  const std::vector<double> ys{0.2, 0.5, 0.9};
  for (auto act : {Activation::Relu, Activation::Linear}) {
    LearnerConfig c;
    c.hidden_units = 2;
    c.activation = act;
    c.seed = 3;
    const auto r = gradient_check(c, xs, ys);
    EXPECT_LT(r.max_relative_deviation, 1e-4);
  }
}

TEST(Gradient, ZeroNetworkZeroLabelsHasZeroOutputBiasGradient) {
  auto p = Parameters<double>::zeros(5, 3);
  const std::vector<double> x(5, 0.5);
  const double* ptr = x.data();
  const std::vector<double> y{0.0};
  Parameters<double> g;
  const double loss = batch_gradient<double>(p, Activation::Relu, std::span(&ptr, 1), y, {}, g);
  EXPECT_EQ(loss, 0.0);
  EXPECT_EQ(g.b2, 0.0);
}

TEST(Gradient, LinearVariantMatchesClosedForm) {
  cs::Rng rng(9);
  const std::size_t D = 6, H = 3, N = 4;
  auto p = initialize<double>(D, H, 4);
  for (auto& b : p.b1) b = 2.0 * rng.unit() - 1.0;
  p.b2 = 0.3;
  std::vector<std::vector<double>> xs(N);
  for (auto& x : xs) x = random_vector<double>(rng, D);
  std::vector<double> ys(N);
  for (auto& y : ys) y = rng.unit();
  std::vector<const double*> ptrs;
  for (const auto& x : xs) ptrs.push_back(x.data());

  Parameters<double> g;
  batch_gradient<double>(p, Activation::Linear, ptrs, ys, {}, g);

  // Closed form: L = (1/N) sum_n r_n^2, r_n = w2.(W1^T x_n + b1) + b2 - y_n.
  std::vector<double> r(N);
  std::vector<std::vector<double>> hidden(N, std::vector<double>(H));
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t j = 0; j < H; ++j) {
      double s = p.b1[j];
      for (std::size_t i = 0; i < D; ++i) s += p.w1[i * H + j] * xs[n][i];
      hidden[n][j] = s;
    }
    double out = p.b2;
    for (std::size_t j = 0; j < H; ++j) out += p.w2[j] * hidden[n][j];
    r[n] = out - ys[n];
  }
  const double c = 2.0 / N;
  double gb2 = 0;
  for (double rn : r) gb2 += c * rn;
  EXPECT_NEAR(g.b2, gb2, 1e-10);
  for (std::size_t j = 0; j < H; ++j) {
    double gw2 = 0, gb1 = 0;
    for (std::size_t n = 0; n < N; ++n) {
      gw2 += c * r[n] * hidden[n][j];
      gb1 += c * r[n] * p.w2[j];
    }
    EXPECT_NEAR(g.w2[j], gw2, 1e-10);
    EXPECT_NEAR(g.b1[j], gb1, 1e-10);
    for (std::size_t i = 0; i < D; ++i) {
      double gw1 = 0;
      for (std::size_t n = 0; n < N; ++n) gw1 += c * r[n] * p.w2[j] * xs[n][i];
      EXPECT_NEAR(g.w1[i * H + j], gw1, 1e-10);
    }
  }
}

TEST(Learner, ConfigValidation) {
  LearnerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), cs::ArgumentError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), cs::ArgumentError);
  c = {};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), cs::ArgumentError);
}

TEST(Learner, ConfigJsonRoundTrip) {
  LearnerConfig c = small_config(32, 7);
  c.backend = Backend::Dense;
  c.activation = Activation::Linear;
  const auto back = learner_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Learner, InitializationRange) {
  const auto p = initialize<float>(10000, 8, 1);
  const float limit = 1.0f / 100.0f;
  for (float w : p.w1) EXPECT_LE(std::abs(w), limit);
  for (float b : p.b1) EXPECT_EQ(b, 0.0f);
  EXPECT_EQ(p, initialize<float>(10000, 8, 1));
  EXPECT_NE(p, initialize<float>(10000, 8, 2));
}

TEST(Learner, ZeroLearningRateLeavesWeightsUnchanged) {
  const auto d = make_data(64, 16, 0, 3);
  auto c = small_config(16, 1);
  c.learning_rate = 0.0;
  const auto model = train(c, d.train, d.validation);
  EXPECT_EQ(model.params, initialize<float>(kInputSize, 16, cs::derive_seed(c.seed, "init")));
}

TEST(Learner, SeedDeterministic) {
  const auto d = make_data(96, 32, 0, 4);
  const auto a = train(small_config(), d.train, d.validation);
  const auto b = train(small_config(), d.train, d.validation);
  EXPECT_EQ(a.params, b.params);
  auto other = small_config();
  other.seed = 6;
  EXPECT_NE(train(other, d.train, d.validation).params, a.params);
}

TEST(Learner, DenseAndSparseBackendsAgree) {
  const auto d = make_data(96, 32, 32, 5);
  auto c = small_config(16, 2);
  c.restore_best_weights = false;
  c.backend = Backend::Dense;
  const auto dense = train(c, d.train, d.validation);
  c.backend = Backend::SparseComplement;
  const auto sparse = train(c, d.train, d.validation);
  for (std::size_t e = 0; e < dense.history.size(); ++e) {
    EXPECT_NEAR(dense.history[e].train_loss, sparse.history[e].train_loss, 1e-4);
    EXPECT_NEAR(dense.history[e].validation_loss, sparse.history[e].validation_loss, 1e-4);
  }
  const auto yd = predict_batch(dense, d.test.images);
  const auto ys = predict_batch(sparse, d.test.images);
  for (std::size_t i = 0; i < yd.size(); ++i) EXPECT_NEAR(yd[i], ys[i], 1e-4);
  double max_w = 0;
  for (std::size_t i = 0; i < dense.params.w1.size(); ++i) {
    max_w = std::max(max_w, static_cast<double>(std::abs(dense.params.w1[i] - sparse.params.w1[i])));
  }
  EXPECT_LT(max_w, 1e-5);
}

TEST(Learner, SparseInferenceMatchesReferenceForward) {
  const auto d = make_data(32, 8, 8, 6);
  const auto model = train(small_config(8, 1), d.train, d.validation);
  Parameters<double> p64 = Parameters<double>::zeros(model.params.inputs, model.params.hidden);
  for (std::size_t k = 0; k < p64.size(); ++k) p64.flat(k) = model.params.flat(k);
  const auto yhat = predict_batch(model, d.test.images);
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    const auto xf = featurize(d.test.images[i]);
    const std::vector<double> x(xf.begin(), xf.end());
    const double ref = std::clamp(forward<double>(p64, model.config.activation, x), 0.0, 1.0);
    EXPECT_NEAR(yhat[i], ref, 1e-5);
  }
}

TEST(Learner, TrainingLossDecreases) {
  const auto d = make_data(200, 50, 0, 7);
  auto c = small_config(64, 5);
  const auto model = train(c, d.train, d.validation);
  TrainedModel initial;
  initial.params = initialize<float>(kInputSize, 64, cs::derive_seed(c.seed, "init"));
  initial.config = c;
  EXPECT_LT(evaluate_mse(model, d.train), evaluate_mse(initial, d.train));
}

TEST(Learner, StrictlyImprovingValidationRunsAllEpochs) {
  const auto d = make_data(128, 64, 0, 8);
  auto c = small_config(16, 12);
  c.dropout_rate = 0.0;
  c.learning_rate = 2e-5;
  c.early_stop_patience = 10;
  const auto model = train(c, d.train, d.validation);
  for (std::size_t e = 1; e < model.history.size(); ++e) {
    ASSERT_LT(model.history[e].validation_loss, model.history[e - 1].validation_loss) << "epoch " << e + 1;
  }
  EXPECT_EQ(model.stopped_epoch, c.max_epochs);
  EXPECT_EQ(model.best_epoch, c.max_epochs);
}

TEST(Learner, EarlyStoppingInvariant) {
  const auto d = make_data(96, 32, 0, 9);
  for (double lr : {1e-2, 3e-3}) {
    auto c = small_config(16, 40);
    c.learning_rate = lr;
    c.early_stop_patience = 2;
    const auto model = train(c, d.train, d.validation);
    EXPECT_EQ(model.history.size(), model.stopped_epoch);
    EXPECT_LE(model.stopped_epoch, c.max_epochs);
    EXPECT_LE(model.stopped_epoch - model.best_epoch, c.early_stop_patience);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& h : model.history) best = std::min(best, h.validation_loss);
    EXPECT_EQ(model.best_validation_loss, best);
    EXPECT_EQ(model.history[model.best_epoch - 1].validation_loss, best);
    // Restored weights reproduce the best validation loss.
    EXPECT_NEAR(evaluate_mse(model, d.validation), best, 1e-6);
  }
}

TEST(Learner, DivergenceReportsEpochAndBatch) {
  const auto d = make_data(64, 16, 0, 10);
  auto c = small_config(16, 3);
  c.learning_rate = 1e6;
  try {
    train(c, d.train, d.validation);
    FAIL() << "expected divergence";
  } catch (const cs::TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Learner, RejectsInvalidInputs) {
  const auto d = make_data(8, 4, 0, 11);
  EXPECT_THROW(train(small_config(), LabeledImages{}, d.validation), cs::ArgumentError);
  auto bad = d.train;
  bad.labels[0] = 1.5;
  EXPECT_THROW(train(small_config(), bad, d.validation), cs::ArgumentError);
}

TEST(Learner, PredictionsAreClampedAndDeterministic) {
  const auto d = make_data(32, 8, 8, 12);
  auto model = train(small_config(8, 1), d.train, d.validation);
  const auto a = predict_batch(model, d.test.images);
  EXPECT_EQ(a, predict_batch(model, d.test.images));
  for (double y : a) {
    EXPECT_GE(y, 0.0);
    EXPECT_LE(y, 1.0);
  }
  model.params.b2 = 50.0f;
  for (double y : predict_batch(model, d.test.images)) EXPECT_EQ(y, 1.0);
  model.params.b2 = -50.0f;
  EXPECT_EQ(predict(model, d.test.images[0]), 0.0);
}

TEST(Learner, SaveLoadRoundTrip) {
  cs::test::TempDir tmp;
  const auto d = make_data(32, 8, 8, 13);
  const auto model = train(small_config(8, 2), d.train, d.validation);
  save_model(model, tmp.path() / "m.bin");
  const auto back = load_model(tmp.path() / "m.bin");
  EXPECT_EQ(back.params, model.params);
  EXPECT_EQ(to_json(back.config), to_json(model.config));
  EXPECT_EQ(back.stopped_epoch, model.stopped_epoch);
  EXPECT_EQ(back.best_epoch, model.best_epoch);
  ASSERT_EQ(back.history.size(), model.history.size());
  for (std::size_t e = 0; e < back.history.size(); ++e) {
    EXPECT_EQ(back.history[e].validation_loss, model.history[e].validation_loss);
  }
  EXPECT_EQ(predict_batch(back, d.test.images), predict_batch(model, d.test.images));

  auto bytes = cs::read_file(tmp.path() / "m.bin");
  bytes[0] = 'X';
  cs::write_file(tmp.path() / "bad.bin", bytes);
  EXPECT_THROW(load_model(tmp.path() / "bad.bin"), cs::IoError);
}

TEST(Learner, BeatsConstantBaselineInDistribution) {
  const auto d = make_data(2000, 300, 500, 14);
  auto c = small_config(256, 15);
  const auto model = train(c, d.train, d.validation);
  const auto yhat = predict_batch(model, d.test.images);
  double mae = 0, baseline = 0;
  for (std::size_t i = 0; i < yhat.size(); ++i) {
    mae += std::abs(yhat[i] - d.test.labels[i]);
    baseline += std::abs(0.5 - d.test.labels[i]);
  }
  EXPECT_LT(mae, baseline);
}
