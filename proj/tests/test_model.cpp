#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "goal/errors.hpp"
#include "goal/model.hpp"
#include "goal/objectives.hpp"
#include "test_util.hpp"

namespace goal {
namespace {

using test::random_mat;

MlpParams small_params(std::uint64_t seed, std::size_t d_in = 5, std::size_t d = 3, std::size_t k = 3) {
  Architecture a;
  a.input_dim = d_in;
  a.hidden = {4};
  a.embed_dim = d;
  a.classes = k;
  return init_params(a, seed);
}

TEST(InitParams, ChainsDimensions) {
  const MlpParams p = small_params(1, 7, 2, 4);
  EXPECT_EQ(p.input_dim(), 7u);
  EXPECT_EQ(p.embed_dim(), 2u);
  EXPECT_EQ(p.classes(), 4u);
  EXPECT_NO_THROW(p.validate());
  for (auto v : tensor_values(p)) {
    for (double x : v) EXPECT_TRUE(std::isfinite(x));
  }
  EXPECT_EQ(small_params(9), small_params(9));
  EXPECT_FALSE(small_params(9) == small_params(10));
}

TEST(Forward, ZeroParametersGiveUniformProbabilities) {
  const MlpParams p = small_params(2).zeros_like();
  const ForwardTrace t = forward(p, random_mat(5, 4, 3));
  for (double v : t.probs.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Forward, HandComputedSoftmax) {
  MlpParams p;
  p.g_layers.push_back({Mat::identity(2), {0.0, 0.0}});
  p.h_weight = Mat::identity(2);
  p.h_bias = {0.0, 0.0};
  const ForwardTrace t = forward(p, Mat::from_rows({{1.0, 0.0}, {2.0, 0.0}}));
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  EXPECT_NEAR(t.probs(0, 0), e1 / (e1 + e2), 1e-15);
  EXPECT_NEAR(t.probs(1, 0), e2 / (e1 + e2), 1e-15);
  EXPECT_NEAR(t.probs(0, 1), 0.5, 1e-15);
}

TEST(Forward, ColumnPermutationCommutes) {
  const MlpParams p = small_params(4);
  const Mat x = random_mat(5, 6, 5);
  const std::size_t perm[] = {3, 0, 5, 1, 4, 2};
  const ForwardTrace a = forward(p, x.select_cols(perm));
  const ForwardTrace b = forward(p, x);
  EXPECT_EQ(a.z(), b.z().select_cols(perm));
  EXPECT_EQ(a.probs, b.probs.select_cols(perm));
  EXPECT_EQ(embed(p, x), b.z());
}

TEST(Forward, ProbabilitiesAreDistributions) {
  MlpParams p = small_params(6);
  for (double& w : p.h_weight.data()) w *= 50.0;  // sharp logits
  const ForwardTrace t = forward(p, random_mat(5, 20, 7, 3.0));
  for (std::size_t j = 0; j < t.probs.cols(); ++j) {
    double sum = 0.0;
    for (double v : t.probs.col(j)) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
  EXPECT_THROW(forward(p, Mat(4, 1)), DimensionError);
}

ForwardTrace trace_with_probs(const Mat& probs) {
  ForwardTrace t;
  t.probs = probs;
  return t;
}

TEST(Losses, SourceCrossEntropyClosedForms) {
  Mat uniform(3, 4);
  for (double& v : uniform.data()) v = 1.0 / 3.0;
  TaskLayout layout{{0, 1, 2, 3}, {0, 1, 2, 0}, {}};
  EXPECT_NEAR(loss_source_ce(trace_with_probs(uniform), layout), 4.0 * std::log(3.0), 1e-12);
  Mat onehot = Mat::from_rows({{1.0 - 1e-9, 0.0}, {1e-9, 1.0}});
  TaskLayout l2{{0, 1}, {0, 1}, {}};
  EXPECT_NEAR(loss_source_ce(trace_with_probs(onehot), l2), 0.0, 1e-8);
}

TEST(Losses, MatchScalarLoopOracles) {
  const MlpParams p = small_params(8);
  const ForwardTrace t = forward(p, random_mat(5, 10, 9));
  TaskLayout layout{{0, 2, 4, 6}, {1, 0, 2, 2}, {1, 3, 5, 7, 8, 9}};
  double ce = 0.0;
  for (std::size_t s = 0; s < 4; ++s) ce -= std::log(t.probs(layout.source_labels[s], layout.source_cols[s]));
  EXPECT_NEAR(loss_source_ce(t, layout), ce, 1e-12);
  Mat y(3, 4);
  for (std::size_t s = 0; s < 4; ++s) y(layout.source_labels[s], s) = 1.0;
  EXPECT_NEAR(loss_source_ce(t, y, layout.source_cols), ce, 1e-12);
  double h = 0.0;
  for (std::size_t j : layout.target_cols) {
    for (std::size_t i = 0; i < 3; ++i) h -= t.probs(i, j) * std::log(t.probs(i, j));
  }
  EXPECT_NEAR(loss_target_entropy(t, layout.target_cols), h, 1e-12);
}

TEST(Losses, EntropyExtremes) {
  Mat uniform(4, 1);
  for (double& v : uniform.data()) v = 0.25;
  const std::size_t c[] = {0};
  EXPECT_NEAR(loss_target_entropy(trace_with_probs(uniform), c), std::log(4.0), 1e-12);
  const Mat sharp = Mat::from_rows({{1.0 - 1e-12}, {1e-12}});
  EXPECT_NEAR(loss_target_entropy(trace_with_probs(sharp), c), 0.0, 1e-9);
}

/// L_E^s + λ_t L_E^t + L_GO(z) as a function of the parameters, with the
/// GO part evaluated on the batch structure of `proto`.
double total_objective(const MlpParams& p, const Mat& x, const TaskLayout& layout, double lambda_t,
                       const PartitionedBatch* proto, const GoConfig& go, bool ball) {
  const ForwardTrace t = forward(p, x);
  double v = loss_source_ce(t, layout) + lambda_t * loss_target_entropy(t, layout.target_cols);
  if (proto != nullptr) {
    const std::size_t all[] = {0, 1};
    const PartitionedBatch b = proto->with_embedding(t.z());
    v += ball ? go_terms_in_ball(b, go, all).l_go : go_terms(b, go, all).l_go;
  }
  return v;
}

void expect_backward_matches_fd(const MlpParams& params, const Mat& x, const TaskLayout& layout,
                                double lambda_t, const PartitionedBatch* proto, const GoConfig& go,
                                bool ball, double tol) {
  const ForwardTrace t = forward(params, x);
  Mat go_grad;
  if (proto != nullptr) {
    const std::size_t all[] = {0, 1};
    const PartitionedBatch b = proto->with_embedding(t.z());
    go_grad = ball ? go_terms_in_ball(b, go, all).grad : go_terms(b, go, all).grad;
  }
  MlpParams g = backward(params, t, layout, go_grad, lambda_t);
  auto gv = tensors(g);
  MlpParams work = params;
  auto pv = tensors(work);
  const double h = 1e-6;
  for (std::size_t k = 0; k < pv.size(); ++k) {
    for (std::size_t i = 0; i < pv[k].values.size(); ++i) {
      const double orig = pv[k].values[i];
      pv[k].values[i] = orig + h;
      const double fp = total_objective(work, x, layout, lambda_t, proto, go, ball);
      pv[k].values[i] = orig - h;
      const double fm = total_objective(work, x, layout, lambda_t, proto, go, ball);
      pv[k].values[i] = orig;
      const double fd = (fp - fm) / (2 * h);
      EXPECT_NEAR(gv[k].values[i], fd, tol * std::max(1.0, std::abs(fd))) << pv[k].name << "[" << i << "]";
    }
  }
}

TEST(Backward, CrossEntropyOnlyMatchesFiniteDifferences) {
  for (int s = 0; s < 5; ++s) {
    const MlpParams p = small_params(20 + s);
    const Mat x = random_mat(5, 8, 30 + s);
    TaskLayout layout{{0, 1, 2, 3}, {0, 1, 2, 1}, {4, 5, 6, 7}};
    expect_backward_matches_fd(p, x, layout, 0.0, nullptr, GoConfig{}, false, 1e-5);
  }
}

PartitionedBatch two_class_proto(std::size_t d) {
  // Columns 0..3 source, 4..7 target; two classes in each domain.
  return PartitionedBatch(Mat(d, 8),
                          {Domain::source, Domain::source, Domain::source, Domain::source, Domain::target,
                           Domain::target, Domain::target, Domain::target},
                          {0, 0, 1, 1, 0, 0, 1, 1}, 2);
}

TEST(Backward, FullObjectiveMatchesFiniteDifferences) {
  const PartitionedBatch proto = two_class_proto(3);
  for (int s = 0; s < 5; ++s) {
    const MlpParams p = small_params(40 + s);
    const Mat x = random_mat(5, 8, 50 + s);
    TaskLayout layout{{0, 1, 2, 3}, {0, 0, 1, 1}, {4, 5, 6, 7}};
    GoConfig go;
    go.lambda_tb = 0.7;
    go.lambda_db = 1.1;
    expect_backward_matches_fd(p, x, layout, 0.3, &proto, go, false, 1e-4);
    go.alpha = 4.0;
    expect_backward_matches_fd(p, x, layout, 0.3, &proto, go, true, 1e-4);
  }
}

TEST(Backward, GoGradientReachesOnlyTheTransformation) {
  // Perfect fit: source probabilities are one-hot, so the task gradient vanishes.
  MlpParams p;
  p.g_layers.push_back({Mat::identity(2), {0.0, 0.0}});
  p.h_weight = Mat::identity(2) * 200.0;
  p.h_bias = {0.0, 0.0};
  const Mat x = Mat::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  const ForwardTrace t = forward(p, x);
  TaskLayout layout{{0, 1}, {0, 1}, {}};
  const Mat go_grad = Mat::from_rows({{0.5, -1.0}, {2.0, 0.25}});
  const MlpParams g = backward(p, t, layout, go_grad, 0.0);
  for (double v : g.h_weight.data()) EXPECT_NEAR(v, 0.0, 1e-12);
  for (double v : g.h_bias) EXPECT_NEAR(v, 0.0, 1e-12);
  EXPECT_GT(frobenius_norm(g.g_layers[0].weight), 0.5);
  EXPECT_THROW(backward(p, t, layout, Mat(3, 2), 0.0), DimensionError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  MlpParams p = small_params(60);
  const MlpParams before = p;
  OptimizerState s = make_optimizer(p, 1e-3);
  adam_step(p, p.zeros_like(), s);
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  MlpParams p = small_params(61);
  const MlpParams before = p;
  MlpParams ones = p.zeros_like();
  for (auto& tv : tensors(ones)) {
    for (double& v : tv.values) v = 1.0;
  }
  OptimizerState s = make_optimizer(p, 1e-3);
  adam_step(p, ones, s);
  const auto a = tensor_values(before);
  const auto b = tensor_values(p);
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) EXPECT_NEAR(a[k][i] - b[k][i], 1e-3, 1e-8);
  }
}

TEST(Adam, DecreasesConvexQuadratic) {
  // f = Σ (θ − 3)² over every parameter.
  MlpParams p = small_params(62);
  OptimizerState s = make_optimizer(p, 0.05);
  auto loss = [](const MlpParams& q) {
    double f = 0.0;
    for (auto v : tensor_values(q)) {
      for (double x : v) f += (x - 3.0) * (x - 3.0);
    }
    return f;
  };
  double prev = loss(p);
  for (int step = 1; step <= 100; ++step) {
    MlpParams g = p.zeros_like();
    auto gv = tensors(g);
    const auto pv = tensor_values(p);
    for (std::size_t k = 0; k < gv.size(); ++k) {
      for (std::size_t i = 0; i < gv[k].values.size(); ++i) gv[k].values[i] = 2.0 * (pv[k][i] - 3.0);
    }
    adam_step(p, g, s);
    const double now = loss(p);
    if (step > 5) {
      EXPECT_LT(now, prev) << "step " << step;
    }
    prev = now;
  }
}

TEST(Predict, ArgmaxWithTiesToLowestClass) {
  MlpParams p;
  p.g_layers.push_back({Mat::identity(2), {0.0, 0.0}});
  p.h_weight = Mat(3, 2);
  p.h_bias = {0.0, 0.0, 0.0};
  const auto y = predict(p, random_mat(2, 5, 1));
  for (int v : y) EXPECT_EQ(v, 0);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto dir = std::filesystem::temp_directory_path() / "goal_ckpt_test";
  std::filesystem::create_directories(dir);
  const MlpParams p = small_params(70);
  save_checkpoint(p, dir / "c.json");
  EXPECT_EQ(load_checkpoint(dir / "c.json"), p);
  std::ofstream(dir / "bad.json") << "{\"format\": \"other\"}";
  EXPECT_THROW(load_checkpoint(dir / "bad.json"), ParseError);
  EXPECT_THROW(load_checkpoint(dir / "missing.json"), ParseError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace goal
