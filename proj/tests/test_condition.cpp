#include <gtest/gtest.h>

#include <sstream>

#include "helpers.hpp"

using namespace nextclip;

TEST(ClassPrefix, AddsOneExtraToken) {
  const auto seq = testutil::tiny_training_sequence({1, 1}, 2);
  const auto out = prefix_class_tokens(seq, ClassLabel{1, "b"}, 3);
  ASSERT_EQ(out.size(), seq.size() + 1);
  EXPECT_EQ(out.tokens[0].kind, TokenKind::Class);
  EXPECT_EQ(out.tokens[0].role, Role::Extra);
  EXPECT_EQ(out.tokens[0].class_id, 1);
  const auto m = build_training_mask(out);
  for (int q = 1; q < m.size(); ++q) EXPECT_TRUE(m(q, 0));
  for (int t = 1; t < m.size(); ++t) EXPECT_FALSE(m(0, t));
}

TEST(ClassPrefix, Guards) {
  const auto seq = testutil::tiny_training_sequence({1, 1}, 2);
  try {
    prefix_class_tokens(seq, ClassLabel{0, "a"}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
  try {
    prefix_class_tokens(seq, ClassLabel{2, "c"}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Domain);
  }
}

TEST(ClassPrefix, ClassTokenChangesPredictions) {
  const auto params = init_params<float>(testutil::tiny_config(2));
  const auto seq = testutil::tiny_training_sequence({1, 1}, 2);
  const auto a = predict(prefix_class_tokens(seq, ClassLabel{0, "a"}, 2), params);
  const auto b = predict(prefix_class_tokens(seq, ClassLabel{1, "b"}, 2), params);
  EXPECT_GT((a - b).norm(), 0.0f);
}

TEST(Labels, ParseAndWrite) {
  std::istringstream in("0\tball\n1\tdrop\r\n\n1\tdrop\n");
  const auto l = parse_labels(in);
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(l[1], (ClassLabel{1, "drop"}));
  testutil::TempDir dir("labels");
  write_labels(dir / "l.tsv", l);
  EXPECT_EQ(read_labels(dir / "l.tsv"), l);
  std::istringstream bad("x\tname\n");
  EXPECT_THROW(parse_labels(bad), Error);
  std::istringstream notab("3 name\n");
  EXPECT_THROW(parse_labels(notab), Error);
}

TEST(Probe, AllZeroProbeTiesToClassZero) {
  LinearProbe p;
  p.weight = Eigen::MatrixXd::Zero(3, 2);
  p.bias = Eigen::VectorXd::Zero(3);
  p.feature_mean = Eigen::VectorXd::Zero(2);
  p.feature_scale = Eigen::VectorXd::Ones(2);
  EXPECT_EQ(classify(p, Eigen::Vector2d(1.0, -4.0)), 0);
}

TEST(Probe, IdentityWeightsPickMatchingClass) {
  LinearProbe p;
  p.weight = Eigen::MatrixXd::Identity(3, 3);
  p.bias = Eigen::VectorXd::Zero(3);
  p.feature_mean = Eigen::VectorXd::Zero(3);
  p.feature_scale = Eigen::VectorXd::Ones(3);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(classify(p, Eigen::VectorXd::Unit(3, c)), c);
}

TEST(Probe, SeparableToyReachesFullTrainAccuracy) {
  Rng rng(1);
  std::vector<Eigen::VectorXd> x;
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    const int c = i % 3;
    Eigen::VectorXd f(4);
    for (int j = 0; j < 4; ++j) f(j) = 0.3 * rng.normal();
    f(c) += 3.0;
    x.push_back(f);
    y.push_back(c);
  }
  const auto probe = train_probe(x, y, 3);
  EXPECT_EQ(accuracy(probe, x, y), 1.0);
  EXPECT_EQ(train_probe(x, y, 3).weight, probe.weight);
}

TEST(Probe, RejectsMismatchedInputs) {
  std::vector<Eigen::VectorXd> x{Eigen::VectorXd::Zero(2)};
  EXPECT_THROW(train_probe(x, {0, 1}, 2), Error);
  EXPECT_THROW(train_probe(x, {3}, 2), Error);
}
