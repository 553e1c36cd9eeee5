#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace steer;
using namespace testing_support;

namespace {

double norm(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

LayerMapping expected_mapping(std::size_t ls, std::size_t lt) {
  LayerMapping m;
  for (std::size_t i = 0; i < std::min(ls, lt); ++i) m.pairs.emplace_back(i, i);
  for (std::size_t i = ls; i < lt; ++i) m.unmapped_target_layers.push_back(i);
  return m;
}

}  // namespace

TEST(MapLayers, ContractExamples) {
  const auto a = map_layers(6, 4);
  EXPECT_EQ(a.pairs.size(), 4u);
  EXPECT_TRUE(a.unmapped_target_layers.empty());
  const auto b = map_layers(4, 6);
  EXPECT_EQ(b.pairs.size(), 4u);
  EXPECT_EQ(b.unmapped_target_layers, (std::vector<std::size_t>{4, 5}));
  const auto c = map_layers(5, 5);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(c.pairs[i], std::make_pair(i, i));
  EXPECT_TRUE(c.unmapped_target_layers.empty());
  EXPECT_THROW(map_layers(0, 3), Error);
}

TEST(MapLayers, IdentityPrefixProperty) {
  for (std::size_t ls = 1; ls <= 9; ++ls)
    for (std::size_t lt = 1; lt <= 9; ++lt) EXPECT_EQ(map_layers(ls, lt), expected_mapping(ls, lt));
}

TEST(AdaptVector, IdentityTruncateProjection) {
  const std::vector<float> v = {0.6f, 0.8f, 0.0f};
  EXPECT_EQ(adapt_vector(v, DimensionAdapter::identity(3)), v);
  EXPECT_THROW(adapt_vector(v, DimensionAdapter{DimensionAdapter::Kind::kIdentity, 0, 3, 2}), Error);
  const auto t = adapt_vector(v, DimensionAdapter::truncate_or_pad(3, 2));
  EXPECT_EQ(t, (std::vector<float>{0.6f, 0.8f}));
  const auto padded = adapt_vector(v, DimensionAdapter::truncate_or_pad(3, 5));
  EXPECT_EQ(padded.size(), 5u);
  EXPECT_NEAR(norm(padded), 1.0, 1e-6);
  const std::vector<float> tail = {0.0f, 0.0f, 1.0f};
  try {
    adapt_vector(tail, DimensionAdapter::truncate_or_pad(3, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerate);
  }
  EXPECT_THROW(adapt_vector(v, DimensionAdapter::truncate_or_pad(4, 2)), Error);
}

TEST(AdaptVector, SeededProjectionDeterministicAndOrthonormal) {
  std::mt19937_64 gen(3);
  const auto v = unit_float(random_vector(gen, 24));
  const auto a = DimensionAdapter::projection(24, 10, 99);
  EXPECT_EQ(adapt_vector(v, a), adapt_vector(v, a));
  EXPECT_EQ(projection_matrix(a), projection_matrix(a));
  EXPECT_NE(projection_matrix(a), projection_matrix(DimensionAdapter::projection(24, 10, 100)));
  for (auto [from, to] : {std::pair{24, 10}, std::pair{10, 24}, std::pair{12, 12}}) {
    const auto m = projection_matrix(DimensionAdapter::projection(from, to, 5));
    // Rows orthonormal when shrinking, columns when growing.
    const bool rows = to <= from;
    const std::size_t count = rows ? to : from, len = rows ? from : to;
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < count; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k)
          dot += rows ? m[i * from + k] * m[j * from + k] : m[k * from + i] * m[k * from + j];
        EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
      }
  }
  const auto out = adapt_vector(v, a);
  EXPECT_EQ(out.size(), 10u);
  EXPECT_NEAR(norm(out), 1.0, 1e-6);
}

TEST(ResolveAdapter, RefusesSilentReinterpretation) {
  try {
    resolve_adapter(16, 8, std::nullopt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
    EXPECT_NE(std::string(e.what()).find("adapter"), std::string::npos);
  }
  EXPECT_THROW(resolve_adapter(16, 8, DimensionAdapter::truncate_or_pad(16, 4)), Error);
  EXPECT_EQ(resolve_adapter(8, 8, std::nullopt).kind, DimensionAdapter::Kind::kIdentity);
}

TEST(BuildPlan, LambdaZeroIsAllZero) {
  const auto set = random_set("src", 4, 16, 1);
  const auto plan = build_plan(set, small_spec(4), 0.0);
  for (const auto& v : plan.layer_vectors)
    for (float x : v) EXPECT_EQ(x, 0.0f);
}

TEST(BuildPlan, LambdaPointSixGivesNormPointSix) {
  const auto plan = build_plan(random_set("src", 4, 16, 2), small_spec(4), 0.6);
  ASSERT_EQ(plan.layer_vectors.size(), 4u);
  for (const auto& v : plan.layer_vectors) EXPECT_NEAR(norm(v), 0.6, 1e-5);
  EXPECT_EQ(plan.lambda, 0.6);
  EXPECT_EQ(plan.provenance.source_set_id, "src:synthetic");
  EXPECT_EQ(plan.provenance.adapter_kind, "identity");
}

TEST(BuildPlan, SixSourceLayersEightTargetLayers) {
  const auto plan = build_plan(random_set("src", 6, 16, 3), small_spec(8), 0.1);
  ASSERT_EQ(plan.layer_vectors.size(), 8u);
  for (std::size_t l = 0; l < 6; ++l) EXPECT_NEAR(norm(plan.layer_vectors[l]), 0.1, 1e-5);
  for (std::size_t l = 6; l < 8; ++l) {
    EXPECT_EQ(plan.layer_vectors[l], std::vector<float>(16, 0.0f));
  }
}

TEST(BuildPlan, LinearityInLambda) {
  const auto set = random_set("src", 3, 16, 4);
  const auto spec = small_spec(3);
  for (double lambda : {0.01, 0.1, 0.3}) {
    for (double c : {2.0, 3.0}) {
      const auto a = build_plan(set, spec, c * lambda);
      const auto b = build_plan(set, spec, lambda);
      for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t i = 0; i < 16; ++i)
          EXPECT_NEAR(a.layer_vectors[l][i], c * b.layer_vectors[l][i], 1e-6 * c * lambda);
    }
  }
}

TEST(BuildPlan, ErrorsAndAdaptedWidths) {
  const auto set = random_set("src", 2, 16, 5);
  EXPECT_THROW(build_plan(set, small_spec(2, 8, 2), 0.5), Error);
  EXPECT_THROW(build_plan(set, small_spec(2), -0.1), Error);
  EXPECT_THROW(build_plan(set, small_spec(2), std::nan("")), Error);
  const auto plan = build_plan(set, small_spec(2, 8, 2), 0.5, DimensionAdapter::projection(16, 8, 1));
  for (const auto& v : plan.layer_vectors) {
    EXPECT_EQ(v.size(), 8u);
    EXPECT_NEAR(norm(v), 0.5, 1e-5);
  }
  EXPECT_EQ(plan.provenance.adapter_kind, "seeded_projection");
  EXPECT_NE(plan.provenance.mapping_summary.find("0->0"), std::string::npos);
}
