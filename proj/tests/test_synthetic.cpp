#include <gtest/gtest.h>

#include "pagenet/quadfit.hpp"
#include "pagenet/synthetic.hpp"

using namespace pagenet;

namespace {

bool touches_border(const Quad& q, double size) {
  for (const auto& p : q.corners)
    if (p.x <= 0 || p.y <= 0 || p.x >= size || p.y >= size) return true;
  return false;
}

ProbabilityMap indicator(const BinaryMask& m) {
  ProbabilityMap p(m.height, m.width);
  for (std::size_t i = 0; i < m.size(); ++i) p.values[i] = m.bits[i];
  return p;
}

std::size_t overlap(const BinaryMask& a, const BinaryMask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a.bits[i] && b.bits[i];
  return n;
}

}  // namespace

TEST(Synthetic, DeterministicForSeed) {
  SyntheticSpec spec;
  spec.image_size = 64;
  spec.book_edge_prob = spec.partial_page_prob = spec.overlay_prob = 0.5;
  spec.noise_amplitude = 4;
  spec.seed = 12;
  const auto a = generate_synthetic(spec, 6);
  const auto b = generate_synthetic(spec, 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image.data, b[i].image.data);
    EXPECT_EQ(a[i].record, b[i].record);
  }
  spec.seed = 13;
  EXPECT_NE(generate_synthetic(spec, 1)[0].image.data, a[0].image.data);
  EXPECT_EQ(a[3].record.image_path, "synth_00003.png");
}

TEST(Synthetic, CleanPageMatchesItsAnnotation) {
  SyntheticSpec spec;
  spec.image_size = 96;
  spec.text_density = 0.0;
  spec.background_gradient = 0.0;
  spec.seed = 4;
  for (const auto& s : generate_synthetic(spec, 10)) {
    EXPECT_FALSE(s.partial_page || s.book_edge || s.overlay);
    EXPECT_EQ(s.record.quad, s.page);
    EXPECT_EQ(s.record.width, 96);
    const auto gt = rasterize_quad(s.page, 96, 96);
    // Page pixels are exactly the bright ones.
    for (int r = 0; r < 96; ++r)
      for (int c = 0; c < 96; ++c) EXPECT_EQ(s.image.at(r, c, 0) >= 150, gt.at(r, c) == 1) << r << "," << c;
  }
}

TEST(Synthetic, PartialPageTouchesBorderAndAvoidsTarget) {
  SyntheticSpec spec;
  spec.image_size = 128;
  spec.partial_page_prob = 1.0;
  spec.book_edge_prob = 0.5;
  spec.seed = 5;
  for (const auto& s : generate_synthetic(spec, 40)) {
    ASSERT_TRUE(s.partial_page.has_value());
    EXPECT_TRUE(touches_border(*s.partial_page, 128));
    EXPECT_EQ(quad_iou(*s.partial_page, s.record.quad), 0.0);
    EXPECT_EQ(overlap(rasterize_quad(*s.partial_page, 128, 128), rasterize_quad(s.record.quad, 128, 128)), 0u);
  }
}

TEST(Synthetic, OverlayBecomesTargetInsidePage) {
  SyntheticSpec spec;
  spec.image_size = 128;
  spec.overlay_prob = 1.0;
  spec.seed = 6;
  for (const auto& s : generate_synthetic(spec, 20)) {
    ASSERT_TRUE(s.overlay.has_value());
    EXPECT_EQ(s.record.quad, *s.overlay);
    EXPECT_NEAR(quad_iou(s.page, *s.overlay), polygon_area(*s.overlay) / polygon_area(s.page), 1e-9);
  }
}

TEST(Synthetic, ExtractionFromCleanTargetsRecoversQuads) {
  SyntheticSpec spec;
  spec.image_size = 256;
  spec.book_edge_prob = spec.partial_page_prob = spec.overlay_prob = 0.3;
  spec.seed = 7;
  double sum = 0;
  const auto samples = generate_synthetic(spec, 30);
  for (const auto& s : samples) {
    const auto q = extract_quad(indicator(rasterize_quad(s.record.quad, 256, 256)));
    sum += quad_iou(q, s.record.quad);
  }
  EXPECT_GE(sum / samples.size(), 0.99);
}

TEST(Synthetic, SpecJsonRoundTripAndValidation) {
  SyntheticSpec spec;
  spec.image_size = 80;
  spec.overlay_prob = 0.25;
  spec.page_scale_min = 0.5;
  spec.seed = 99;
  EXPECT_EQ(synthetic_spec_from_json(to_json(spec)), spec);
  EXPECT_EQ(synthetic_spec_from_json(nlohmann::json::object()), SyntheticSpec{});
  EXPECT_THROW(synthetic_spec_from_json({{"book_edge_prob", 1.5}}), std::invalid_argument);
  EXPECT_THROW(synthetic_spec_from_json({{"version", 2}}), FormatError);
  EXPECT_THROW(generate_synthetic(spec, 0), std::invalid_argument);
}
