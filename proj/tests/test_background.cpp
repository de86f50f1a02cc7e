#include <gtest/gtest.h>

#include <map>
#include <set>
#include <tuple>

#include "backdrop/background.hpp"

using namespace backdrop;

namespace {

// Pool with `per_class` items for each of `classes` labels; item i of class c
// is a flat image of value (c*per_class + i) mod 256 / 255.
SourcePool make_pool(const std::string& id, std::size_t classes, std::size_t per_class,
                     std::size_t side = 8) {
  SourcePool p;
  p.id = id;
  for (std::size_t c = 0; c < classes; ++c) p.items.class_names.push_back("L" + std::to_string(c));
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      LabeledImage li;
      li.image = Image(1, side, side, static_cast<double>((c * per_class + i) % 256) / 255.0);
      li.label = static_cast<int>(c);
      li.source_labels = {"L" + std::to_string(c)};
      p.items.items.push_back(std::move(li));
    }
  return p;
}

std::string assemble_error(const BackgroundSpec& spec, const std::vector<SourcePool>& pools) {
  try {
    assemble(spec, pools, 1);
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Background, EmnistShapedPerClassDraw) {
  const std::vector<SourcePool> pools = {make_pool("emnist", 47, 520, 4)};
  BackgroundSpec spec;
  spec.sources = {{"emnist", std::nullopt, 500}};
  spec.target_size = 23500;
  spec.height = spec.width = 4;
  const Dataset bg = assemble(spec, pools, 7);
  ASSERT_EQ(bg.size(), 23500u);
  EXPECT_TRUE(bg.has_background);
  std::map<std::string, std::size_t> per_label;
  std::set<std::string> sources;
  for (const auto& it : bg.items) {
    EXPECT_EQ(it.label, kBackgroundLabel);
    ASSERT_EQ(it.source_labels.size(), 1u);
    ++per_label[it.source_labels[0]];
    sources.insert(it.source);
  }
  EXPECT_EQ(per_label.size(), 47u);
  for (const auto& [l, n] : per_label) EXPECT_EQ(n, 500u) << l;
  EXPECT_EQ(sources.size(), 23500u);  // no duplicates
}

TEST(Background, ShortfallIsRejected) {
  const std::vector<SourcePool> pools = {make_pool("p", 1, 10)};
  BackgroundSpec spec;
  spec.sources = {{"p", std::nullopt, std::nullopt}};
  spec.target_size = 20;
  std::string msg = assemble_error(spec, pools);
  EXPECT_NE(msg.find("insufficient eligible source images"), std::string::npos) << msg;
  EXPECT_NE(msg.find("20"), std::string::npos) << msg;

  spec.sources = {{"p", 20, std::nullopt}};
  msg = assemble_error(spec, pools);
  EXPECT_NE(msg.find("10 eligible, 20 requested"), std::string::npos) << msg;

  spec.sources = {{"p", std::nullopt, std::nullopt}};
  spec.allow_duplicates = true;
  EXPECT_EQ(assemble(spec, pools, 1).size(), 20u);

  spec.sources = {{"nowhere", std::nullopt, std::nullopt}};
  EXPECT_NE(assemble_error(spec, pools).find("unknown source pool"), std::string::npos);
}

TEST(Background, ExcludedLabelsNeverAppear) {
  const std::vector<SourcePool> pools = {make_pool("p", 5, 40)};
  BackgroundSpec spec;
  spec.sources = {{"p", std::nullopt, std::nullopt}};
  spec.excluded_labels = {"L1", "L3"};
  spec.target_size = 120;
  const Dataset bg = assemble(spec, pools, 2);
  ASSERT_EQ(bg.size(), 120u);
  for (const auto& it : bg.items)
    for (const auto& l : it.source_labels) EXPECT_EQ(spec.excluded_labels.count(l), 0u) << it.source;
  spec.target_size = 121;
  EXPECT_THROW(assemble(spec, pools, 2), std::invalid_argument);
}

TEST(Background, InvertExamples) {
  Image img(1, 1, 3);
  img.pixels = {0.0, 0.25, 1.0};
  EXPECT_EQ(invert_colors(img).pixels, (std::vector<double>{1.0, 0.75, 0.0}));

  const std::vector<SourcePool> pools = {make_pool("p", 1, 6)};
  BackgroundSpec spec;
  spec.sources = {{"p", std::nullopt, std::nullopt}};
  TransformSpec inv;
  inv.kind = TransformKind::invert;
  inv.keep_original = true;
  spec.transforms = {inv};
  spec.target_size = 12;
  spec.height = spec.width = 8;
  const Dataset bg = assemble(spec, pools, 3);
  ASSERT_EQ(bg.size(), 12u);
  std::size_t inverted = 0;
  for (std::size_t i = 0; i < bg.size(); ++i) {
    const auto& it = bg.items[i];
    if (!it.transforms.empty() && it.transforms.back() == "invert") {
      ++inverted;
      // Paired original precedes it and sums to one pixelwise.
      const auto& orig = bg.items[i - 1];
      EXPECT_EQ(orig.source, it.source);
      for (std::size_t j = 0; j < it.image.pixels.size(); ++j)
        EXPECT_NEAR(it.image.pixels[j] + orig.image.pixels[j], 1.0, 1e-12);
    }
  }
  EXPECT_EQ(inverted, 6u);
}

TEST(Background, MonochromesAreDistinct) {
  const auto grey = make_monochrome(256, 1, 2, 2, 5);
  std::set<double> levels;
  for (const auto& im : grey) {
    for (double v : im.pixels) EXPECT_EQ(v, im.pixels.front());
    levels.insert(im.pixels.front());
  }
  EXPECT_EQ(levels.size(), 256u);
  EXPECT_THROW(make_monochrome(257, 1, 2, 2, 5), std::invalid_argument);

  const auto rgb = make_monochrome(500, 3, 2, 2, 6);
  std::set<std::tuple<double, double, double>> colours;
  for (const auto& im : rgb) colours.insert({im.at(0, 0, 0), im.at(1, 0, 0), im.at(2, 0, 0)});
  EXPECT_EQ(colours.size(), 500u);

  const Image m = make_monochrome_image({0.2, 0.4, 0.6}, 3, 3, 3);
  EXPECT_DOUBLE_EQ(m.at(1, 2, 2), 0.4);
}

TEST(Background, MonochromeOnlySpec) {
  BackgroundSpec spec;
  spec.monochrome = {30, 9};
  spec.target_size = 30;
  spec.channels = 3;
  spec.height = spec.width = 5;
  const Dataset bg = assemble(spec, {}, 1);
  ASSERT_EQ(bg.size(), 30u);
  EXPECT_EQ(bg.items[0].source.rfind("monochrome:", 0), 0u);
}

TEST(Background, SizeHeuristic) {
  const SizeRange r = size_heuristic(4500, 10);
  EXPECT_EQ(r.lo, 450u);
  EXPECT_EQ(r.hi, 4500u);
  EXPECT_TRUE(r.lo <= 3001 && 3001 <= r.hi);
  const SizeRange s = size_heuristic(100, 4);
  EXPECT_EQ(s.lo, 25u);
  EXPECT_EQ(s.hi, 100u);
  const SizeRange one = size_heuristic(70, 1);
  EXPECT_EQ(one.lo, one.hi);
  EXPECT_THROW(size_heuristic(3, 4), std::invalid_argument);
  EXPECT_THROW(size_heuristic(3, 0), std::invalid_argument);
}

TEST(Background, DeterministicPerSeed) {
  const std::vector<SourcePool> pools = {make_pool("a", 3, 50), make_pool("b", 2, 30)};
  BackgroundSpec spec;
  spec.sources = {{"a", 100, std::nullopt}, {"b", std::nullopt, 20}};
  TransformSpec crop;
  crop.kind = TransformKind::random_crop;
  crop.fraction = 0.5;
  spec.transforms = {crop};
  spec.target_size = 90;
  const Dataset x = assemble(spec, pools, 11), y = assemble(spec, pools, 11), z = assemble(spec, pools, 12);
  ASSERT_EQ(x.size(), 90u);
  bool differs = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x.items[i].image, y.items[i].image);
    EXPECT_EQ(x.items[i].source, y.items[i].source);
    EXPECT_EQ(x.items[i].transforms, y.items[i].transforms);
    differs = differs || x.items[i].source != z.items[i].source;
  }
  EXPECT_TRUE(differs);
  // Output resolution is enforced after the crop.
  EXPECT_EQ(x.items[0].image.height, 28u);
  EXPECT_EQ(x.items[0].transforms.back(), "resize:28x28");
}

TEST(Background, PatchGrid) {
  Image img(1, 8, 8);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i) / 64.0;
  const auto p = extract_patches(img, 4, 0);
  ASSERT_EQ(p.size(), 4u);
  EXPECT_DOUBLE_EQ(p[1].at(0, 0, 0), img.at(0, 0, 4));
  EXPECT_DOUBLE_EQ(p[3].at(0, 3, 3), img.at(0, 7, 7));
  EXPECT_EQ(extract_patches(img, 4, 2).size(), 9u);
  EXPECT_TRUE(extract_patches(img, 9, 1).empty());

  const std::vector<SourcePool> pools = {make_pool("p", 1, 3, 8)};
  BackgroundSpec spec;
  spec.sources = {{"p", std::nullopt, std::nullopt}};
  TransformSpec t;
  t.kind = TransformKind::patches;
  t.patch = 4;
  spec.transforms = {t};
  spec.target_size = 12;
  spec.height = spec.width = 4;
  const Dataset bg = assemble(spec, pools, 1);
  ASSERT_EQ(bg.size(), 12u);
  EXPECT_EQ(bg.items[0].transforms.front().rfind("patch:", 0), 0u);
}

TEST(Background, SpecValidation) {
  BackgroundSpec spec;
  EXPECT_THROW(spec.validate(), std::invalid_argument);  // target_size 0
  spec.target_size = 1;
  spec.sources = {{"p", 3, 2}};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.sources.clear();
  TransformSpec t;
  t.kind = TransformKind::center_crop;
  t.fraction = 0;
  spec.transforms = {t};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}
