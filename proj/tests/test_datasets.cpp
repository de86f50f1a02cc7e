#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "backdrop/dataset.hpp"
#include "backdrop/synth.hpp"
#include "tempdir.hpp"

using namespace backdrop;
using backdrop::testing::TempDir;
namespace fs = std::filesystem;

namespace {

Dataset toy_dataset(std::size_t n, std::size_t classes, std::size_t side = 4) {
  Dataset ds;
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back("c" + std::to_string(c));
  for (std::size_t i = 0; i < n; ++i) {
    LabeledImage li;
    li.image = Image(1, side, side);
    for (std::size_t j = 0; j < li.image.pixels.size(); ++j)
      li.image.pixels[j] = static_cast<double>((i * 7 + j * 3) % 256) / 255.0;
    li.label = static_cast<int>(i % classes);
    ds.items.push_back(std::move(li));
  }
  return ds;
}

Dataset background_items(std::size_t n, std::size_t side = 4) {
  Dataset bg;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledImage li;
    li.image = Image(1, side, side, 64.0 / 255.0);
    li.label = kBackgroundLabel;
    bg.items.push_back(std::move(li));
  }
  return bg;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Idx, RoundTrip) {
  TempDir dir("idx_rt");
  const Dataset ds = toy_dataset(12, 3, 5);
  write_idx(ds, dir / "img.idx", dir / "lab.idx");
  const Dataset r = load_idx(dir / "img.idx", dir / "lab.idx");
  ASSERT_EQ(r.size(), ds.size());
  EXPECT_EQ(r.num_target_classes(), 3u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(r.items[i].label, ds.items[i].label);
    EXPECT_EQ(r.items[i].image, ds.items[i].image);  // values are multiples of 1/255
  }
}

TEST(Idx, MalformedFilesAreDiagnosed) {
  TempDir dir("idx_bad");
  const Dataset ds = toy_dataset(6, 2, 4);
  write_idx(ds, dir / "img.idx", dir / "lab.idx");

  // Truncated image payload.
  fs::copy_file(dir / "img.idx", dir / "short.idx");
  fs::resize_file(dir / "short.idx", fs::file_size(dir / "short.idx") - 5);
  std::string msg = error_of([&] { load_idx(dir / "short.idx", dir / "lab.idx"); });
  EXPECT_NE(msg.find("truncated at offset"), std::string::npos) << msg;

  // Bad magic.
  fs::copy_file(dir / "img.idx", dir / "magic.idx");
  {
    std::fstream f(dir / "magic.idx", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(2);
    f.put(0x09);
  }
  msg = error_of([&] { load_idx(dir / "magic.idx", dir / "lab.idx"); });
  EXPECT_NE(msg.find("bad magic"), std::string::npos) << msg;
  EXPECT_NE(msg.find("offset 0"), std::string::npos) << msg;

  // Count mismatch between the two files.
  write_idx(toy_dataset(4, 2, 4), dir / "img4.idx", dir / "lab4.idx");
  msg = error_of([&] { load_idx(dir / "img.idx", dir / "lab4.idx"); });
  EXPECT_NE(msg.find("count mismatch"), std::string::npos) << msg;

  msg = error_of([&] { load_idx(dir / "missing.idx", dir / "lab.idx"); });
  EXPECT_NE(msg.find("cannot open"), std::string::npos) << msg;
}

TEST(DatasetDir, RoundTripKeepsProvenance) {
  TempDir dir("dsdir");
  Dataset ds = append_background(toy_dataset(5, 2, 3), background_items(2, 3));
  ds.items[0].source = "pool:0";
  ds.items[0].source_labels = {"cat", "indoor"};
  ds.items[5].transforms = {"resize", "invert"};
  write_dataset_dir(ds, dir.path());
  const Dataset r = read_dataset_dir(dir.path());
  ASSERT_EQ(r.size(), ds.size());
  EXPECT_TRUE(r.has_background);
  EXPECT_EQ(r.class_names, ds.class_names);
  EXPECT_EQ(r.items[0].source, "pool:0");
  EXPECT_EQ(r.items[0].source_labels, ds.items[0].source_labels);
  EXPECT_EQ(r.items[5].transforms, ds.items[5].transforms);
  EXPECT_EQ(r.items[6].label, kBackgroundLabel);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(r.items[i].image, ds.items[i].image);
}

TEST(Split, NinetyTenOfFiveThousand) {
  const Dataset ds = toy_dataset(5000, 10, 2);
  const Split s = split_train_val(ds, 0.9, 4);
  EXPECT_EQ(s.train.size(), 4500u);
  EXPECT_EQ(s.val.size(), 500u);
  std::vector<std::size_t> per_class(10, 0);
  for (const auto& it : s.val.items) ++per_class[static_cast<std::size_t>(it.label)];
  for (std::size_t c : per_class) EXPECT_EQ(c, 50u);
  std::set<std::size_t> all(s.train_indices.begin(), s.train_indices.end());
  all.insert(s.val_indices.begin(), s.val_indices.end());
  EXPECT_EQ(all.size(), 5000u);
  EXPECT_EQ(s.hash(), split_train_val(ds, 0.9, 4).hash());
  EXPECT_NE(s.hash(), split_train_val(ds, 0.9, 5).hash());
}

TEST(Split, UnevenClassesStillSumToRoundedTotal) {
  Dataset ds = toy_dataset(7, 1, 2);
  Dataset more = toy_dataset(5, 1, 2);
  for (auto& it : more.items) it.label = 1;
  ds.class_names.push_back("c1");
  ds.items.insert(ds.items.end(), more.items.begin(), more.items.end());
  const Split s = split_train_val(ds, 0.5, 1);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_THROW(split_train_val(toy_dataset(3, 3, 2), 0.9, 1), std::invalid_argument);
  EXPECT_THROW(split_train_val(ds, 1.5, 1), std::invalid_argument);
}

TEST(Augment, RotationOfTwoByTwoIsAPermutation) {
  Image img(1, 2, 2);
  img.pixels = {0.1, 0.2, 0.3, 0.4};  // [[a,b],[c,d]]
  const Image r = rotate(img, 90.0);
  ASSERT_EQ(r.pixels.size(), 4u);
  EXPECT_NEAR(r.pixels[0], 0.2, 1e-12);
  EXPECT_NEAR(r.pixels[1], 0.4, 1e-12);
  EXPECT_NEAR(r.pixels[2], 0.1, 1e-12);
  EXPECT_NEAR(r.pixels[3], 0.3, 1e-12);
}

TEST(Augment, IdentityAndFlipInvolution) {
  const Image img = toy_dataset(1, 1, 6).items[0].image;
  EXPECT_EQ(augment(img, AugmentSpec{}, 3), img);
  EXPECT_EQ(hflip(hflip(img)), img);
  AugmentSpec spec;
  spec.max_rotation_deg = 15;
  spec.crop_scale_min = 0.8;
  spec.hflip_p = 0.5;
  const Image a = augment(img, spec, 99), b = augment(img, spec, 99);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.same_shape(img));
  spec.crop_scale_min = 0.0;
  EXPECT_THROW(augment(img, spec, 1), std::invalid_argument);
}

TEST(Compose, AppendBackgroundAddsOneClass) {
  const Dataset ds = toy_dataset(100, 10);
  const Dataset out = append_background(ds, background_items(3001));
  EXPECT_EQ(out.num_classes(), 11u);
  EXPECT_EQ(out.num_target_classes(), 10u);
  EXPECT_EQ(out.size(), 3101u);
  EXPECT_EQ(out.class_index(out.size() - 1), 10u);
  const std::string msg = error_of([&] { append_background(ds, Dataset{}); });
  EXPECT_NE(msg.find("empty"), std::string::npos) << msg;
  EXPECT_THROW(append_background(ds, background_items(2, 5)), std::invalid_argument);
  EXPECT_THROW(append_background(out, background_items(2)), std::invalid_argument);
}

TEST(Compose, MultitaskMergeOffsetsLabels) {
  const Dataset a = toy_dataset(20, 10), b = toy_dataset(204, 102);
  const Dataset m = merge_for_multitask({a, b});
  EXPECT_EQ(m.num_classes(), 112u);
  ASSERT_EQ(m.task_ranges.size(), 2u);
  EXPECT_EQ(m.task_ranges[1].offset, 10u);
  EXPECT_EQ(m.task_ranges[1].count, 102u);
  EXPECT_EQ(m.items[20].label, 10);
  EXPECT_EQ(m.items.back().label, 10 + 101);
  EXPECT_THROW(merge_for_multitask({a, toy_dataset(2, 2, 5)}), std::invalid_argument);
}

TEST(Confound, FullCorrelationPutsEachClassOnItsHomeTexture) {
  ConfoundSpec spec;
  spec.rho_train = 1.0;
  spec.train_count = 200;
  spec.test_count = 10;
  spec.background_count = 10;
  const ConfoundBundle b = generate_confounded(spec, 3);
  ASSERT_EQ(b.train.size(), 200u);
  for (std::size_t i = 0; i < b.train.size(); ++i)
    EXPECT_EQ(b.train_textures[i], static_cast<std::size_t>(b.train.items[i].label) % spec.num_textures);
}

TEST(Confound, ZeroCorrelationIsIndependentOfLabel) {
  ConfoundSpec spec;
  spec.train_count = 10;
  spec.test_count = 2000;
  spec.background_count = 10;
  const ConfoundBundle b = generate_confounded(spec, 5);
  // Chi-square test of independence on the class x texture table.
  std::vector<std::vector<double>> table(spec.num_classes, std::vector<double>(spec.num_textures, 0));
  for (std::size_t i = 0; i < b.test.size(); ++i)
    table[static_cast<std::size_t>(b.test.items[i].label)][b.test_textures[i]] += 1;
  std::vector<double> rows(spec.num_classes, 0), cols(spec.num_textures, 0);
  for (std::size_t r = 0; r < spec.num_classes; ++r)
    for (std::size_t c = 0; c < spec.num_textures; ++c) {
      rows[r] += table[r][c];
      cols[c] += table[r][c];
    }
  const double n = static_cast<double>(b.test.size());
  double chi2 = 0;
  for (std::size_t r = 0; r < spec.num_classes; ++r)
    for (std::size_t c = 0; c < spec.num_textures; ++c) {
      const double e = rows[r] * cols[c] / n;
      chi2 += (table[r][c] - e) * (table[r][c] - e) / e;
    }
  EXPECT_LT(chi2, 11.345);  // df = 3, alpha = 0.01
}

TEST(Confound, PoolHasNoForegroundAndIsDeterministic) {
  ConfoundSpec spec;
  spec.train_count = 20;
  spec.test_count = 20;
  spec.background_count = 50;
  const ConfoundBundle a = generate_confounded(spec, 8), b = generate_confounded(spec, 8);
  ASSERT_EQ(a.background_pool.size(), 50u);
  for (std::size_t px : a.pool_foreground_pixels) EXPECT_EQ(px, 0u);
  for (const auto& it : a.background_pool.items) EXPECT_EQ(it.label, kBackgroundLabel);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train.items[i].image, b.train.items[i].image);
  spec.rho_train = 1.5;
  EXPECT_THROW(generate_confounded(spec, 1), std::invalid_argument);
}
