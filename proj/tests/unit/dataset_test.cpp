#include <gtest/gtest.h>

#include <cstdint>
#include <map>
#include <set>

#include "nsatp/error.hpp"
#include "nsatp/dataset.hpp"
#include "support.hpp"

using namespace nsatp;
using namespace nsatp::test;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

std::string idx_images(std::uint32_t magic, std::uint32_t count, std::uint32_t rows,
                       std::uint32_t cols, const std::vector<unsigned char>& pixels) {
  std::string out;
  put_u32(out, magic);
  put_u32(out, count);
  put_u32(out, rows);
  put_u32(out, cols);
  out.append(pixels.begin(), pixels.end());
  return out;
}

std::string idx_labels(std::uint32_t magic, const std::vector<unsigned char>& labels) {
  std::string out;
  put_u32(out, magic);
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(labels.begin(), labels.end());
  return out;
}

ErrorCode load_error(const TempDir& dir, const std::string& images, const std::string& labels) {
  write_text(dir / "i.idx", images);
  write_text(dir / "l.idx", labels);
  try {
    load_idx(dir / "i.idx", dir / "l.idx");
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "load succeeded";
  return ErrorCode::Config;
}

std::vector<unsigned char> fixture_pixels() {
  // Four 2x3 images; pixel (0,0) of image 0 is 0x7F.
  std::vector<unsigned char> px(4 * 6);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<unsigned char>(i * 10);
  px[0] = 0x7F;
  px[5] = 0xFF;
  return px;
}

}  // namespace

TEST(LoadIdx, DecodesFixture) {
  TempDir dir;
  write_text(dir / "i.idx", idx_images(0x803, 4, 2, 3, fixture_pixels()));
  write_text(dir / "l.idx", idx_labels(0x801, {3, 1, 4, 1}));
  const auto ds = load_idx(dir / "i.idx", dir / "l.idx");
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.shape(), (ImageShape{2, 3, 1}));
  EXPECT_DOUBLE_EQ(ds[0].pixels[0], 127.0 / 255.0);
  EXPECT_NEAR(ds[0].pixels[0], 0.498039, 1e-6);
  EXPECT_DOUBLE_EQ(ds[0].pixels[5], 1.0);
  EXPECT_DOUBLE_EQ(ds[1].pixels[0], 60.0 / 255.0);
  EXPECT_EQ(ds[2].true_label, 4);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds[i].id, i);
}

TEST(LoadIdx, EmptyFilesGiveEmptyDataset) {
  TempDir dir;
  write_text(dir / "i.idx", idx_images(0x803, 0, 28, 28, {}));
  write_text(dir / "l.idx", idx_labels(0x801, {}));
  const auto ds = load_idx(dir / "i.idx", dir / "l.idx");
  EXPECT_TRUE(ds.empty());
  EXPECT_EQ(ds.shape(), (ImageShape{28, 28, 1}));
}

TEST(LoadIdx, Errors) {
  TempDir dir;
  const auto images = idx_images(0x803, 4, 2, 3, fixture_pixels());
  EXPECT_EQ(load_error(dir, images, idx_labels(0x803, {1, 1, 1, 1})), ErrorCode::BadMagic);
  EXPECT_EQ(load_error(dir, idx_images(0x801, 4, 2, 3, fixture_pixels()),
                       idx_labels(0x801, {1, 1, 1, 1})),
            ErrorCode::BadMagic);
  EXPECT_EQ(load_error(dir, images, idx_labels(0x801, {1, 1, 1})), ErrorCode::CountMismatch);
  EXPECT_EQ(load_error(dir, images.substr(0, images.size() - 1), idx_labels(0x801, {1, 1, 1, 1})),
            ErrorCode::TruncatedFile);
  EXPECT_EQ(load_error(dir, images.substr(0, 6), idx_labels(0x801, {1, 1, 1, 1})),
            ErrorCode::TruncatedFile);
  EXPECT_EQ(load_error(dir, images, idx_labels(0x801, {1, 10, 1, 1})), ErrorCode::LabelOutOfRange);
}

TEST(LoadIdx, MissingFileIsIoError) {
  try {
    load_idx("/nonexistent/images", "/nonexistent/labels");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(LoadIdx, BundledSampleIsGzippedMnist) {
  const std::filesystem::path dir = NSATP_DATA_DIR "/mnist-5k";
  if (!std::filesystem::exists(dir / "images-idx3-ubyte.gz")) GTEST_SKIP() << "no bundled data";
  const auto ds = load_idx(dir / "images-idx3-ubyte.gz", dir / "labels-idx1-ubyte.gz");
  EXPECT_EQ(ds.size(), 5000u);
  EXPECT_EQ(ds.shape(), (ImageShape{28, 28, 1}));
  std::map<int, int> per_class;
  for (const auto& ex : ds.examples()) ++per_class[ex.true_label];
  EXPECT_EQ(per_class.size(), 10u);
  for (const auto& [label, n] : per_class) EXPECT_EQ(n, 500) << label;
}

TEST(LoadCsv, SingleBlackImage) {
  TempDir dir;
  std::string row = "3";
  for (int i = 0; i < 784; ++i) row += ",0";
  write_text(dir / "d.csv", row + "\n");
  const auto ds = load_csv(dir / "d.csv", {28, 28, 1}, 10);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].true_label, 3);
  for (double v : ds[0].pixels) EXPECT_EQ(v, 0.0);
}

TEST(LoadCsv, Errors) {
  TempDir dir;
  std::string row = "3";
  for (int i = 0; i < 783; ++i) row += ",0";
  write_text(dir / "short.csv", row + "\n");
  write_text(dir / "text.csv", "1,0,x,0,0\n");
  write_text(dir / "label.csv", "12,0,0,0,0\n");
  auto code = [&](const char* name, ImageShape shape) {
    try {
      load_csv(dir / name, shape, 10);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Config;
  };
  EXPECT_EQ(code("short.csv", {28, 28, 1}), ErrorCode::RowLengthMismatch);
  EXPECT_EQ(code("text.csv", {2, 2, 1}), ErrorCode::NonNumericCell);
  EXPECT_EQ(code("label.csv", {2, 2, 1}), ErrorCode::LabelOutOfRange);
}

TEST(LoadCsv, ScalesEightBitPixels) {
  TempDir dir;
  write_text(dir / "d.csv", "0,0,51,255,102\n1,0.5,1,0,0\n");
  const auto ds = load_csv(dir / "d.csv", {2, 2, 1}, 2);
  EXPECT_DOUBLE_EQ(ds[0].pixels[1], 0.2);
  EXPECT_DOUBLE_EQ(ds[0].pixels[2], 1.0);
  EXPECT_DOUBLE_EQ(ds[1].pixels[0], 0.5 / 255.0);

  write_text(dir / "unit.csv", "0,0,0.2,1,0.4\r\n");
  const auto unit = load_csv(dir / "unit.csv", {2, 2, 1}, 2);
  EXPECT_DOUBLE_EQ(unit[0].pixels[1], 0.2);
}

TEST(Subset, FullSizeIsPermutation) {
  const auto ds = stripes_dataset(30, 1);
  const auto s = subset(ds, ds.size(), 5);
  std::set<ExampleId> sources(s.source_ids().begin(), s.source_ids().end());
  EXPECT_EQ(sources.size(), ds.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s[i].id, i);
    EXPECT_EQ(s[i].pixels, ds[s.source_id(i)].pixels);
  }
}

TEST(Subset, SeededAndChecked) {
  const auto ds = stripes_dataset(30, 1);
  EXPECT_EQ(subset(ds, 10, 3).source_ids(), subset(ds, 10, 3).source_ids());
  EXPECT_NE(subset(ds, 10, 3).source_ids(), subset(ds, 10, 4).source_ids());
  try {
    subset(ds, 31, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KTooLarge);
  }
}

TEST(Subset, KeepsClassBalance) {
  std::vector<Example> examples;
  for (std::size_t i = 0; i < 10000; ++i) {
    examples.push_back({i, {0.0}, static_cast<int>(i % 10)});
  }
  const Dataset parent({1, 1, 1}, 10, std::move(examples));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = subset(parent, 100, seed);
    std::vector<int> counts(10, 0);
    for (const auto& ex : s.examples()) ++counts[ex.true_label];
    for (int c : counts) ASSERT_LE(std::abs(c - 10), 15) << "seed " << seed;
  }
}

TEST(Subset, NestedSourceIdsPointAtOriginal) {
  const auto ds = stripes_dataset(40, 2);
  const auto a = subset(ds, 20, 1);
  const auto b = slice(a, 5, 10);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_EQ(b[i].pixels, ds[b.source_id(i)].pixels);
  }
  EXPECT_THROW(slice(a, 15, 6), Error);
}

TEST(Export, RoundTrip) {
  TempDir dir;
  const auto ds = subset(stripes_dataset(12, 3), 8, 11);
  export_dataset(ds, dir / "out.csv", 11);
  const auto back = load_exported(dir / "out.csv");
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.shape(), ds.shape());
  EXPECT_EQ(back.n_classes(), ds.n_classes());
  EXPECT_EQ(back.source_ids(), ds.source_ids());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back[i].true_label, ds[i].true_label);
    for (std::size_t p = 0; p < ds[i].pixels.size(); ++p) {
      EXPECT_NEAR(back[i].pixels[p], ds[i].pixels[p], 1e-9);
    }
  }
  EXPECT_NE(read_text(dir / "out.json").find("\"seed\": 11"), std::string::npos);
}

TEST(Dataset, ValidatesExamples) {
  EXPECT_THROW(Dataset({1, 2, 1}, 2, {{0, {0.0, 1.5}, 0}}), Error);
  EXPECT_THROW(Dataset({1, 2, 1}, 2, {{0, {0.0}, 0}}), Error);
  EXPECT_THROW(Dataset({1, 2, 1}, 2, {{0, {0.0, 0.1}, 2}}), Error);
  const Dataset ok({1, 2, 1}, 2, {{9, {0.0, 0.1}, 1}});
  EXPECT_EQ(ok[0].id, 0u);
  try {
    ok.at(1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingId);
  }
}
