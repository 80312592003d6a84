#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nsatp/prioritizer.hpp"

namespace nsatp {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t size() const noexcept { return height * width * channels; }
  /// Flat offset of (x, y, c) in row-major height x width x channels order.
  std::size_t index(std::size_t x, std::size_t y, std::size_t c) const noexcept {
    return (y * width + x) * channels + c;
  }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Pixels are normalized to [0, 1] and stored row-major (y, x, channel).
struct Example {
  ExampleId id = 0;
  std::vector<double> pixels;
  int true_label = 0;
};

/// Immutable after loading. Ids are 0..size()-1 in order.
class Dataset {
 public:
  Dataset(ImageShape shape, int n_classes, std::vector<Example> examples,
          std::vector<ExampleId> source_ids = {}, std::string source = {});

  const ImageShape& shape() const noexcept { return shape_; }
  int n_classes() const noexcept { return n_classes_; }
  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }
  const Example& operator[](std::size_t i) const { return examples_[i]; }
  const Example& at(ExampleId id) const;
  const std::vector<Example>& examples() const noexcept { return examples_; }

  /// Id each example had in the dataset it was drawn from (identity for
  /// freshly loaded data).
  ExampleId source_id(std::size_t i) const { return source_ids_[i]; }
  const std::vector<ExampleId>& source_ids() const noexcept { return source_ids_; }
  const std::string& source() const noexcept { return source_; }

 private:
  ImageShape shape_;
  int n_classes_;
  std::vector<Example> examples_;
  std::vector<ExampleId> source_ids_;
  std::string source_;
};

/// Big-endian IDX pair (images 0x00000803, labels 0x00000801). Files may be
/// gzip-compressed; compression is detected from the content.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, int n_classes = 10);

/// Rows `label,p_0,...,p_{hwc-1}`. Pixel values are taken as 8-bit and
/// divided by 255 when the file's maximum pixel exceeds 1.
Dataset load_csv(const std::filesystem::path& path, ImageShape shape, int n_classes);

/// Seeded sample of k examples without replacement; ids are reassigned
/// contiguously and the parent ids kept as source ids.
Dataset subset(const Dataset& ds, std::size_t k, std::uint64_t seed);

/// Examples at positions [first, first + count) of `ds`, reindexed.
Dataset slice(const Dataset& ds, std::size_t first, std::size_t count);

/// Writes `<stem>.csv` in the load_csv format plus `<stem>.json` carrying
/// shape, n_classes, source path, seed and the source id of every row.
void export_dataset(const Dataset& ds, const std::filesystem::path& csv_path,
                    std::optional<std::uint64_t> seed = std::nullopt);

/// Reloads an export_dataset pair, restoring shape, classes and source ids.
Dataset load_exported(const std::filesystem::path& csv_path);

}  // namespace nsatp
