#include "nsatp/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <string>

#include "nsatp/csv.hpp"
#include "nsatp/error.hpp"
#include "nsatp/random.hpp"

namespace nsatp {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// gzread passes uncompressed files through unchanged.
std::vector<unsigned char> read_maybe_gzipped(const std::filesystem::path& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes;
  std::vector<unsigned char> chunk(1 << 16);
  while (true) {
    const int n = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      int errnum = 0;
      std::string msg = gzerror(file, &errnum);
      gzclose(file);
      throw Error(ErrorCode::TruncatedFile, path.string() + ": " + msg);
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(file);
  return bytes;
}

class BigEndianReader {
 public:
  BigEndianReader(const std::vector<unsigned char>& bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  const unsigned char* take(std::size_t n) {
    need(n);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::TruncatedFile, name_ + " ends after " + std::to_string(bytes_.size()) +
                                                " bytes");
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

std::vector<ExampleId> identity_ids(std::size_t n) {
  std::vector<ExampleId> ids(n);
  std::iota(ids.begin(), ids.end(), ExampleId{0});
  return ids;
}

}  // namespace

Dataset::Dataset(ImageShape shape, int n_classes, std::vector<Example> examples,
                 std::vector<ExampleId> source_ids, std::string source)
    : shape_(shape),
      n_classes_(n_classes),
      examples_(std::move(examples)),
      source_ids_(std::move(source_ids)),
      source_(std::move(source)) {
  if (n_classes_ < 2) throw Error(ErrorCode::InvalidParameter, "n_classes must be at least 2");
  if (source_ids_.empty()) source_ids_ = identity_ids(examples_.size());
  if (source_ids_.size() != examples_.size()) {
    throw Error(ErrorCode::CountMismatch, "source id count differs from example count");
  }
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    auto& ex = examples_[i];
    ex.id = i;
    if (ex.pixels.size() != shape_.size()) {
      throw Error(ErrorCode::ShapeMismatch, "example " + std::to_string(i) + " has " +
                                                std::to_string(ex.pixels.size()) + " pixels");
    }
    if (ex.true_label < 0 || ex.true_label >= n_classes_) {
      throw Error(ErrorCode::LabelOutOfRange,
                  "example " + std::to_string(i) + " label " + std::to_string(ex.true_label));
    }
    for (double v : ex.pixels) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::InvalidParameter,
                    "example " + std::to_string(i) + " has a pixel outside [0,1]");
      }
    }
  }
}

const Example& Dataset::at(ExampleId id) const {
  if (id >= examples_.size()) {
    throw Error(ErrorCode::MissingId, "no example with id " + std::to_string(id));
  }
  return examples_[id];
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, int n_classes) {
  const auto image_bytes = read_maybe_gzipped(images_path);
  const auto label_bytes = read_maybe_gzipped(labels_path);
  BigEndianReader images(image_bytes, images_path.string());
  BigEndianReader labels(label_bytes, labels_path.string());

  if (const auto magic = images.u32(); magic != kImageMagic) {
    throw Error(ErrorCode::BadMagic, images_path.string() + " has magic " + hex(magic));
  }
  if (const auto magic = labels.u32(); magic != kLabelMagic) {
    throw Error(ErrorCode::BadMagic, labels_path.string() + " has magic " + hex(magic));
  }
  const std::size_t count = images.u32();
  const std::size_t rows = images.u32();
  const std::size_t cols = images.u32();
  const std::size_t label_count = labels.u32();
  if (count != label_count) {
    throw Error(ErrorCode::CountMismatch, std::to_string(count) + " images but " +
                                              std::to_string(label_count) + " labels");
  }

  const ImageShape shape{rows, cols, 1};
  std::vector<Example> examples(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* raw = images.take(shape.size());
    examples[i].pixels.resize(shape.size());
    for (std::size_t p = 0; p < shape.size(); ++p) examples[i].pixels[p] = raw[p] / 255.0;
    examples[i].true_label = *labels.take(1);
    if (examples[i].true_label >= n_classes) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(examples[i].true_label) +
                                                  " at index " + std::to_string(i));
    }
  }
  return Dataset(shape, n_classes, std::move(examples), {}, images_path.string());
}

Dataset load_csv(const std::filesystem::path& path, ImageShape shape, int n_classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());

  std::vector<Example> examples;
  double max_pixel = 0.0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = csv::split(line);
    if (cells.size() != shape.size() + 1) {
      throw Error(ErrorCode::RowLengthMismatch,
                  path.string() + ":" + std::to_string(line_no) + " has " +
                      std::to_string(cells.size() - 1) + " pixels, expected " +
                      std::to_string(shape.size()));
    }
    Example ex;
    const auto label = csv::parse_int(cells[0]);
    if (label < 0 || label >= n_classes) {
      throw Error(ErrorCode::LabelOutOfRange,
                  path.string() + ":" + std::to_string(line_no) + " label " + std::to_string(label));
    }
    ex.true_label = static_cast<int>(label);
    ex.pixels.reserve(shape.size());
    for (std::size_t i = 1; i < cells.size(); ++i) {
      const double v = csv::parse_double(cells[i]);
      if (!std::isfinite(v) || v < 0.0) {
        throw Error(ErrorCode::NonNumericCell,
                    path.string() + ":" + std::to_string(line_no) + " pixel out of range");
      }
      max_pixel = std::max(max_pixel, v);
      ex.pixels.push_back(v);
    }
    examples.push_back(std::move(ex));
  }

  if (max_pixel > 1.0) {
    if (max_pixel > 255.0) {
      throw Error(ErrorCode::NonNumericCell, path.string() + " has pixels above 255");
    }
    for (auto& ex : examples) {
      for (auto& v : ex.pixels) v /= 255.0;
    }
  }
  return Dataset(shape, n_classes, std::move(examples), {}, path.string());
}

Dataset subset(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  if (k > ds.size()) {
    throw Error(ErrorCode::KTooLarge, "subset of " + std::to_string(k) + " from " +
                                          std::to_string(ds.size()) + " examples");
  }
  Rng rng(seed);
  std::vector<Example> examples;
  std::vector<ExampleId> sources;
  examples.reserve(k);
  sources.reserve(k);
  for (std::size_t idx : rng.sample_indices(ds.size(), k)) {
    examples.push_back(ds[idx]);
    sources.push_back(ds.source_id(idx));
  }
  return Dataset(ds.shape(), ds.n_classes(), std::move(examples), std::move(sources), ds.source());
}

Dataset slice(const Dataset& ds, std::size_t first, std::size_t count) {
  if (first > ds.size() || count > ds.size() - first) {
    throw Error(ErrorCode::KTooLarge, "slice [" + std::to_string(first) + ", " +
                                          std::to_string(first + count) + ") of " +
                                          std::to_string(ds.size()) + " examples");
  }
  std::vector<Example> examples(ds.examples().begin() + first,
                                ds.examples().begin() + first + count);
  std::vector<ExampleId> sources(ds.source_ids().begin() + first,
                                 ds.source_ids().begin() + first + count);
  return Dataset(ds.shape(), ds.n_classes(), std::move(examples), std::move(sources), ds.source());
}

void export_dataset(const Dataset& ds, const std::filesystem::path& csv_path,
                    std::optional<std::uint64_t> seed) {
  {
    std::ofstream out(csv_path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + csv_path.string());
    for (const auto& ex : ds.examples()) {
      out << ex.true_label;
      for (double v : ex.pixels) out << ',' << csv::format_double(v);
      out << '\n';
    }
  }
  nlohmann::json meta;
  meta["shape"] = {ds.shape().height, ds.shape().width, ds.shape().channels};
  meta["n_classes"] = ds.n_classes();
  meta["source"] = ds.source();
  meta["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
  meta["source_ids"] = ds.source_ids();
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + sidecar.string());
  out << meta.dump(2) << '\n';
}

Dataset load_exported(const std::filesystem::path& csv_path) {
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  std::ifstream in(sidecar);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + sidecar.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
    const auto dims = meta.at("shape").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw Error(ErrorCode::CorruptFile, sidecar.string() + ": bad shape");
    const ImageShape shape{dims[0], dims[1], dims[2]};
    const Dataset loaded = load_csv(csv_path, shape, meta.at("n_classes").get<int>());
    auto sources = meta.at("source_ids").get<std::vector<ExampleId>>();
    return Dataset(shape, loaded.n_classes(), loaded.examples(), std::move(sources),
                   meta.at("source").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, sidecar.string() + ": " + e.what());
  }
}

}  // namespace nsatp
