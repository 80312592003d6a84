#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "nsatp/dataset.hpp"
#include "nsatp/oracle.hpp"

namespace nsatp::test {

inline const std::vector<double> kConfidentA{0, 0, 0, 0.18, 0.81, 0, 0, 0, 0.01, 0};
inline const std::vector<double> kConfidentB{0, 0, 0, 0, 0.95, 0.01, 0, 0, 0.01, 0.03};

inline std::vector<double> one_hot(std::size_t n, std::size_t hot) {
  std::vector<double> v(n, 0.0);
  v[hot] = 1.0;
  return v;
}

inline std::vector<double> uniform_vector(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("nsatp-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Oracle computing its answer from the pixels with a plain function.
class FnOracle final : public Oracle {
 public:
  using Fn = std::function<std::vector<double>(std::span<const double>)>;
  explicit FnOracle(Fn fn) : fn_(std::move(fn)) {}

  ProbabilityVector predict(std::span<const double> pixels, const ImageShape&) override {
    ++queries;
    return ProbabilityVector(fn_(pixels));
  }
  std::string_view kind() const noexcept override { return "test"; }

  std::size_t queries = 0;

 private:
  Fn fn_;
};

inline FnOracle constant_oracle(std::vector<double> probs) {
  return FnOracle([probs = std::move(probs)](std::span<const double>) { return probs; });
}

inline ImageShape small_shape(std::size_t side = 4, std::size_t channels = 1) {
  return {side, side, channels};
}

inline Example blank_example(const ImageShape& shape, int label = 0, double fill = 0.0,
                             ExampleId id = 0) {
  return {id, std::vector<double>(shape.size(), fill), label};
}

/// Tiny dataset whose label is 1 when the image's left half is brighter.
inline Dataset stripes_dataset(std::size_t n, std::uint64_t seed, std::size_t side = 6) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ImageShape shape{side, side, 1};
  std::vector<Example> examples;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    Example ex{i, std::vector<double>(shape.size()), label};
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const bool left = x < side / 2;
        const double base = (left == (label == 1)) ? 0.75 : 0.25;
        ex.pixels[shape.index(x, y, 0)] = std::clamp(base + 0.2 * (u(gen) - 0.5), 0.0, 1.0);
      }
    }
    examples.push_back(std::move(ex));
  }
  return Dataset(shape, 2, std::move(examples));
}

/// Writes `ds` as `label,p_0,...` rows of 8-bit pixel values.
inline void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  for (const auto& ex : ds.examples()) {
    out << ex.true_label;
    for (double v : ex.pixels) out << ',' << static_cast<int>(v * 255.0 + 0.5);
    out << '\n';
  }
}

}  // namespace nsatp::test
