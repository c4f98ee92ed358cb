#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ulab/core/error.hpp"
#include "ulab/data/dataset.hpp"

namespace ulab::data {

// IDX container (the MNIST family): big-endian magic + dims, then raw
// unsigned bytes. Images use magic 0x00000803 (3-D u8), labels 0x00000801.
namespace idx {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

inline std::uint32_t read_be32(std::ifstream& f, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  ULAB_CHECK(f.gcount() == 4, path + ": truncated at offset " + std::to_string(offset));
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline void write_be32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

struct Images {
  std::uint32_t count, rows, cols;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
};

inline Images read_images(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  ULAB_CHECK(f.good(), "cannot open IDX image file: " + path);
  const std::uint32_t magic = read_be32(f, path, 0);
  ULAB_CHECK(magic == kImagesMagic,
             path + ": bad IDX image magic at offset 0 (got 0x" + hex64(magic).substr(8) + ")");
  Images img;
  img.count = read_be32(f, path, 4);
  img.rows = read_be32(f, path, 8);
  img.cols = read_be32(f, path, 12);
  const std::size_t n =
      static_cast<std::size_t>(img.count) * img.rows * img.cols;
  img.pixels.resize(n);
  f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
  ULAB_CHECK(static_cast<std::size_t>(f.gcount()) == n,
             path + ": truncated payload at offset " +
                 std::to_string(16 + static_cast<std::size_t>(f.gcount())));
  return img;
}

inline std::vector<std::uint8_t> read_labels(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  ULAB_CHECK(f.good(), "cannot open IDX label file: " + path);
  const std::uint32_t magic = read_be32(f, path, 0);
  ULAB_CHECK(magic == kLabelsMagic,
             path + ": bad IDX label magic at offset 0 (got 0x" + hex64(magic).substr(8) + ")");
  const std::uint32_t count = read_be32(f, path, 4);
  std::vector<std::uint8_t> labels(count);
  f.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count));
  ULAB_CHECK(static_cast<std::size_t>(f.gcount()) == count,
             path + ": truncated payload at offset " +
                 std::to_string(8 + static_cast<std::size_t>(f.gcount())));
  return labels;
}

inline void write_images(const std::string& path, const Images& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  ULAB_CHECK(f.good(), "cannot open IDX image file for writing: " + path);
  write_be32(f, kImagesMagic);
  write_be32(f, img.count);
  write_be32(f, img.rows);
  write_be32(f, img.cols);
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  ULAB_CHECK(f.good(), "IDX image write failed: " + path);
}

inline void write_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  ULAB_CHECK(f.good(), "cannot open IDX label file for writing: " + path);
  write_be32(f, kLabelsMagic);
  write_be32(f, static_cast<std::uint32_t>(labels.size()));
  f.write(reinterpret_cast<const char*>(labels.data()),
          static_cast<std::streamsize>(labels.size()));
  ULAB_CHECK(f.good(), "IDX label write failed: " + path);
}

}  // namespace idx

// Pixel values scaled to [0, 1]; class count inferred from the labels.
// Ids are assigned sequentially from `id_offset`.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::uint32_t id_offset = 0) {
  const auto img = idx::read_images(images_path);
  const auto raw_labels = idx::read_labels(labels_path);
  ULAB_CHECK(img.count == raw_labels.size(), "IDX image/label counts disagree");
  Dataset d;
  d.provenance = "idx";
  d.x = Tensor<float>::zeros({img.count, 1, img.rows, img.cols});
  d.labels.resize(img.count);
  d.ids.resize(img.count);
  int max_label = 0;
  for (std::size_t i = 0; i < raw_labels.size(); ++i)
    max_label = std::max(max_label, static_cast<int>(raw_labels[i]));
  d.classes = max_label + 1;
  for (std::size_t i = 0; i < img.count; ++i) {
    d.labels[i] = static_cast<int>(raw_labels[i]);
    d.ids[i] = id_offset + static_cast<std::uint32_t>(i);
    const std::size_t row = static_cast<std::size_t>(img.rows) * img.cols;
    for (std::size_t k = 0; k < row; ++k)
      d.x.row(i)[k] = static_cast<float>(img.pixels[i * row + k]) / 255.0f;
  }
  d.validate();
  return d;
}

}  // namespace ulab::data
