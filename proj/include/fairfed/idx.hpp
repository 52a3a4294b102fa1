#pragma once

// IDX container loading (the MNIST interchange format): big-endian
// 4-byte magic, one big-endian 4-byte extent per tensor axis, then raw
// unsigned bytes. Images use magic 0x00000803 (count, rows, cols),
// label vectors 0x00000801 (count).

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/errors.hpp"

namespace fairfed {

namespace idx_detail {

inline constexpr std::uint32_t image_magic = 0x00000803;
inline constexpr std::uint32_t label_magic = 0x00000801;

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                               const std::string& path) {
    if (offset + 4 > bytes.size())
        throw FormatError(path + ": truncated at byte " + std::to_string(offset) +
                          " (need 4 more bytes)");
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

} // namespace idx_detail

// Loads the first `limit` samples from an IDX image/label file pair.
// Pixels are scaled to [0,1]; the group index defaults to the label.
// If the files hold fewer than `limit` samples, all of them are used.
inline GroupedDataset load_idx(const std::string& images_path, const std::string& labels_path,
                               std::size_t limit) {
    using namespace idx_detail;
    if (limit == 0) throw FormatError("limit must be positive (a dataset cannot be empty)");

    const auto image_bytes = read_file(images_path);
    const auto label_bytes = read_file(labels_path);

    char hex[16];
    const std::uint32_t img_magic = read_be32(image_bytes, 0, images_path);
    if (img_magic != image_magic) {
        std::snprintf(hex, sizeof(hex), "0x%08X", img_magic);
        throw FormatError(images_path + ": bad magic " + hex + " at byte 0");
    }
    const std::uint32_t lbl_magic = read_be32(label_bytes, 0, labels_path);
    if (lbl_magic != label_magic) {
        std::snprintf(hex, sizeof(hex), "0x%08X", lbl_magic);
        throw FormatError(labels_path + ": bad magic " + hex + " at byte 0");
    }

    const std::uint32_t num_images = read_be32(image_bytes, 4, images_path);
    const std::uint32_t rows = read_be32(image_bytes, 8, images_path);
    const std::uint32_t cols = read_be32(image_bytes, 12, images_path);
    const std::uint32_t num_labels = read_be32(label_bytes, 4, labels_path);
    if (num_images != num_labels)
        throw FormatError("image count " + std::to_string(num_images) + " (byte 4 of " +
                          images_path + ") does not match label count " +
                          std::to_string(num_labels));

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (pixels == 0) throw FormatError(images_path + ": zero image dimensions at byte 8");
    const std::size_t take = std::min<std::size_t>(limit, num_images);
    if (image_bytes.size() < 16 + pixels * take)
        throw FormatError(images_path + ": truncated pixel payload at byte " +
                          std::to_string(image_bytes.size()) + " (expected at least " +
                          std::to_string(16 + pixels * take) + " bytes)");
    if (label_bytes.size() < 8 + take)
        throw FormatError(labels_path + ": truncated label payload at byte " +
                          std::to_string(label_bytes.size()) + " (expected at least " +
                          std::to_string(8 + take) + " bytes)");

    GroupedDataset ds;
    ds.feature_dim = static_cast<int>(pixels);
    int max_label = 0;
    ds.samples.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        Sample s;
        s.label = static_cast<int>(label_bytes[8 + i]);
        s.group = s.label;
        max_label = std::max(max_label, s.label);
        s.features.resize(pixels);
        const std::size_t base = 16 + i * pixels;
        for (std::size_t p = 0; p < pixels; ++p)
            s.features[p] = static_cast<double>(image_bytes[base + p]) / 255.0;
        ds.samples.push_back(std::move(s));
    }
    ds.num_classes = ds.num_groups = max_label + 1;
    ds.validate();
    return ds;
}

// Writes a dataset as an IDX image/label file pair, quantizing features
// to bytes. Feature dimension must factor as rows x cols; callers pass
// the image geometry explicitly.
inline void write_idx(const GroupedDataset& dataset, const std::string& images_path,
                      const std::string& labels_path, int rows, int cols) {
    using namespace idx_detail;
    if (rows * cols != dataset.feature_dim)
        throw ShapeError("rows*cols must equal feature_dim");
    auto put_be32 = [](std::ofstream& out, std::uint32_t v) {
        const unsigned char bytes[4] = {
            static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<const char*>(bytes), 4);
    };

    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw Error("cannot open " + images_path + " for writing");
    put_be32(img, image_magic);
    put_be32(img, static_cast<std::uint32_t>(dataset.samples.size()));
    put_be32(img, static_cast<std::uint32_t>(rows));
    put_be32(img, static_cast<std::uint32_t>(cols));
    for (const auto& s : dataset.samples)
        for (double v : s.features) {
            const double clamped = std::min(1.0, std::max(0.0, v));
            img.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
        }

    std::ofstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw Error("cannot open " + labels_path + " for writing");
    put_be32(lbl, label_magic);
    put_be32(lbl, static_cast<std::uint32_t>(dataset.samples.size()));
    for (const auto& s : dataset.samples) lbl.put(static_cast<char>(s.label));
}

} // namespace fairfed
