#include <cstdint>
#include <string>

#include "plate/datasets.hpp"
#include "plate/error.hpp"
#include "plate/tensor_io.hpp"

namespace plate {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::string& file) {
    if (offset + 4 > bytes.size()) throw FormatError(file + ": truncated header", bytes.size());
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
    return v;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const std::string img = read_file(images);
    const std::string lab = read_file(labels);
    const std::string img_name = images.string();
    const std::string lab_name = labels.string();

    if (read_be32(img, 0, img_name) != kImageMagic)
        throw FormatError(img_name + ": bad magic (expected 0x00000803)", 0);
    if (read_be32(lab, 0, lab_name) != kLabelMagic)
        throw FormatError(lab_name + ": bad magic (expected 0x00000801)", 0);
    const std::size_t n = read_be32(img, 4, img_name);
    const std::size_t rows = read_be32(img, 8, img_name);
    const std::size_t cols = read_be32(img, 12, img_name);
    const std::size_t n_labels = read_be32(lab, 4, lab_name);
    if (n != n_labels)
        throw FormatError("image count " + std::to_string(n) + " does not match label count " +
                              std::to_string(n_labels) + " in " + lab_name,
                          4);
    if (n == 0 || rows == 0 || cols == 0) throw FormatError(img_name + ": empty image set", 4);
    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + n * pixels) throw FormatError(img_name + ": truncated pixel data", img.size());
    if (lab.size() < 8 + n) throw FormatError(lab_name + ": truncated label data", lab.size());
    if (img.size() != 16 + n * pixels) throw FormatError(img_name + ": trailing bytes after pixel data", 16 + n * pixels);
    if (lab.size() != 8 + n) throw FormatError(lab_name + ": trailing bytes after label data", 8 + n);

    Dataset d;
    d.inputs = Matrix(n, pixels);
    for (std::size_t i = 0; i < n * pixels; ++i)
        d.inputs.values()[i] = static_cast<double>(static_cast<unsigned char>(img[16 + i])) / 255.0;
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<unsigned char>(lab[8 + i]);
        if (y[i] > 9) throw FormatError(lab_name + ": label " + std::to_string(y[i]) + " outside 0..9", 8 + i);
    }
    d.targets = std::move(y);
    d.num_classes = 10;
    return d;
}

}  // namespace plate
