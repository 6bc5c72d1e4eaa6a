#include "hclr/idx.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "hclr/errors.hpp"

namespace hclr {

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open IDX file " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset) {
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

std::string hex(std::uint32_t v) {
    std::ostringstream s;
    s << "0x" << std::hex << v;
    return s.str();
}

// Validates the header and payload length; returns the dimension sizes.
std::vector<std::uint32_t> parse_header(const std::vector<unsigned char>& buf,
                                        std::uint32_t expected_magic,
                                        const std::filesystem::path& path) {
    if (buf.size() < 4) throw TruncatedFile(path.string() + ": file shorter than IDX magic");
    const std::uint32_t magic = read_be32(buf, 0);
    if (magic != expected_magic) {
        throw BadMagic(path.string() + ": magic " + hex(magic) + ", expected " + hex(expected_magic));
    }
    const std::size_t dims = expected_magic & 0xff;
    if (buf.size() < 4 + 4 * dims) throw TruncatedFile(path.string() + ": truncated IDX header");
    std::vector<std::uint32_t> sizes(dims);
    std::size_t payload = 1;
    for (std::size_t d = 0; d < dims; ++d) {
        sizes[d] = read_be32(buf, 4 + 4 * d);
        payload *= sizes[d];
    }
    if (buf.size() < 4 + 4 * dims + payload) {
        throw TruncatedFile(path.string() + ": payload has " +
                            std::to_string(buf.size() - 4 - 4 * dims) + " bytes, header declares " +
                            std::to_string(payload));
    }
    return sizes;
}

}  // namespace

std::vector<Tensor> load_idx_images(const std::filesystem::path& path) {
    const auto buf = read_all(path);
    const auto sizes = parse_header(buf, kIdxImageMagic, path);
    const std::size_t count = sizes[0], rows = sizes[1], cols = sizes[2];
    if (count > 0 && (rows == 0 || cols == 0)) {
        throw DimensionMismatch(path.string() + ": zero-sized image dimension");
    }
    std::vector<Tensor> images;
    images.reserve(count);
    std::size_t offset = 16;
    for (std::size_t n = 0; n < count; ++n) {
        std::vector<double> px(rows * cols);
        for (auto& p : px) p = buf[offset++] / 255.0;
        images.push_back(Tensor::matrix(rows, cols, std::move(px)));
    }
    return images;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
    const auto buf = read_all(path);
    const auto sizes = parse_header(buf, kIdxLabelMagic, path);
    std::vector<int> labels(sizes[0]);
    for (std::size_t n = 0; n < labels.size(); ++n) {
        labels[n] = buf[8 + n];
        if (labels[n] > 9) {
            throw DimensionMismatch(path.string() + ": label " + std::to_string(labels[n]) +
                                    " outside [0,9]");
        }
    }
    return labels;
}

void write_idx_images(const std::filesystem::path& path, const std::vector<Tensor>& images) {
    const std::size_t rows = images.empty() ? 0 : images[0].rows();
    const std::size_t cols = images.empty() ? 0 : images[0].cols();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    put_be32(out, kIdxImageMagic);
    put_be32(out, static_cast<std::uint32_t>(images.size()));
    put_be32(out, static_cast<std::uint32_t>(rows));
    put_be32(out, static_cast<std::uint32_t>(cols));
    for (const auto& img : images) {
        if (img.rank() != 2 || img.rows() != rows || img.cols() != cols) {
            throw DimensionMismatch("all IDX images must share one rows x cols shape");
        }
        for (double v : img.values()) {
            out.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
        }
    }
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    put_be32(out, kIdxLabelMagic);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) {
        if (l < 0 || l > 255) throw std::out_of_range("IDX label must fit in one byte");
        out.put(static_cast<char>(l));
    }
}

}  // namespace hclr
