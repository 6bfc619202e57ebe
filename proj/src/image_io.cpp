#include "leaf/image_io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace leaf {

namespace {

class HeaderReader {
public:
    explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    Index number(const char* what) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size()) throw ParseError(std::string("unexpected end of header reading ") + what, pos_);
        if (!std::isdigit(bytes_[pos_])) throw ParseError(std::string("expected digits for ") + what, pos_);
        Index v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > (Index{1} << 28)) throw ParseError(std::string("value too large for ") + what, pos_);
            ++pos_;
        }
        return v;
    }

    void single_whitespace() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw ParseError("expected whitespace after maxval", pos_);
        }
        ++pos_;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Image8 decode_netpbm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2) throw ParseError("missing magic number", 0);
    if (bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) throw ParseError("unsupported magic number", 0);
    Image8 img;
    img.channels = bytes[1] == '6' ? 3 : 1;
    HeaderReader r(bytes);
    r.advance(2);
    img.width = r.number("width");
    img.height = r.number("height");
    const std::size_t maxval_at = r.pos();
    const Index maxval = r.number("maxval");
    if (img.width == 0 || img.height == 0) throw ParseError("zero image extent", maxval_at);
    if (maxval != 255) throw ParseError("only maxval 255 is supported", maxval_at);
    r.single_whitespace();
    const std::size_t count = static_cast<std::size_t>(img.width * img.height * img.channels);
    if (bytes.size() - r.pos() < count) {
        throw ParseError("truncated payload: expected " + std::to_string(count) + " bytes, found " +
                             std::to_string(bytes.size() - r.pos()),
                         bytes.size());
    }
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos()),
                      bytes.begin() + static_cast<std::ptrdiff_t>(r.pos() + count));
    return img;
}

std::vector<std::uint8_t> encode_netpbm(const Image8& image) {
    if (image.channels != 1 && image.channels != 3) throw ShapeError("netpbm images have 1 or 3 channels");
    if (static_cast<Index>(image.pixels.size()) != image.width * image.height * image.channels) {
        throw ShapeError("pixel buffer does not match image extents");
    }
    const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(image.width) +
                               " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

Image8 read_netpbm(const std::filesystem::path& path) {
    try {
        return decode_netpbm(read_bytes(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.offset);
    }
}

void write_netpbm(const std::filesystem::path& path, const Image8& image) {
    const auto bytes = encode_netpbm(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + path.string());
}

Tensor image_to_tensor(const Image8& image) {
    Tensor t(Shape{image.channels, image.height, image.width});
    const Index plane = image.height * image.width;
    for (Index i = 0; i < plane; ++i)
        for (Index c = 0; c < image.channels; ++c)
            t[c * plane + i] = static_cast<Real>(image.pixels[static_cast<std::size_t>(i * image.channels + c)]) /
                               Real(255);
    return t;
}

Image8 tensor_to_image(const Tensor& t) {
    if (t.rank() != 3 || (t.dim(0) != 1 && t.dim(0) != 3)) {
        throw ShapeError("expected [1,H,W] or [3,H,W], got " + shape_str(t.shape()));
    }
    Image8 img{t.dim(2), t.dim(1), t.dim(0), {}};
    const Index plane = img.height * img.width;
    img.pixels.resize(static_cast<std::size_t>(plane * img.channels));
    for (Index i = 0; i < plane; ++i)
        for (Index c = 0; c < img.channels; ++c) {
            const double v = std::clamp(static_cast<double>(t[c * plane + i]), 0.0, 1.0);
            img.pixels[static_cast<std::size_t>(i * img.channels + c)] =
                static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    return img;
}

Tensor read_ppm(const std::filesystem::path& path) {
    const Image8 img = read_netpbm(path);
    if (img.channels != 3) throw DataError(path.string() + ": expected a P6 color image");
    return image_to_tensor(img);
}

Tensor read_pgm(const std::filesystem::path& path) {
    const Image8 img = read_netpbm(path);
    if (img.channels != 1) throw DataError(path.string() + ": expected a P5 grayscale image");
    return image_to_tensor(img);
}

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("write_ppm expects [3,H,W]");
    write_netpbm(path, tensor_to_image(rgb));
}

void write_pgm(const std::filesystem::path& path, const Tensor& gray) {
    if (gray.rank() != 3 || gray.dim(0) != 1) throw ShapeError("write_pgm expects [1,H,W]");
    write_netpbm(path, tensor_to_image(gray));
}

}  // namespace leaf
