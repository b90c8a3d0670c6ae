#include "rekd/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace rekd {

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string token(std::istream& in)
{
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') { }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(char(ch));
    }
    return tok;
}

int header_int(std::istream& in, const std::string& path)
{
    const std::string tok = token(in);
    try {
        return std::stoi(tok);
    } catch (const std::exception&) {
        throw Error(ErrorCode::truncated, path + ": malformed PGM header");
    }
}

std::uint8_t to_byte(float v) { return std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

} // namespace

Tensor<float> read_pgm(const std::string& path)
{
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::missing_file, "no such image " + path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path);
    if (token(in) != "P5") throw Error(ErrorCode::bad_magic, path + " is not a binary PGM (P5)");
    const int w = header_int(in, path), h = header_int(in, path), maxval = header_int(in, path);
    if (w <= 0 || h <= 0) throw Error(ErrorCode::invalid_argument, path + ": bad PGM extents");
    if (maxval != 255) throw Error(ErrorCode::invalid_argument, path + ": only 8-bit PGM is supported");
    std::vector<unsigned char> bytes(std::size_t(w) * h);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size())))
        throw Error(ErrorCode::truncated, path + ": pixel data is truncated");
    Tensor<float> img({h, w});
    for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = float(bytes[i]) / 255.0f;
    return img;
}

void write_pgm(const std::string& path, const Tensor<float>& img)
{
    if (img.rank() != 2) throw Error(ErrorCode::shape_mismatch, "write_pgm expects an [H,W] image");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << "P5\n" << img.dim(1) << " " << img.dim(0) << "\n255\n";
    std::vector<char> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = char(to_byte(img[i]));
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "failed writing " + path);
}

Tensor<float> quantize8(const Tensor<float>& img)
{
    Tensor<float> out(img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = float(to_byte(img[i])) / 255.0f;
    return out;
}

} // namespace rekd
