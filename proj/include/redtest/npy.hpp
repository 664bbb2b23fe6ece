#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "redtest/errors.hpp"

namespace redtest {

// A tensor straight off disk: shape plus C-order payload, promoted to
// 64-bit reals.
struct RawTensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    std::size_t size() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }
};

// NPY v1.0 layout:
//   bytes 0-5   magic 0x93 'NUMPY'
//   bytes 6-7   version (1, 0)
//   bytes 8-9   little-endian u16 header length H
//   H bytes     ASCII dict {'descr': '<f8', 'fortran_order': False,
//               'shape': (n, p), } space-padded so 10+H is a multiple of 64,
//               terminated by '\n'
//   payload     raw little-endian C-order scalars
// Only little-endian float32/float64, C-order, v1.0 files are accepted.

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are read/written as raw little-endian doubles");

inline std::string npy_shape_tuple(const std::vector<std::size_t> &shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (i + 1 < shape.size()) s += ", ";
    }
    if (shape.size() == 1) s += ",";
    s += ")";
    return s;
}

// Pulls the value substring following "'key':" out of the header dict.
inline std::string npy_dict_value(const std::string &header, const std::string &key,
                                  const std::filesystem::path &path) {
    const std::string needle = "'" + key + "':";
    const std::size_t at = header.find(needle);
    if (at == std::string::npos)
        throw Error(ErrorCode::UnsupportedLayout,
                    path.string() + ": header is missing '" + key + "'");
    std::size_t begin = at + needle.size();
    while (begin < header.size() && header[begin] == ' ') ++begin;
    std::size_t end = begin;
    if (begin < header.size() && header[begin] == '(') {
        end = header.find(')', begin);
        if (end == std::string::npos)
            throw Error(ErrorCode::UnsupportedLayout, path.string() + ": unterminated shape tuple");
        ++end;
    } else {
        while (end < header.size() && header[end] != ',' && header[end] != '}' &&
               header[end] != ' ')
            ++end;
    }
    return header.substr(begin, end - begin);
}

inline std::vector<std::size_t> npy_parse_shape(const std::string &tuple,
                                                const std::filesystem::path &path) {
    std::vector<std::size_t> shape;
    std::size_t i = 0;
    if (tuple.empty() || tuple.front() != '(' || tuple.back() != ')')
        throw Error(ErrorCode::UnsupportedLayout, path.string() + ": malformed shape tuple");
    ++i;
    while (i < tuple.size() - 1) {
        if (tuple[i] == ' ' || tuple[i] == ',') {
            ++i;
            continue;
        }
        std::size_t value = 0;
        bool any = false;
        while (i < tuple.size() - 1 && tuple[i] >= '0' && tuple[i] <= '9') {
            value = value * 10 + static_cast<std::size_t>(tuple[i] - '0');
            ++i;
            any = true;
        }
        if (!any)
            throw Error(ErrorCode::UnsupportedLayout, path.string() + ": malformed shape tuple");
        shape.push_back(value);
    }
    return shape;
}

}  // namespace detail

inline RawTensor read_tensor(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed for " + path.string());

    static const char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};
    if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 6) != 0)
        throw Error(ErrorCode::BadMagic, path.string() + ": not an NPY file");
    if (bytes.size() < 10)
        throw Error(ErrorCode::Truncated, path.string() + ": incomplete NPY preamble");
    if (bytes[6] != 1 || bytes[7] != 0)
        throw Error(ErrorCode::UnsupportedLayout,
                    path.string() + ": only NPY version 1.0 is supported");

    const std::size_t header_len = static_cast<std::size_t>(static_cast<unsigned char>(bytes[8])) |
                                   (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9]))
                                    << 8);
    if (bytes.size() < 10 + header_len)
        throw Error(ErrorCode::Truncated, path.string() + ": header shorter than declared");
    const std::string header(bytes.data() + 10, header_len);

    const std::string descr = detail::npy_dict_value(header, "descr", path);
    const std::string fortran = detail::npy_dict_value(header, "fortran_order", path);
    const std::vector<std::size_t> shape =
        detail::npy_parse_shape(detail::npy_dict_value(header, "shape", path), path);

    if (fortran != "False")
        throw Error(ErrorCode::UnsupportedLayout,
                    path.string() + ": fortran_order=" + fortran + " is not supported");
    std::size_t elem_size;
    if (descr == "'<f8'")
        elem_size = 8;
    else if (descr == "'<f4'")
        elem_size = 4;
    else
        throw Error(ErrorCode::UnsupportedLayout,
                    path.string() + ": dtype " + descr + " is not supported (need '<f4' or '<f8')");

    RawTensor t;
    t.shape = shape;
    const std::size_t count = t.size();
    const std::size_t payload = bytes.size() - 10 - header_len;
    if (payload < count * elem_size)
        throw Error(ErrorCode::Truncated,
                    path.string() + ": payload holds " + std::to_string(payload) +
                        " bytes, shape implies " + std::to_string(count * elem_size));

    t.data.resize(count);
    const char *raw = bytes.data() + 10 + header_len;
    if (elem_size == 8) {
        std::memcpy(t.data.data(), raw, count * 8);
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            float f;
            std::memcpy(&f, raw + i * 4, 4);
            t.data[i] = static_cast<double>(f);
        }
    }
    for (std::size_t i = 0; i < count; ++i)
        if (!std::isfinite(t.data[i]))
            throw Error(ErrorCode::NonFinite, path.string() + ": non-finite value at flat index " +
                                                  std::to_string(i));
    return t;
}

inline void write_tensor(const std::filesystem::path &path, const RawTensor &t) {
    if (t.shape.empty()) throw std::invalid_argument("write_tensor: empty shape");
    if (t.data.size() != t.size())
        throw std::invalid_argument("write_tensor: data length does not match shape");
    for (double v : t.data)
        if (!std::isfinite(v))
            throw Error(ErrorCode::NonFinite, "refusing to write non-finite tensor");

    std::string dict = "{'descr': '<f8', 'fortran_order': False, 'shape': " +
                       detail::npy_shape_tuple(t.shape) + ", }";
    // pad so the full header block (10 + H) lands on a 64-byte boundary,
    // leaving room for the terminating newline
    const std::size_t unpadded = 10 + dict.size() + 1;
    const std::size_t padded = (unpadded + 63) / 64 * 64;
    dict.append(padded - unpadded, ' ');
    dict.push_back('\n');
    const std::size_t header_len = dict.size();
    if (header_len > 0xFFFF) throw Error(ErrorCode::IoFailure, "NPY header too long");

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + tmp.string());
        out.write("\x93NUMPY", 6);
        out.put(1);
        out.put(0);
        out.put(static_cast<char>(header_len & 0xFF));
        out.put(static_cast<char>((header_len >> 8) & 0xFF));
        out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
        out.write(reinterpret_cast<const char *>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::IoFailure, "cannot move " + tmp.string() + " into place");
    }
}

}  // namespace redtest
