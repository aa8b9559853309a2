#include <bit>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "trialsent/error.hpp"
#include "trialsent/nn.hpp"

namespace trialsent::nn {

namespace {

double half_to_double(std::uint16_t h) {
    const std::uint32_t sign = (h >> 15) & 1u;
    const std::uint32_t exp = (h >> 10) & 0x1Fu;
    const std::uint32_t frac = h & 0x3FFu;
    double v;
    if (exp == 0)
        v = std::ldexp(static_cast<double>(frac), -24);
    else if (exp == 31)
        v = frac ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
    else
        v = std::ldexp(static_cast<double>(frac | 0x400u), static_cast<int>(exp) - 25);
    return sign ? -v : v;
}

std::uint64_t read_le64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

template <class T>
T load_le(const unsigned char* p) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    T v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

}  // namespace

std::map<std::string, Tensor> load_safetensors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint weights " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto corrupt = [&](const std::string& why) {
        return LoadError("corrupt safetensors file " + path.string() + ": " + why);
    };
    if (bytes.size() < 8) throw corrupt("truncated header");
    const auto header_len = read_le64(bytes.data());
    if (header_len > bytes.size() - 8) throw corrupt("header length exceeds file size");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw corrupt(e.what());
    }
    const unsigned char* data = bytes.data() + 8 + header_len;
    const std::size_t data_len = bytes.size() - 8 - header_len;

    std::map<std::string, Tensor> out;
    for (const auto& [name, info] : header.items()) {
        if (name == "__metadata__") continue;
        Tensor t;
        std::string dtype;
        std::size_t begin = 0, end = 0;
        try {
            dtype = info.at("dtype").get<std::string>();
            t.shape = info.at("shape").get<std::vector<std::size_t>>();
            begin = info.at("data_offsets").at(0).get<std::size_t>();
            end = info.at("data_offsets").at(1).get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw corrupt(name + ": " + e.what());
        }
        std::size_t count = 1;
        for (auto d : t.shape) count *= d;
        std::size_t width = 0;
        if (dtype == "F64") width = 8;
        else if (dtype == "F32") width = 4;
        else if (dtype == "F16" || dtype == "BF16") width = 2;
        else throw corrupt(name + ": unsupported dtype " + dtype);
        if (end < begin || end > data_len || end - begin != count * width)
            throw corrupt(name + ": data offsets disagree with shape");
        t.data.resize(count);
        const unsigned char* p = data + begin;
        for (std::size_t i = 0; i < count; ++i, p += width) {
            if (dtype == "F64") t.data[i] = load_le<double>(p);
            else if (dtype == "F32") t.data[i] = load_le<float>(p);
            else if (dtype == "F16") t.data[i] = half_to_double(load_le<std::uint16_t>(p));
            else {
                const std::uint32_t bits = static_cast<std::uint32_t>(load_le<std::uint16_t>(p)) << 16;
                t.data[i] = std::bit_cast<float>(bits);
            }
        }
        out.emplace(name, std::move(t));
    }
    return out;
}

void save_safetensors(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors,
                      StorageType storage) {
    const std::size_t width = storage == StorageType::F64 ? 8 : 4;
    nlohmann::json header = nlohmann::json::object();
    std::size_t offset = 0;
    for (const auto& [name, t] : tensors) {
        const std::size_t bytes = t.data.size() * width;
        header[name] = {{"dtype", storage == StorageType::F64 ? "F64" : "F32"},
                        {"shape", t.shape},
                        {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    std::string text = header.dump();
    while ((text.size() + 8) % 8 != 0) text += ' ';

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + path.string());
    std::uint64_t len = text.size();
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xFF));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
        for (double v : t.data) {
            if (storage == StorageType::F64) {
                out.write(reinterpret_cast<const char*>(&v), 8);
            } else {
                const float f = static_cast<float>(v);
                out.write(reinterpret_cast<const char*>(&f), 4);
            }
        }
    }
    if (!out) throw LoadError("write failed for " + path.string());
}

Tensor to_tensor(const Matrix& m) {
    Tensor t;
    if (m.rows() == 1)
        t.shape = {static_cast<std::size_t>(m.cols())};
    else
        t.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
    t.data.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            t.data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    return t;
}

Matrix to_matrix(const Tensor& t) {
    Eigen::Index rows = 1, cols = 0;
    if (t.shape.size() == 1) {
        cols = static_cast<Eigen::Index>(t.shape[0]);
    } else if (t.shape.size() == 2) {
        rows = static_cast<Eigen::Index>(t.shape[0]);
        cols = static_cast<Eigen::Index>(t.shape[1]);
    } else {
        throw ShapeError("expected a 1-D or 2-D tensor");
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = t.data[static_cast<std::size_t>(r * cols + c)];
    return m;
}

}  // namespace trialsent::nn
