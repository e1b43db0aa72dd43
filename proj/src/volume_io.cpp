#include "segda/volume_io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace segda {

namespace {

using nlohmann::json;

std::string raw_path_of(const std::string& header_path) {
    auto dot = header_path.rfind('.');
    const std::string stem = (dot == std::string::npos) ? header_path : header_path.substr(0, dot);
    return stem + ".raw";
}

void write_header(const std::string& path, const std::vector<std::size_t>& shape,
                  const Spacing& spacing, const char* dtype) {
    json j;
    j["shape"] = shape;
    j["spacing"] = spacing;
    j["dtype"] = dtype;
    j["order"] = "C";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write header: " + path);
    f << j.dump(2) << "\n";
}

json read_header(const std::string& path, const char* expect_dtype,
                 std::vector<std::size_t>& shape, Spacing& spacing) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read header: " + path);
    json j = json::parse(f);
    if (j.at("dtype").get<std::string>() != expect_dtype)
        throw std::runtime_error(path + ": expected dtype " + expect_dtype + ", got " +
                                 j.at("dtype").get<std::string>());
    if (j.at("order").get<std::string>() != "C")
        throw std::runtime_error(path + ": unsupported order");
    shape = j.at("shape").get<std::vector<std::size_t>>();
    auto sp = j.at("spacing").get<std::vector<double>>();
    if (shape.size() != 3 || sp.size() != 3)
        throw std::runtime_error(path + ": shape/spacing must have 3 components");
    spacing = {sp[0], sp[1], sp[2]};
    return j;
}

template <typename T>
void write_raw(const std::string& path, const std::vector<T>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write payload: " + path);
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!f) throw std::runtime_error("short write: " + path);
}

template <typename T>
void read_raw(const std::string& path, std::vector<T>& data) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot read payload: " + path);
    const auto bytes = static_cast<std::size_t>(f.tellg());
    if (bytes != data.size() * sizeof(T))
        throw std::runtime_error(path + ": payload size mismatch");
    f.seekg(0);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw std::runtime_error("short read: " + path);
}

} // namespace

void write_volume(const std::string& header_path, const Volume& v) {
    v.validate();
    write_header(header_path, v.data.shape(), v.spacing, "f32");
    write_raw(raw_path_of(header_path), v.data.vec());
}

void write_mask(const std::string& header_path, const Mask& m) {
    m.validate();
    write_header(header_path, m.data.shape(), m.spacing, "u8");
    write_raw(raw_path_of(header_path), m.data.vec());
}

Volume read_volume(const std::string& header_path) {
    std::vector<std::size_t> shape;
    Volume v;
    read_header(header_path, "f32", shape, v.spacing);
    v.data = Tensor<float>(shape);
    read_raw(raw_path_of(header_path), v.data.vec());
    v.validate();
    return v;
}

Mask read_mask(const std::string& header_path) {
    std::vector<std::size_t> shape;
    Mask m;
    read_header(header_path, "u8", shape, m.spacing);
    m.data = Tensor<std::uint8_t>(shape);
    read_raw(raw_path_of(header_path), m.data.vec());
    m.validate();
    return m;
}

} // namespace segda
