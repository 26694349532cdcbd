#include "affseg/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace affseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class T>
T byteswap(T v)
{
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
    return v;
}

template <class T>
T from_le(T v)
{
    if constexpr (std::endian::native == std::endian::big)
        return byteswap(v);
    return v;
}

template <class T>
std::vector<T> decode(const std::vector<char>& bytes)
{
    std::vector<T> out(bytes.size() / sizeof(T));
    std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        for (auto& v : out)
            v = from_le(v);
    return out;
}

template <class T>
void write_payload(const fs::path& path, const std::vector<T>& values)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    if constexpr (std::endian::native == std::endian::big) {
        for (T v : values) {
            v = byteswap(v);
            f.write(reinterpret_cast<const char*>(&v), sizeof(T));
        }
    } else {
        f.write(reinterpret_cast<const char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(T)));
    }
    if (!f)
        throw std::runtime_error("failed writing " + path.string());
}

std::vector<char> read_payload(const fs::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw FormatError("missing payload file " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_header(const fs::path& path, const VolumeHeader& h)
{
    json j;
    j["shape"] = h.shape;
    j["dtype"] = to_string(h.dtype);
    if (h.voxel_size_nm)
        j["voxel_size_nm"] = *h.voxel_size_nm;
    if (h.offsets) {
        json offs = json::array();
        for (const auto& o : *h.offsets)
            offs.push_back({o.dz, o.dy, o.dx});
        j["offsets"] = offs;
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << j.dump(2) << "\n";
}

Shape spatial_shape(const VolumeHeader& h)
{
    const auto n = h.shape.size();
    return {h.shape[n - 3], h.shape[n - 2], h.shape[n - 1]};
}

void check_floats(const std::vector<float>& v, const fs::path& path, bool unit_range)
{
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i]))
            throw FormatError(path.string() + ": payload value " + std::to_string(i) +
                              " is not finite");
        if (unit_range && (v[i] < 0.0f || v[i] > 1.0f))
            throw FormatError(path.string() + ": payload value " + std::to_string(i) + " = " +
                              std::to_string(v[i]) + " outside [0,1]");
    }
}

std::vector<std::uint64_t> widen(const std::vector<char>& bytes, DType t)
{
    switch (t) {
    case DType::u8: {
        auto v = decode<std::uint8_t>(bytes);
        return {v.begin(), v.end()};
    }
    case DType::u16: {
        auto v = decode<std::uint16_t>(bytes);
        return {v.begin(), v.end()};
    }
    case DType::u32: {
        auto v = decode<std::uint32_t>(bytes);
        return {v.begin(), v.end()};
    }
    case DType::u64:
        return decode<std::uint64_t>(bytes);
    case DType::f32:
        break;
    }
    throw FormatError("dtype: f32 is not a label type");
}

}  // namespace

std::string to_string(DType t)
{
    switch (t) {
    case DType::u8: return "u8";
    case DType::u16: return "u16";
    case DType::u32: return "u32";
    case DType::u64: return "u64";
    case DType::f32: return "f32";
    }
    return "?";
}

DType parse_dtype(const std::string& s)
{
    if (s == "u8") return DType::u8;
    if (s == "u16") return DType::u16;
    if (s == "u32") return DType::u32;
    if (s == "u64") return DType::u64;
    if (s == "f32") return DType::f32;
    throw FormatError("dtype: unknown value \"" + s + "\"");
}

std::size_t dtype_size(DType t)
{
    switch (t) {
    case DType::u8: return 1;
    case DType::u16: return 2;
    case DType::u32: return 4;
    case DType::u64: return 8;
    case DType::f32: return 4;
    }
    return 0;
}

fs::path header_path(const fs::path& path)
{
    fs::path p = path;
    if (p.extension() == ".json")
        return p;
    if (p.extension() == ".raw")
        return p.replace_extension(".json");
    return fs::path(p.string() + ".json");
}

fs::path payload_path(const fs::path& path)
{
    return header_path(path).replace_extension(".raw");
}

VolumeHeader read_header(const fs::path& path)
{
    const auto hp = header_path(path);
    std::ifstream f(hp);
    if (!f)
        throw FormatError("missing header file " + hp.string());

    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw FormatError(hp.string() + ": invalid JSON: " + e.what());
    }

    VolumeHeader h;
    try {
        if (!j.contains("shape") || !j["shape"].is_array())
            throw FormatError("shape: missing or not an array");
        for (const auto& e : j["shape"]) {
            if (!e.is_number_unsigned() || e.get<std::size_t>() == 0)
                throw FormatError("shape: extents must be positive integers");
            h.shape.push_back(e.get<std::size_t>());
        }
        if (h.shape.size() != 3 && h.shape.size() != 4)
            throw FormatError("shape: expected 3 or 4 extents, got " +
                              std::to_string(h.shape.size()));

        if (!j.contains("dtype") || !j["dtype"].is_string())
            throw FormatError("dtype: missing or not a string");
        h.dtype = parse_dtype(j["dtype"].get<std::string>());

        if (j.contains("voxel_size_nm")) {
            const auto& v = j["voxel_size_nm"];
            if (!v.is_array() || v.size() != 3)
                throw FormatError("voxel_size_nm: expected [z,y,x]");
            h.voxel_size_nm = VoxelSize{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
        }

        if (h.shape.size() == 4) {
            if (!j.contains("offsets") || !j["offsets"].is_array())
                throw FormatError("offsets: required for 4-D volumes");
            OffsetSet offs;
            for (const auto& o : j["offsets"]) {
                if (!o.is_array() || o.size() != 3)
                    throw FormatError("offsets: each entry must be [dz,dy,dx]");
                offs.push_back({o[0].get<int>(), o[1].get<int>(), o[2].get<int>()});
            }
            if (offs.size() != h.shape[0])
                throw FormatError("offsets: " + std::to_string(offs.size()) +
                                  " entries for " + std::to_string(h.shape[0]) + " channels");
            try {
                validate(offs);
            } catch (const std::invalid_argument& e) {
                throw FormatError(std::string("offsets: ") + e.what());
            }
            h.offsets = std::move(offs);
        } else if (j.contains("offsets")) {
            throw FormatError("offsets: only allowed for 4-D volumes");
        }
    } catch (const FormatError& e) {
        throw FormatError(hp.string() + ": " + e.what());
    } catch (const json::exception& e) {
        throw FormatError(hp.string() + ": " + e.what());
    }
    return h;
}

AnyVolume load_volume(const fs::path& path)
{
    const VolumeHeader h = read_header(path);
    const auto pp = payload_path(path);
    const auto bytes = read_payload(pp);

    std::size_t count = 1;
    for (auto e : h.shape)
        count *= e;
    const std::size_t expected = count * dtype_size(h.dtype);
    if (bytes.size() != expected)
        throw FormatError(pp.string() + ": payload has " + std::to_string(bytes.size()) +
                          " bytes but shape and dtype require " + std::to_string(expected));

    const Shape shape = spatial_shape(h);
    if (h.shape.size() == 4) {
        if (h.dtype != DType::f32)
            throw FormatError(header_path(path).string() + ": dtype: 4-D volumes must be f32");
        auto values = decode<float>(bytes);
        check_floats(values, pp, true);
        return AffinityVolume(shape, *h.offsets, std::move(values));
    }
    if (h.dtype == DType::f32) {
        auto values = decode<float>(bytes);
        check_floats(values, pp, true);
        return ImageVolume(shape, std::move(values));
    }
    return SegVolume(shape, widen(bytes, h.dtype));
}

namespace {

template <class V>
V load_as(const fs::path& path, const char* kind)
{
    auto any = load_volume(path);
    if (auto* v = std::get_if<V>(&any))
        return std::move(*v);
    throw FormatError(header_path(path).string() + ": expected " + kind + " volume");
}

}  // namespace

ImageVolume load_image(const fs::path& path) { return load_as<ImageVolume>(path, "an image"); }
SegVolume load_seg(const fs::path& path) { return load_as<SegVolume>(path, "a segmentation"); }
AffinityVolume load_affinity(const fs::path& path)
{
    return load_as<AffinityVolume>(path, "an affinity");
}

void save_volume(const fs::path& path, const ImageVolume& vol, VoxelSize voxel_size)
{
    const Shape& s = vol.shape();
    write_header(header_path(path), {{s.z, s.y, s.x}, DType::f32, voxel_size, std::nullopt});
    write_payload(payload_path(path), vol.data());
}

void save_volume(const fs::path& path, const SegVolume& vol, VoxelSize voxel_size)
{
    const Shape& s = vol.shape();
    write_header(header_path(path), {{s.z, s.y, s.x}, DType::u64, voxel_size, std::nullopt});
    write_payload(payload_path(path), vol.data());
}

void save_volume(const fs::path& path, const AffinityVolume& vol, VoxelSize voxel_size)
{
    const Shape& s = vol.shape();
    write_header(header_path(path),
                 {{vol.channels(), s.z, s.y, s.x}, DType::f32, voxel_size, vol.offsets()});
    write_payload(payload_path(path), vol.data());
}

void save_volume(const fs::path& path, const AnyVolume& vol, VoxelSize voxel_size)
{
    std::visit([&](const auto& v) { save_volume(path, v, voxel_size); }, vol);
}

}  // namespace affseg
