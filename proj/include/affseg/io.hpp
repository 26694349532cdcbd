#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "affseg/volume.hpp"

namespace affseg {

// Malformed or inconsistent volume files.
class FormatError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class DType { u8, u16, u32, u64, f32 };

std::string to_string(DType t);
DType parse_dtype(const std::string& s);
std::size_t dtype_size(DType t);

using VoxelSize = std::array<double, 3>;  // nm, (z, y, x)

inline constexpr VoxelSize snemi3d_voxel_size{29.0, 6.0, 6.0};

// The JSON half of a volume file pair.
struct VolumeHeader {
    std::vector<std::size_t> shape;  // [z,y,x] or [c,z,y,x]
    DType dtype = DType::f32;
    std::optional<VoxelSize> voxel_size_nm;
    std::optional<OffsetSet> offsets;
};

using AnyVolume = std::variant<ImageVolume, SegVolume, AffinityVolume>;

// `path` may name the .json header, the .raw payload, or the common stem.
std::filesystem::path header_path(const std::filesystem::path& path);
std::filesystem::path payload_path(const std::filesystem::path& path);

VolumeHeader read_header(const std::filesystem::path& path);

// 3-D f32 loads as an image, 3-D integer as a segmentation (widened to u64),
// 4-D f32 as an affinity volume.
AnyVolume load_volume(const std::filesystem::path& path);

ImageVolume load_image(const std::filesystem::path& path);
SegVolume load_seg(const std::filesystem::path& path);
AffinityVolume load_affinity(const std::filesystem::path& path);

void save_volume(const std::filesystem::path& path, const ImageVolume& vol,
                 VoxelSize voxel_size = snemi3d_voxel_size);
void save_volume(const std::filesystem::path& path, const SegVolume& vol,
                 VoxelSize voxel_size = snemi3d_voxel_size);
void save_volume(const std::filesystem::path& path, const AffinityVolume& vol,
                 VoxelSize voxel_size = snemi3d_voxel_size);
void save_volume(const std::filesystem::path& path, const AnyVolume& vol,
                 VoxelSize voxel_size = snemi3d_voxel_size);

}  // namespace affseg
