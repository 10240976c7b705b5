// io.hpp - binary volume/field/net formats and a NIfTI-1 reader subset.
//
// V3D:  magic "V3D1", dtype u8 (0 = float32, 1 = uint8, 2 = int32),
//       dims 3 x u32 LE, spacing 3 x f32 LE, then raw voxels in x-fastest
//       C order, little-endian.
// D3F:  magic "D3F1", dims 3 x u32 LE, spacing 3 x f32 LE, then three f32
//       channel blocks (dx, dy, dz).
// NET1: magic "NET1", num_classes u32 LE, hidden u32 LE, then f32 arrays
//       w1 (hidden x 30, row-major), b1 (hidden), w2 (num_classes x hidden,
//       row-major), b2 (num_classes).
// NIfTI-1: read-only, little-endian single-file (.nii); requires
//       sizeof_hdr == 348, datatype in {2, 4, 16}; honors vox_offset and
//       scl_slope/scl_inter (applied when scl_slope != 0).
#pragma once

#include <stdexcept>
#include <string>

#include "regseg/segmenter.hpp"
#include "regseg/volume.hpp"

namespace regseg {

enum class IoCode { bad_magic, truncated, unsupported_dtype, bad_header, io_failure };

class IoError : public std::runtime_error {
public:
    IoError(IoCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    IoCode code() const { return code_; }

private:
    IoCode code_;
};

void write_v3d(const std::string& path, const Volume& v);
void write_v3d(const std::string& path, const LabelVolume& v); // u8, or i32 when labels exceed 255
Volume read_v3d_volume(const std::string& path);       // any dtype, converted to double
LabelVolume read_v3d_labels(const std::string& path);  // dtype 1 or 2

void write_d3f(const std::string& path, const DisplacementField& f);
DisplacementField read_d3f(const std::string& path);

void write_net1(const std::string& path, const VoxelNet& net);
VoxelNet read_net1(const std::string& path);

Volume read_nifti(const std::string& path);

} // namespace regseg
