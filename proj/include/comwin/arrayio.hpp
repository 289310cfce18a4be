#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "comwin/core.hpp"

namespace comwin {

// ---------------------------------------------------------------------------
// CWT1 binary array container.
//
// Layout: magic "CWT1" | version 0x01 | dtype byte | ndim byte |
//         ndim x u32 little-endian dims | payload little-endian row-major.
// Header length is exactly 7 + 4*ndim bytes.
// ---------------------------------------------------------------------------

enum class Dtype : uint8_t { f32 = 0, f64 = 1, i32 = 2, u8 = 3 };

size_t dtype_size(Dtype d);
const char* dtype_name(Dtype d);

struct ArraySpec {
    Dtype dtype = Dtype::f32;
    std::vector<uint32_t> dims;

    size_t ndim() const { return dims.size(); }
    uint64_t numel() const;
    bool operator==(const ArraySpec&) const = default;
};

class ArrayIoError : public std::runtime_error {
public:
    enum class Kind {
        io,              // unreadable/unwritable path
        bad_magic,
        bad_version,
        bad_dtype,
        bad_shape,       // dims/data length mismatch or overflow
        truncated,       // payload shorter than the header promises
        bad_manifest,
    };

    ArrayIoError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct Array {
    ArraySpec spec;
    std::variant<std::vector<float>, std::vector<double>, std::vector<int32_t>,
                 std::vector<uint8_t>>
        data;

    template <typename T>
    const std::vector<T>& as() const { return std::get<std::vector<T>>(data); }
};

void write_array(const std::filesystem::path& path, const std::vector<uint32_t>& dims,
                 std::span<const float> data);
void write_array(const std::filesystem::path& path, const std::vector<uint32_t>& dims,
                 std::span<const double> data);
void write_array(const std::filesystem::path& path, const std::vector<uint32_t>& dims,
                 std::span<const int32_t> data);
void write_array(const std::filesystem::path& path, const std::vector<uint32_t>& dims,
                 std::span<const uint8_t> data);

Array read_array(const std::filesystem::path& path);

// Shape-checked convenience readers/writers for the shapes the pipeline uses.
Image<float> read_image_f32(const std::filesystem::path& path);
LabelMap read_label_u8(const std::filesystem::path& path);
ProbMap read_prob_f32(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image<float>& img);
void write_label(const std::filesystem::path& path, const LabelMap& lab);
void write_prob(const std::filesystem::path& path, const ProbMap& p);

// ---------------------------------------------------------------------------
// Dataset manifest (JSON).
// ---------------------------------------------------------------------------

enum class SplitTag { labeled, unlabeled, test };

const char* split_name(SplitTag s);
SplitTag split_from_name(const std::string& s);

struct SampleEntry {
    std::string image;                 // path relative to the manifest directory
    std::optional<std::string> label;  // absent for unlabeled entries
    SplitTag split = SplitTag::labeled;
};

struct DatasetManifest {
    std::string name;
    int classes = 0;
    std::optional<uint64_t> seed;
    std::vector<SampleEntry> samples;
    std::string synth_config_json;  // provenance blob, verbatim if present

    size_t count(SplitTag s) const;
    std::vector<size_t> indices(SplitTag s) const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Validates the split/label-path invariants; throws bad_manifest on violation.
void validate_manifest(const DatasetManifest& m);

}  // namespace comwin
