#include "comwin/arrayio.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace comwin {

namespace {

constexpr char kMagic[4] = {'C', 'W', 'T', '1'};
constexpr uint8_t kVersion = 0x01;
constexpr uint64_t kMaxElements = (1ULL << 62);  // product of dims must fit 63 bits

void put_u32_le(std::string& out, uint32_t x) {
    out.push_back(static_cast<char>(x & 0xff));
    out.push_back(static_cast<char>((x >> 8) & 0xff));
    out.push_back(static_cast<char>((x >> 16) & 0xff));
    out.push_back(static_cast<char>((x >> 24) & 0xff));
}

uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void check_dims(const std::vector<uint32_t>& dims, size_t data_len) {
    uint64_t n = 1;
    for (uint32_t d : dims) {
        if (d == 0) throw ArrayIoError(ArrayIoError::Kind::bad_shape, "zero extent in dims");
        if (n > kMaxElements / d)
            throw ArrayIoError(ArrayIoError::Kind::bad_shape, "dims product exceeds 63-bit count");
        n *= d;
    }
    if (dims.size() > 255)
        throw ArrayIoError(ArrayIoError::Kind::bad_shape, "ndim exceeds 255");
    if (n != data_len)
        throw ArrayIoError(ArrayIoError::Kind::bad_shape,
                           "data length " + std::to_string(data_len) +
                               " does not match dims product " + std::to_string(n));
}

template <typename T>
void append_payload_le(std::string& out, std::span<const T> data) {
    static_assert(sizeof(T) == 1 || sizeof(T) == 4 || sizeof(T) == 8);
    if constexpr (std::endian::native == std::endian::little) {
        out.append(reinterpret_cast<const char*>(data.data()), data.size_bytes());
    } else {
        for (const T& value : data) {
            unsigned char bytes[sizeof(T)];
            std::memcpy(bytes, &value, sizeof(T));
            for (size_t i = 0; i < sizeof(T); ++i)
                out.push_back(static_cast<char>(bytes[sizeof(T) - 1 - i]));
        }
    }
}

template <typename T>
void write_array_impl(const std::filesystem::path& path, const std::vector<uint32_t>& dims,
                      std::span<const T> data, Dtype dtype) {
    check_dims(dims, data.size());
    std::string buf;
    buf.reserve(7 + 4 * dims.size() + data.size_bytes());
    buf.append(kMagic, 4);
    buf.push_back(static_cast<char>(kVersion));
    buf.push_back(static_cast<char>(dtype));
    buf.push_back(static_cast<char>(dims.size()));
    for (uint32_t d : dims) put_u32_le(buf, d);
    append_payload_le<T>(buf, data);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ArrayIoError(ArrayIoError::Kind::io, "cannot open for writing: " + path.string());
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw ArrayIoError(ArrayIoError::Kind::io, "write failed: " + path.string());
}

template <typename T>
std::vector<T> decode_payload_le(const std::vector<unsigned char>& raw, size_t offset, uint64_t n) {
    std::vector<T> out(n);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), raw.data() + offset, n * sizeof(T));
    } else {
        for (uint64_t i = 0; i < n; ++i) {
            unsigned char bytes[sizeof(T)];
            for (size_t b = 0; b < sizeof(T); ++b)
                bytes[b] = raw[offset + i * sizeof(T) + (sizeof(T) - 1 - b)];
            std::memcpy(&out[i], bytes, sizeof(T));
        }
    }
    return out;
}

}  // namespace

size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::f32: return 4;
        case Dtype::f64: return 8;
        case Dtype::i32: return 4;
        case Dtype::u8: return 1;
    }
    throw ArrayIoError(ArrayIoError::Kind::bad_dtype, "unknown dtype");
}

const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::f32: return "f32";
        case Dtype::f64: return "f64";
        case Dtype::i32: return "i32";
        case Dtype::u8: return "u8";
    }
    return "?";
}

uint64_t ArraySpec::numel() const {
    uint64_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
}

void write_array(const std::filesystem::path& p, const std::vector<uint32_t>& d,
                 std::span<const float> s) { write_array_impl(p, d, s, Dtype::f32); }
void write_array(const std::filesystem::path& p, const std::vector<uint32_t>& d,
                 std::span<const double> s) { write_array_impl(p, d, s, Dtype::f64); }
void write_array(const std::filesystem::path& p, const std::vector<uint32_t>& d,
                 std::span<const int32_t> s) { write_array_impl(p, d, s, Dtype::i32); }
void write_array(const std::filesystem::path& p, const std::vector<uint32_t>& d,
                 std::span<const uint8_t> s) { write_array_impl(p, d, s, Dtype::u8); }

Array read_array(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ArrayIoError(ArrayIoError::Kind::io, "cannot open: " + path.string());
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());

    if (raw.size() < 7 || std::memcmp(raw.data(), kMagic, 4) != 0)
        throw ArrayIoError(ArrayIoError::Kind::bad_magic, "bad magic in " + path.string());
    if (raw[4] != kVersion)
        throw ArrayIoError(ArrayIoError::Kind::bad_version,
                           "unsupported version " + std::to_string(raw[4]));
    if (raw[5] > static_cast<uint8_t>(Dtype::u8))
        throw ArrayIoError(ArrayIoError::Kind::bad_dtype,
                           "unsupported dtype code " + std::to_string(raw[5]));
    const Dtype dtype = static_cast<Dtype>(raw[5]);
    const size_t ndim = raw[6];
    const size_t header_len = 7 + 4 * ndim;
    if (raw.size() < header_len)
        throw ArrayIoError(ArrayIoError::Kind::truncated, "truncated header in " + path.string());

    ArraySpec spec;
    spec.dtype = dtype;
    spec.dims.resize(ndim);
    uint64_t n = 1;
    for (size_t i = 0; i < ndim; ++i) {
        spec.dims[i] = get_u32_le(raw.data() + 7 + 4 * i);
        if (spec.dims[i] == 0)
            throw ArrayIoError(ArrayIoError::Kind::bad_shape, "zero extent in " + path.string());
        if (n > kMaxElements / spec.dims[i])
            throw ArrayIoError(ArrayIoError::Kind::bad_shape, "dims overflow in " + path.string());
        n *= spec.dims[i];
    }
    if (raw.size() != header_len + n * dtype_size(dtype))
        throw ArrayIoError(ArrayIoError::Kind::truncated,
                           "payload size mismatch in " + path.string());

    Array out;
    out.spec = spec;
    switch (dtype) {
        case Dtype::f32: out.data = decode_payload_le<float>(raw, header_len, n); break;
        case Dtype::f64: out.data = decode_payload_le<double>(raw, header_len, n); break;
        case Dtype::i32: out.data = decode_payload_le<int32_t>(raw, header_len, n); break;
        case Dtype::u8: out.data = decode_payload_le<uint8_t>(raw, header_len, n); break;
    }
    return out;
}

Image<float> read_image_f32(const std::filesystem::path& path) {
    Array a = read_array(path);
    if (a.spec.dtype != Dtype::f32 || a.spec.ndim() != 2)
        throw ArrayIoError(ArrayIoError::Kind::bad_shape,
                           "expected 2D f32 array: " + path.string());
    Image<float> img(static_cast<int>(a.spec.dims[0]), static_cast<int>(a.spec.dims[1]));
    img.v = std::move(std::get<std::vector<float>>(a.data));
    return img;
}

LabelMap read_label_u8(const std::filesystem::path& path) {
    Array a = read_array(path);
    if (a.spec.dtype != Dtype::u8 || a.spec.ndim() != 2)
        throw ArrayIoError(ArrayIoError::Kind::bad_shape,
                           "expected 2D u8 array: " + path.string());
    LabelMap lab(static_cast<int>(a.spec.dims[0]), static_cast<int>(a.spec.dims[1]));
    lab.v = std::move(std::get<std::vector<uint8_t>>(a.data));
    return lab;
}

ProbMap read_prob_f32(const std::filesystem::path& path) {
    Array a = read_array(path);
    if (a.spec.dtype != Dtype::f32 || a.spec.ndim() != 3)
        throw ArrayIoError(ArrayIoError::Kind::bad_shape,
                           "expected 3D f32 array: " + path.string());
    ProbMap p(static_cast<int>(a.spec.dims[0]), static_cast<int>(a.spec.dims[1]),
              static_cast<int>(a.spec.dims[2]));
    p.v = std::move(std::get<std::vector<float>>(a.data));
    return p;
}

void write_image(const std::filesystem::path& path, const Image<float>& img) {
    write_array(path, {static_cast<uint32_t>(img.h), static_cast<uint32_t>(img.w)},
                std::span<const float>(img.v));
}

void write_label(const std::filesystem::path& path, const LabelMap& lab) {
    write_array(path, {static_cast<uint32_t>(lab.h), static_cast<uint32_t>(lab.w)},
                std::span<const uint8_t>(lab.v));
}

void write_prob(const std::filesystem::path& path, const ProbMap& p) {
    write_array(path,
                {static_cast<uint32_t>(p.c), static_cast<uint32_t>(p.h),
                 static_cast<uint32_t>(p.w)},
                std::span<const float>(p.v));
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

const char* split_name(SplitTag s) {
    switch (s) {
        case SplitTag::labeled: return "labeled";
        case SplitTag::unlabeled: return "unlabeled";
        case SplitTag::test: return "test";
    }
    return "?";
}

SplitTag split_from_name(const std::string& s) {
    if (s == "labeled") return SplitTag::labeled;
    if (s == "unlabeled") return SplitTag::unlabeled;
    if (s == "test") return SplitTag::test;
    throw ArrayIoError(ArrayIoError::Kind::bad_manifest, "unknown split tag: " + s);
}

size_t DatasetManifest::count(SplitTag s) const {
    size_t n = 0;
    for (const auto& e : samples) n += (e.split == s) ? 1 : 0;
    return n;
}

std::vector<size_t> DatasetManifest::indices(SplitTag s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == s) out.push_back(i);
    return out;
}

void validate_manifest(const DatasetManifest& m) {
    if (m.classes < 2)
        throw ArrayIoError(ArrayIoError::Kind::bad_manifest, "manifest needs classes >= 2");
    for (const auto& e : m.samples) {
        const bool needs_label = e.split != SplitTag::unlabeled;
        if (needs_label && !e.label)
            throw ArrayIoError(ArrayIoError::Kind::bad_manifest,
                               split_name(e.split) + std::string(" entry missing label path: ") +
                                   e.image);
        if (!needs_label && e.label)
            throw ArrayIoError(ArrayIoError::Kind::bad_manifest,
                               "unlabeled entry carries a label path: " + e.image);
    }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ArrayIoError(ArrayIoError::Kind::io, "cannot open: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ArrayIoError(ArrayIoError::Kind::bad_manifest,
                           "malformed manifest JSON: " + std::string(e.what()));
    }

    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.classes = j.at("classes").get<int>();
        if (j.contains("seed") && !j["seed"].is_null()) m.seed = j["seed"].get<uint64_t>();
        for (const auto& je : j.at("samples")) {
            SampleEntry e;
            e.image = je.at("image").get<std::string>();
            if (je.contains("label") && !je["label"].is_null())
                e.label = je["label"].get<std::string>();
            e.split = split_from_name(je.at("split").get<std::string>());
            m.samples.push_back(std::move(e));
        }
        if (j.contains("synth_config")) m.synth_config_json = j["synth_config"].dump();
    } catch (const nlohmann::json::exception& e) {
        throw ArrayIoError(ArrayIoError::Kind::bad_manifest,
                           "manifest schema error: " + std::string(e.what()));
    }
    validate_manifest(m);
    return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    validate_manifest(m);
    nlohmann::json j;
    j["name"] = m.name;
    j["classes"] = m.classes;
    if (m.seed) j["seed"] = *m.seed;
    j["samples"] = nlohmann::json::array();
    for (const auto& e : m.samples) {
        nlohmann::json je;
        je["image"] = e.image;
        if (e.label) je["label"] = *e.label;
        je["split"] = split_name(e.split);
        j["samples"].push_back(std::move(je));
    }
    if (!m.synth_config_json.empty())
        j["synth_config"] = nlohmann::json::parse(m.synth_config_json);

    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ArrayIoError(ArrayIoError::Kind::io, "cannot open for writing: " + path.string());
    f << j.dump(2) << "\n";
}

}  // namespace comwin
