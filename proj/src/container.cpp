#include "mobiclr/container.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace mobiclr {

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

}  // namespace mobiclr

namespace mobiclr::container {
namespace {

constexpr std::array<char, 8> kMagic = {'M', 'O', 'B', 'I', 'C', 'L', 'R', '\0'};

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw FormatError(path.string() + ": truncated container");
    return v;
}

}  // namespace

void write(const std::filesystem::path& path, const Blob& blob) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");

    const std::string header = blob.header.dump();
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kFormatVersion);
    const bool ints = std::holds_alternative<std::vector<std::int64_t>>(blob.payload);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ints ? DType::Int64 : DType::Float64));
    put<std::uint64_t>(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::visit(
        [&](const auto& values) {
            put<std::uint64_t>(os, values.size());
            os.write(reinterpret_cast<const char*>(values.data()),
                     static_cast<std::streamsize>(values.size() * sizeof(values[0])));
        },
        blob.payload);
    if (!os) throw FormatError("write failed: " + path.string());
}

Blob read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());

    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw FormatError(path.string() + ": not a MOBICLR container");
    const auto version = get<std::uint32_t>(is, path);
    if (version != kFormatVersion)
        throw FormatError(path.string() + ": unsupported container version " + std::to_string(version));
    const auto dtype = get<std::uint32_t>(is, path);
    const auto header_len = get<std::uint64_t>(is, path);
    std::string header(header_len, '\0');
    if (!is.read(header.data(), static_cast<std::streamsize>(header_len)))
        throw FormatError(path.string() + ": truncated header");

    Blob blob;
    try {
        blob.header = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": bad header: " + e.what());
    }
    const auto count = get<std::uint64_t>(is, path);
    auto fill = [&](auto& values) {
        values.resize(count);
        if (!is.read(reinterpret_cast<char*>(values.data()),
                     static_cast<std::streamsize>(count * sizeof(values[0]))))
            throw FormatError(path.string() + ": truncated payload");
    };
    if (dtype == static_cast<std::uint32_t>(DType::Int64)) {
        std::vector<std::int64_t> values;
        fill(values);
        blob.payload = std::move(values);
    } else if (dtype == static_cast<std::uint32_t>(DType::Float64)) {
        std::vector<double> values;
        fill(values);
        blob.payload = std::move(values);
    } else {
        throw FormatError(path.string() + ": unknown dtype " + std::to_string(dtype));
    }
    return blob;
}

Blob read_kind(const std::filesystem::path& path, const std::string& kind) {
    Blob blob = read(path);
    if (blob.header.value("kind", std::string{}) != kind)
        throw FormatError(path.string() + ": expected a '" + kind + "' container, found '" +
                          blob.header.value("kind", std::string{"?"}) + "'");
    return blob;
}

}  // namespace mobiclr::container
