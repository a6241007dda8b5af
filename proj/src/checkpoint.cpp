#include "drn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace drn {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'R', 'N', 'P'};

template <typename U>
void put(std::string& out, U value)
{
    char buf[sizeof(U)];
    std::memcpy(buf, &value, sizeof(U));
    out.append(buf, sizeof(U));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename U>
    U get()
    {
        need(sizeof(U));
        U value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return value;
    }

    std::string take(std::size_t n)
    {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void read_into(void* dst, std::size_t n)
    {
        need(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > bytes_.size()) throw IoError("truncated parameter blob");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_blob(const NamedTensors& arrays)
{
    std::string out(kMagic, 4);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, t] : arrays) {
        if (name.size() > 0xFFFF) throw IoError("array name too long: " + name.substr(0, 32) + "...");
        put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.append(name);
        put<std::uint8_t>(out, 4);
        for (Index d : {t.n(), t.c(), t.h(), t.w()}) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        out.append(reinterpret_cast<const char*>(t.data()), sizeof(float) * static_cast<std::size_t>(t.numel()));
    }
    return out;
}

NamedTensors decode_blob(const std::string& bytes)
{
    Reader r(bytes);
    if (r.take(4) != std::string(kMagic, 4)) throw IoError("not a parameter blob (bad magic)");
    const auto count = r.get<std::uint32_t>();
    NamedTensors out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint16_t>();
        std::string name = r.take(len);
        const auto ndim = r.get<std::uint8_t>();
        if (ndim > 4) throw IoError("array '" + name + "' has " + std::to_string(ndim) + " dims; at most 4 supported");
        Index dims[4] = {1, 1, 1, 1};
        for (int d = 0; d < ndim; ++d) dims[4 - ndim + d] = r.get<std::uint32_t>();
        Tensor<float> t(Shape{dims[0], dims[1], dims[2], dims[3]});
        r.read_into(t.data(), sizeof(float) * static_cast<std::size_t>(t.numel()));
        out.emplace_back(std::move(name), std::move(t));
    }
    if (!r.done()) throw IoError("trailing bytes after parameter blob");
    return out;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes)
{
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " to " + path.string() + ": " + ec.message());
}

void write_blob(const std::filesystem::path& path, const NamedTensors& arrays)
{
    write_file_atomic(path, encode_blob(arrays));
}

NamedTensors read_blob(const std::filesystem::path& path)
{
    try {
        return decode_blob(read_file(path));
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

}  // namespace drn
