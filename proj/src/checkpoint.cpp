#include "gvci/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gvci {

namespace {

constexpr char kMagic[8] = {'G', 'V', 'C', 'I', 'C', 'K', 'P', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

std::string read_string(std::istream& is, std::uint64_t len) {
    if (len > (1ull << 32)) throw std::runtime_error("checkpoint: corrupt string length");
    std::string s(len, '\0');
    is.read(s.data(), static_cast<std::streamsize>(len));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& metadata, const std::vector<Parameter*>& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof kMagic);
    write_u64(os, metadata.size());
    os.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
    write_u64(os, params.size());
    for (const Parameter* p : params) {
        write_u64(os, p->name.size());
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_u64(os, static_cast<std::uint64_t>(p->value.rows()));
        write_u64(os, static_cast<std::uint64_t>(p->value.cols()));
        os.write(reinterpret_cast<const char*>(p->value.data()),
                 static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    Checkpoint ckpt;
    ckpt.metadata = read_string(is, read_u64(is));
    const std::uint64_t count = read_u64(is);
    for (std::uint64_t k = 0; k < count; ++k) {
        std::string name = read_string(is, read_u64(is));
        const auto rows = static_cast<Eigen::Index>(read_u64(is));
        const auto cols = static_cast<Eigen::Index>(read_u64(is));
        Matrix m(rows, cols);
        is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated array '" + name + "'");
        ckpt.arrays.emplace(std::move(name), std::move(m));
    }
    return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params) {
    for (Parameter* p : params) {
        auto it = ckpt.arrays.find(p->name);
        if (it == ckpt.arrays.end()) throw std::runtime_error("checkpoint: missing parameter '" + p->name + "'");
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
            throw std::runtime_error("checkpoint: shape mismatch for '" + p->name + "'");
        p->value = it->second;
        p->zero_grad();
    }
}

}  // namespace gvci
