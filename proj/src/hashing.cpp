#include "perturbrag/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace perturbrag {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

void StableHasher::mix_bytes(const unsigned char* data, std::size_t n) {
    // FNV-1a
    for (std::size_t i = 0; i < n; ++i) {
        state_ ^= data[i];
        state_ *= 0x100000001b3ULL;
    }
}

StableHasher& StableHasher::add(std::uint64_t value) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    }
    mix_bytes(bytes, 8);
    return *this;
}

StableHasher& StableHasher::add(std::string_view part) {
    add(static_cast<std::uint64_t>(part.size()));
    mix_bytes(reinterpret_cast<const unsigned char*>(part.data()), part.size());
    return *this;
}

std::uint64_t StableHasher::finish() const {
    // splitmix64 finalizer spreads FNV's weak low bits.
    std::uint64_t z = state_ + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t run_seed(std::uint64_t base_seed, std::string_view pert, std::string_view gene,
                       std::uint64_t run_index) {
    return StableHasher{}.add(base_seed).add(pert).add(gene).add(run_index).finish();
}

} // namespace perturbrag
