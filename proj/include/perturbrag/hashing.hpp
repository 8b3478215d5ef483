#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace perturbrag {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Stable 64-bit hash, identical across runs and platforms.
///
/// Each part is length-prefixed before mixing, so ("ab","c") and ("a","bc")
/// hash differently.
class StableHasher {
public:
    StableHasher& add(std::string_view part);
    StableHasher& add(std::uint64_t value);
    std::uint64_t finish() const;

private:
    void mix_bytes(const unsigned char* data, std::size_t n);
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Seed for one (pair, run) attempt. Shared by the QA engine and the
/// retrieval baseline so that both see identical bundles.
std::uint64_t run_seed(std::uint64_t base_seed, std::string_view pert, std::string_view gene,
                       std::uint64_t run_index);

} // namespace perturbrag
