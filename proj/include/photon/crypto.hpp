#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace photon {

/// Source of random bytes. Production code uses SecureRandom; tests may
/// substitute a seeded generator.
class RandomSource {
public:
    virtual ~RandomSource() = default;
    virtual void fill(std::span<std::uint8_t> out) = 0;
};

/// OS-backed CSPRNG. Throws Error(RngUnavailable) if the source fails.
class SecureRandom final : public RandomSource {
public:
    void fill(std::span<std::uint8_t> out) override;
};

std::string to_hex(std::span<const std::uint8_t> bytes);

/// 32 lowercase hex chars drawn from `rng` (128 bits).
std::string random_hex128(RandomSource& rng);

bool is_lower_hex(std::string_view s, std::size_t length) noexcept;

/// Comparison whose running time depends only on the lengths.
bool constant_time_equal(std::string_view a, std::string_view b) noexcept;

/// Incremental SHA-256.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(Sha256&&) noexcept;
    Sha256& operator=(Sha256&&) noexcept;
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::span<const std::uint8_t> data);
    void update(std::string_view data);
    /// Lowercase hex digest; the hasher is reset afterwards.
    std::string finish_hex();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Digest of a whole file, read in fixed-size blocks.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace photon
