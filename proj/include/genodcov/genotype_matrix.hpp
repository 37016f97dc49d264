#pragma once

// SNP-major genotype matrix kept in PLINK's 2-bit packing.
// Bit pairs (low bits first): 00 hom allele1, 01 missing, 10 het, 11 hom allele2.

#include <array>
#include <cstdint>
#include <vector>

#include "common.hpp"

namespace genodcov {

struct PackedGenotypes {
    std::size_t n_samples = 0;
    std::size_t n_snps = 0;
    std::vector<std::uint8_t> bytes;
    bool count_allele1 = true;  // code = copies of allele1; false counts allele2

    std::size_t stride() const { return (n_samples + 3) / 4; }
    const std::uint8_t* snp(std::size_t j) const { return bytes.data() + j * stride(); }
    std::uint8_t* snp(std::size_t j) { return bytes.data() + j * stride(); }

    // 2-bit PLINK field -> allele count code
    static constexpr std::array<std::uint8_t, 4> kA1 = {2, kMissing, 1, 0};
    static constexpr std::array<std::uint8_t, 4> kA2 = {0, kMissing, 1, 2};

    const std::array<std::uint8_t, 4>& lut() const { return count_allele1 ? kA1 : kA2; }

    std::uint8_t at(std::size_t snp_index, std::size_t sample) const {
        std::uint8_t b = snp(snp_index)[sample >> 2];
        return lut()[(b >> (2 * (sample & 3))) & 3u];
    }

    GenotypeVector decode(std::size_t j) const {
        GenotypeVector out(n_samples);
        const auto* p = snp(j);
        const auto& l = lut();
        for (std::size_t i = 0; i < n_samples; ++i) out[i] = l[(p[i >> 2] >> (2 * (i & 3))) & 3u];
        return out;
    }

    static std::uint8_t field_for(std::uint8_t code, bool count_allele1) {
        if (code == kMissing) return 1;
        if (code == 1) return 2;
        bool hom1 = count_allele1 ? code == 2 : code == 0;
        return hom1 ? 0 : 3;
    }

    void set(std::size_t j, const GenotypeVector& g) {
        require(g.size() == n_samples, "genotype vector length mismatch");
        auto* p = snp(j);
        std::fill(p, p + stride(), std::uint8_t{0});
        for (std::size_t i = 0; i < n_samples; ++i) {
            require(g[i] <= 2 || g[i] == kMissing, "genotype code outside {0,1,2,missing}");
            p[i >> 2] |= static_cast<std::uint8_t>(field_for(g[i], count_allele1) << (2 * (i & 3)));
        }
    }

    static PackedGenotypes from_vectors(const std::vector<GenotypeVector>& snps, std::size_t n_samples) {
        PackedGenotypes m;
        m.n_samples = n_samples;
        m.n_snps = snps.size();
        m.bytes.assign(m.n_snps * m.stride(), 0);
        for (std::size_t j = 0; j < snps.size(); ++j) m.set(j, snps[j]);
        return m;
    }
};

}  // namespace genodcov
