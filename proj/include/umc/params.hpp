#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "umc/tensor.hpp"

namespace umc {

// Named dense tensor, rank 0..4. Rank 0 carries exactly one value.
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<double> data;

    std::size_t count() const {
        std::size_t n = 1;
        for (std::uint32_t d : dims) n *= d;
        return n;
    }
    double scalar() const;
};

// Ordered collection of named tensors. Lookup of an unknown name is an error;
// weights are never silently zero-filled.
class ParamSet {
public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }

    // Convenience for conv layers stored as "<prefix>.w" (+ optional
    // "<prefix>.b"): validates ranks and assembles ConvWeights.
    tensor::ConvWeights conv(const std::string& prefix) const;

    std::vector<std::uint8_t> to_bytes() const;
    static ParamSet from_bytes(const std::vector<std::uint8_t>& bytes);

    void save(const std::string& path) const;
    static ParamSet load(const std::string& path);

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> entries_;
};

// FNV-1a over the serialized byte stream; stable fingerprint for manifests.
std::uint64_t fingerprint(const ParamSet& params);

}  // namespace umc
