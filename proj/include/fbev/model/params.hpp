#pragma once

#include <random>
#include <string>
#include <vector>

#include "fbev/diff/grad_check.hpp"
#include "fbev/diff/value.hpp"

namespace fbev::model {

using diff::NamedParam;
using diff::Value;

// Ordered registry of learnable arrays. Registration order is the
// checkpoint order and the order the initializer draws random numbers in.
class ParameterSet {
  public:
    explicit ParameterSet(std::uint64_t seed) : rng_(seed) {}

    Value uniform(const std::string& name, diff::Shape shape, double bound);
    Value normal(const std::string& name, diff::Shape shape, double stddev);
    Value constant(const std::string& name, diff::Shape shape, double value);

    const std::vector<NamedParam>& items() const { return items_; }
    std::vector<NamedParam>& items() { return items_; }
    const Value& get(const std::string& name) const;
    std::size_t scalar_count() const;
    void zero_grad();

  private:
    Value add(const std::string& name, diff::Shape shape, std::vector<double> data);

    std::mt19937_64 rng_;
    std::vector<NamedParam> items_;
};

// y = x W + b over the last axis.
struct Linear {
    Value weight;  // [in, out]
    Value bias;    // [out]

    static Linear create(ParameterSet& ps, const std::string& name, int in, int out);
    Value operator()(const Value& x) const;
    Linear detached() const { return {weight.detach(), bias.detach()}; }
};

struct LayerNormParams {
    Value gamma;
    Value beta;

    static LayerNormParams create(ParameterSet& ps, const std::string& name, int width);
    Value operator()(const Value& x) const;
    LayerNormParams detached() const { return {gamma.detach(), beta.detach()}; }
};

struct Conv {
    Value weight;  // [out, in, k, k] or [out, in] for 1x1
    Value bias;    // [out]
    int stride = 1;
    int pad = 0;

    static Conv create(ParameterSet& ps, const std::string& name, int in, int out, int k,
                       int stride);
    Value operator()(const Value& x) const;
};

}  // namespace fbev::model
