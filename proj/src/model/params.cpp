#include "fbev/model/params.hpp"

#include <cmath>
#include <stdexcept>

#include "fbev/diff/ops.hpp"

namespace fbev::model {

Value ParameterSet::add(const std::string& name, diff::Shape shape, std::vector<double> data) {
    for (const auto& p : items_) {
        if (p.name == name) throw std::logic_error("duplicate parameter name " + name);
    }
    Value v = Value::parameter(std::move(shape), std::move(data));
    items_.push_back({name, v});
    return v;
}

Value ParameterSet::uniform(const std::string& name, diff::Shape shape, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> data(diff::numel(shape));
    for (auto& x : data) x = dist(rng_);
    return add(name, std::move(shape), std::move(data));
}

Value ParameterSet::normal(const std::string& name, diff::Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> data(diff::numel(shape));
    for (auto& x : data) x = dist(rng_);
    return add(name, std::move(shape), std::move(data));
}

Value ParameterSet::constant(const std::string& name, diff::Shape shape, double value) {
    const auto n = diff::numel(shape);
    return add(name, std::move(shape), std::vector<double>(n, value));
}

const Value& ParameterSet::get(const std::string& name) const {
    for (const auto& p : items_) {
        if (p.name == name) return p.value;
    }
    throw std::out_of_range("no parameter named " + name);
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : items_) p.value.zero_grad();
}

Linear Linear::create(ParameterSet& ps, const std::string& name, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.weight = ps.uniform(name + ".w", {in, out}, bound);
    l.bias = ps.constant(name + ".b", {out}, 0.0);
    return l;
}

Value Linear::operator()(const Value& x) const {
    return diff::add_trailing(diff::matmul(x, weight), bias);
}

LayerNormParams LayerNormParams::create(ParameterSet& ps, const std::string& name, int width) {
    return {ps.constant(name + ".gamma", {width}, 1.0), ps.constant(name + ".beta", {width}, 0.0)};
}

Value LayerNormParams::operator()(const Value& x) const {
    return diff::layer_norm(x, -1, gamma, beta);
}

Conv Conv::create(ParameterSet& ps, const std::string& name, int in, int out, int k, int stride) {
    const double fan_in = static_cast<double>(in) * k * k;
    Conv c;
    diff::Shape shape = k == 1 ? diff::Shape{out, in} : diff::Shape{out, in, k, k};
    c.weight = ps.uniform(name + ".w", shape, std::sqrt(6.0 / fan_in));
    c.bias = ps.constant(name + ".b", {out}, 0.0);
    c.stride = stride;
    c.pad = k / 2;
    return c;
}

Value Conv::operator()(const Value& x) const {
    if (weight.rank() == 2) return diff::conv1x1(x, weight, bias);
    return diff::conv2d(x, weight, bias, stride, pad);
}

}  // namespace fbev::model
