#pragma once

#include "leaf/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace leaf {

struct Param {
    std::string name;
    Var var;
};

/// Ordered registry of trainable leaves. Names are unique; registration
/// order is the serialization and optimizer order.
class ParamStore {
public:
    Var add(std::string name, Tensor init);

    const std::vector<Param>& params() const { return params_; }
    std::vector<Param>& params() { return params_; }
    const Param* find(const std::string& name) const;
    std::size_t size() const { return params_.size(); }
    Index scalar_count() const;
    void zero_grad();

private:
    std::vector<Param> params_;
};

/// Prefixes names so nested modules register unique parameters.
class Scope {
public:
    Scope(ParamStore& store, std::string prefix) : store_(&store), prefix_(std::move(prefix)) {}

    Var add(const std::string& name, Tensor init) const { return store_->add(prefix_ + name, std::move(init)); }
    Scope child(const std::string& name) const { return Scope(*store_, prefix_ + name + "."); }
    ParamStore& store() const { return *store_; }

private:
    ParamStore* store_;
    std::string prefix_;
};

/// Deterministic initializers driven by one engine.
class Init {
public:
    explicit Init(std::uint64_t seed) : rng_(seed) {}

    Tensor normal(Shape shape, Real stddev);
    Tensor uniform(Shape shape, Real lo, Real hi);
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Tensor fan_in(Shape shape, Index fan_in);
    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

struct AdamOptions {
    Real lr = Real(1e-3);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real eps = Real(1e-8);
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t step = 0;
};

/// One bias-corrected Adam update over every parameter with a gradient.
void adam_step(std::vector<Param>& params, AdamState& state, const AdamOptions& opt);

}  // namespace leaf
