#pragma once

// Network building blocks shared by the prior and posterior models.
//
// Parameters live in a ParamStore as plain Arrays. For each forward pass the
// store is bound onto a tape (one leaf per parameter) and modules index into
// the bound span by the parameter ids they recorded at construction.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scotch/diffcore.hpp"
#include "scotch/rng.hpp"

namespace scotch::nn {

using ad::Array;
using ad::Tape;
using ad::Var;

using Bound = std::span<const Var>;

class ParamStore {
public:
    std::size_t add(std::string name, Array init);
    std::size_t size() const noexcept { return values_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    Array& value(std::size_t i) { return values_.at(i); }
    const Array& value(std::size_t i) const { return values_.at(i); }
    std::optional<std::size_t> find(const std::string& name) const;
    std::size_t scalar_count() const;

    // One leaf per parameter, in id order.
    std::vector<Var> bind(Tape& tape) const;
    std::vector<Var> bind_constants(Tape& tape) const;

private:
    std::vector<std::string> names_;
    std::vector<Array> values_;
};

std::vector<Array> gradients(std::span<const Var> bound);

// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Array kaiming_uniform(std::size_t fan_in, ad::Shape shape, Rng& rng);

struct Linear {
    std::size_t weight = 0;
    std::size_t bias = 0;
    std::size_t in = 0;
    std::size_t out = 0;

    Var operator()(Bound p, Var x) const;
};

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

// tanh MLP. A hidden layer whose input width equals its output width gets a
// skip connection when residual is on; the output layer is affine.
class Mlp {
public:
    Mlp() = default;
    Mlp(ParamStore& store, const std::string& prefix, std::size_t in, std::vector<std::size_t> hidden,
        std::size_t out, bool residual, Rng& rng);

    Var forward(Bound p, Var x) const;

    std::size_t in_dim() const noexcept { return in_; }
    std::size_t out_dim() const noexcept { return out_; }
    bool residual() const noexcept { return residual_; }
    void set_residual(bool on) noexcept { residual_ = on; }
    const std::vector<Linear>& layers() const noexcept { return layers_; }

private:
    std::vector<Linear> layers_;
    std::size_t in_ = 0;
    std::size_t out_ = 0;
    bool residual_ = false;
};

// Gated recurrent cell, reset/update/candidate gates in that column order:
//   r = sigmoid(x Wx_r + bx_r + h Wh_r + bh_r)
//   z = sigmoid(x Wx_z + bx_z + h Wh_z + bh_z)
//   n = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n))
//   h' = (1 - z) * n + z * h
class GruCell {
public:
    struct Gates {
        Var reset;
        Var update;
        Var candidate;
        Var next;
    };

    GruCell() = default;
    GruCell(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng);

    Var step(Bound p, Var h, Var x) const { return gates(p, h, x).next; }
    Gates gates(Bound p, Var h, Var x) const;

    std::size_t input_dim() const noexcept { return input_; }
    std::size_t hidden_dim() const noexcept { return hidden_; }

private:
    std::size_t wx_ = 0, wh_ = 0, bx_ = 0, bh_ = 0;
    std::size_t input_ = 0, hidden_ = 0;
};

class NodeEmbeddings {
public:
    NodeEmbeddings() = default;
    NodeEmbeddings(ParamStore& store, const std::string& name, std::size_t nodes, std::size_t dim, Rng& rng);

    Var table(Bound p) const { return p[id_]; }
    std::size_t nodes() const noexcept { return nodes_; }
    std::size_t dim() const noexcept { return dim_; }

private:
    std::size_t id_ = 0;
    std::size_t nodes_ = 0;
    std::size_t dim_ = 0;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Array> m;
    std::vector<Array> v;
};

// One bias-corrected Adam descent step on every parameter of the store.
void adam_step(AdamState& state, ParamStore& params, std::span<const Array> grads, double lr);

// Linear warmup from 0 to target over warmup_epochs, flat afterwards.
double warmup_schedule(long epoch, double target_lr, long warmup_epochs = 100);

// ---- checkpoints ---------------------------------------------------------

using NamedArrays = std::vector<std::pair<std::string, Array>>;

inline constexpr const char* kCheckpointMagic = "SCOTCH-CHECKPOINT v1";

void save_checkpoint(const std::filesystem::path& path, const NamedArrays& entries);
NamedArrays load_checkpoint(const std::filesystem::path& path);

}  // namespace scotch::nn
