#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "distlab/linalg.hpp"
#include "distlab/rng.hpp"

namespace distlab {

struct MlpLayer {
    Mat64 w;  // (out x in)
    Vec64 b;  // (out)
};

// Fully connected net: tanh on hidden layers, linear output head.
struct MlpParams {
    std::vector<MlpLayer> layers;

    int input_size() const;
    int output_size() const;
    void validate() const;
};

// Gradient accumulator with the same layer shapes as the net it mirrors.
struct MlpGrads {
    std::vector<MlpLayer> layers;

    static MlpGrads zeros_like(const MlpParams& params);
    void clear();
};

// Post-activation values per layer; acts[0] is the input.
struct MlpCache {
    std::vector<Vec64> acts;
};

// Weights ~ uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)), biases zero.
MlpParams mlp_init(const std::vector<int>& sizes, Rng& rng);

Vec64 mlp_forward(const MlpParams& params, const Vec64& input);
Vec64 mlp_forward_cached(const MlpParams& params, const Vec64& input, MlpCache& cache);

// Reverse-mode gradients of the forward map; accumulates parameter gradients
// into `grads` and returns the gradient with respect to the input.
Vec64 mlp_backward(const MlpParams& params, const MlpCache& cache,
                   const Vec64& output_grad, MlpGrads& grads);

std::size_t mlp_param_count(const MlpParams& params);
void mlp_flatten(const MlpParams& params, Vec64& out);
void mlp_flatten_grads(const MlpGrads& grads, Vec64& out);
// Reads param_count doubles starting at `cursor` and advances it.
void mlp_unflatten(MlpParams& params, const Vec64& flat, std::size_t& cursor);

// {"layers": [{"rows", "cols", "w": [row-major], "b": [...]}], "activation": "tanh"}
nlohmann::json mlp_to_json(const MlpParams& params);
MlpParams mlp_from_json(const nlohmann::json& doc);

}  // namespace distlab
