#include "distlab/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace distlab {

int MlpParams::input_size() const {
    if (layers.empty()) throw std::invalid_argument("mlp: no layers");
    return layers.front().w.cols;
}

int MlpParams::output_size() const {
    if (layers.empty()) throw std::invalid_argument("mlp: no layers");
    return layers.back().w.rows;
}

void MlpParams::validate() const {
    if (layers.empty()) throw std::invalid_argument("mlp: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const MlpLayer& layer = layers[l];
        if (layer.w.rows <= 0 || layer.w.cols <= 0)
            throw std::invalid_argument("mlp: empty layer");
        if (static_cast<int>(layer.b.size()) != layer.w.rows)
            throw std::invalid_argument("mlp: bias size mismatch");
        if (l > 0 && layers[l - 1].w.rows != layer.w.cols)
            throw std::invalid_argument("mlp: consecutive layer sizes incompatible");
    }
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
    MlpGrads g;
    g.layers.reserve(params.layers.size());
    for (const MlpLayer& layer : params.layers) {
        MlpLayer zero;
        zero.w = Mat64(layer.w.rows, layer.w.cols);
        zero.b = Vec64(layer.b.size(), 0.0);
        g.layers.push_back(std::move(zero));
    }
    return g;
}

void MlpGrads::clear() {
    for (MlpLayer& layer : layers) {
        std::fill(layer.w.data.begin(), layer.w.data.end(), 0.0);
        std::fill(layer.b.begin(), layer.b.end(), 0.0);
    }
}

MlpParams mlp_init(const std::vector<int>& sizes, Rng& rng) {
    if (sizes.size() < 2) throw std::invalid_argument("mlp_init: need at least 2 sizes");
    MlpParams params;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l];
        const int fan_out = sizes[l + 1];
        const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        MlpLayer layer;
        layer.w = Mat64(fan_out, fan_in);
        for (double& v : layer.w.data) v = rng.uniform(-s, s);
        layer.b = Vec64(fan_out, 0.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

Vec64 mlp_forward(const MlpParams& params, const Vec64& input) {
    MlpCache cache;
    return mlp_forward_cached(params, input, cache);
}

Vec64 mlp_forward_cached(const MlpParams& params, const Vec64& input, MlpCache& cache) {
    params.validate();
    if (static_cast<int>(input.size()) != params.input_size())
        throw std::invalid_argument("mlp_forward: input size mismatch");
    cache.acts.clear();
    cache.acts.reserve(params.layers.size() + 1);
    cache.acts.push_back(input);
    Vec64 cur = input;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        cur = affine(params.layers[l].w, params.layers[l].b, cur);
        if (l + 1 < params.layers.size()) {
            for (double& v : cur) v = std::tanh(v);
        }
        cache.acts.push_back(cur);
    }
    ensure_finite(cur, "mlp_forward output");
    return cur;
}

Vec64 mlp_backward(const MlpParams& params, const MlpCache& cache,
                   const Vec64& output_grad, MlpGrads& grads) {
    if (cache.acts.size() != params.layers.size() + 1)
        throw std::invalid_argument("mlp_backward: cache/net mismatch");
    if (static_cast<int>(output_grad.size()) != params.output_size())
        throw std::invalid_argument("mlp_backward: output grad size mismatch");

    Vec64 delta = output_grad;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        // tanh' recovered from the stored post-activation; the last layer is linear.
        if (l + 1 < params.layers.size()) {
            const Vec64& a = cache.acts[l + 1];
            for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0 - a[i] * a[i];
        }
        Vec64 prev_grad(cache.acts[l].size(), 0.0);
        affine_backward(params.layers[l].w, cache.acts[l], delta,
                        grads.layers[l].w, grads.layers[l].b, prev_grad);
        delta = std::move(prev_grad);
    }
    ensure_finite(delta, "mlp_backward input grad");
    return delta;
}

std::size_t mlp_param_count(const MlpParams& params) {
    std::size_t n = 0;
    for (const MlpLayer& layer : params.layers) n += layer.w.data.size() + layer.b.size();
    return n;
}

void mlp_flatten(const MlpParams& params, Vec64& out) {
    for (const MlpLayer& layer : params.layers) {
        out.insert(out.end(), layer.w.data.begin(), layer.w.data.end());
        out.insert(out.end(), layer.b.begin(), layer.b.end());
    }
}

void mlp_flatten_grads(const MlpGrads& grads, Vec64& out) {
    for (const MlpLayer& layer : grads.layers) {
        out.insert(out.end(), layer.w.data.begin(), layer.w.data.end());
        out.insert(out.end(), layer.b.begin(), layer.b.end());
    }
}

void mlp_unflatten(MlpParams& params, const Vec64& flat, std::size_t& cursor) {
    for (MlpLayer& layer : params.layers) {
        if (cursor + layer.w.data.size() + layer.b.size() > flat.size())
            throw std::invalid_argument("mlp_unflatten: flat vector too short");
        std::copy(flat.begin() + cursor, flat.begin() + cursor + layer.w.data.size(),
                  layer.w.data.begin());
        cursor += layer.w.data.size();
        std::copy(flat.begin() + cursor, flat.begin() + cursor + layer.b.size(),
                  layer.b.begin());
        cursor += layer.b.size();
    }
}

nlohmann::json mlp_to_json(const MlpParams& params) {
    nlohmann::json doc;
    doc["activation"] = "tanh";
    doc["layers"] = nlohmann::json::array();
    for (const MlpLayer& layer : params.layers) {
        nlohmann::json jl;
        jl["rows"] = layer.w.rows;
        jl["cols"] = layer.w.cols;
        jl["w"] = layer.w.data;
        jl["b"] = layer.b;
        doc["layers"].push_back(std::move(jl));
    }
    return doc;
}

MlpParams mlp_from_json(const nlohmann::json& doc) {
    if (doc.at("activation").get<std::string>() != "tanh")
        throw std::invalid_argument("mlp_from_json: unsupported activation");
    MlpParams params;
    for (const nlohmann::json& jl : doc.at("layers")) {
        MlpLayer layer;
        layer.w.rows = jl.at("rows").get<int>();
        layer.w.cols = jl.at("cols").get<int>();
        layer.w.data = jl.at("w").get<Vec64>();
        layer.b = jl.at("b").get<Vec64>();
        if (layer.w.data.size() !=
            static_cast<std::size_t>(layer.w.rows) * static_cast<std::size_t>(layer.w.cols))
            throw std::invalid_argument("mlp_from_json: weight size mismatch");
        params.layers.push_back(std::move(layer));
    }
    params.validate();
    return params;
}

}  // namespace distlab
