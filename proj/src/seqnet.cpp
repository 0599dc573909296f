#include "stepseq/seqnet.hpp"

#include <cassert>
#include <cmath>

namespace stepseq::seqnet {

namespace {

double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Vector sigmoid(const Vector& z) {
    return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Vector tanh_vec(const Vector& z) {
    return z.unaryExpr([](double v) { return std::tanh(v); });
}

std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

void expect_shape(const std::string& what, const Matrix& m, std::size_t rows, std::size_t cols) {
    if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols) {
        throw ShapeMismatch(what + ": expected " + shape_str(static_cast<Eigen::Index>(rows),
                                                             static_cast<Eigen::Index>(cols)) +
                            ", got " + shape_str(m.rows(), m.cols()));
    }
}

void expect_shape(const std::string& what, const Vector& v, std::size_t rows) {
    if (static_cast<std::size_t>(v.size()) != rows) {
        throw ShapeMismatch(what + ": expected length " + std::to_string(rows) + ", got " +
                            std::to_string(v.size()));
    }
}

template <typename Self, typename View>
std::vector<View> collect_views(Self& p) {
    std::vector<View> out;
    auto add = [&](std::string name, auto& t) {
        out.push_back(View{std::move(name), {t.data(), static_cast<std::size_t>(t.size())}, t.rows(), t.cols()});
    };
    add("embed.W", p.embed.W);
    add("embed.b", p.embed.b);
    for (std::size_t l = 0; l < p.lstm.size(); ++l) {
        auto& L = p.lstm[l];
        const std::string pre = "lstm" + std::to_string(l) + ".";
        add(pre + "W_f", L.W_f);
        add(pre + "W_i", L.W_i);
        add(pre + "W_c", L.W_c);
        add(pre + "W_o", L.W_o);
        add(pre + "b_f", L.b_f);
        add(pre + "b_i", L.b_i);
        add(pre + "b_c", L.b_c);
        add(pre + "b_o", L.b_o);
    }
    for (std::size_t k = 0; k < p.head.size(); ++k) {
        add("head" + std::to_string(k) + ".W", p.head[k].W);
        add("head" + std::to_string(k) + ".b", p.head[k].b);
    }
    add("out.W", p.out.W);
    add("out.b", p.out.b);
    return out;
}

}  // namespace

void ModelSpec::validate() const {
    if (input_dim == 0 || embed_dim == 0 || hidden_dim == 0 || num_lstm_layers == 0 || num_classes == 0) {
        throw std::invalid_argument("model spec: dimensions and layer count must be positive");
    }
    for (auto w : head_dims) {
        if (w == 0) throw std::invalid_argument("model spec: head widths must be positive");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw std::invalid_argument("model spec: dropout_rate must lie in [0, 1)");
    }
}

ModelSpec ModelSpec::reference(std::size_t input_dim, std::size_t num_classes) {
    ModelSpec s;
    s.input_dim = input_dim;
    s.embed_dim = 512;
    s.hidden_dim = 512;
    s.num_lstm_layers = 3;
    s.head_dims = {256, 256};
    s.num_classes = num_classes;
    s.dropout_rate = 0.3;
    return s;
}

std::vector<TensorView> ModelParams::tensors() {
    return collect_views<ModelParams, TensorView>(*this);
}

std::vector<ConstTensorView> ModelParams::tensors() const {
    return collect_views<const ModelParams, ConstTensorView>(*this);
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    z.generation = 0;
    for (auto& t : z.tensors()) std::fill(t.data.begin(), t.data.end(), 0.0);
    return z;
}

std::size_t ModelParams::num_scalars() const {
    std::size_t n = 0;
    for (const auto& t : tensors()) n += t.data.size();
    return n;
}

bool ModelParams::all_finite() const {
    for (const auto& t : tensors())
        for (double v : t.data)
            if (!std::isfinite(v)) return false;
    return true;
}

bool ModelParams::same_values(const ModelParams& other) const {
    const auto a = tensors();
    const auto b = other.tensors();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].rows != b[i].rows || a[i].cols != b[i].cols) return false;
        if (!std::equal(a[i].data.begin(), a[i].data.end(), b[i].data.begin())) return false;
    }
    return true;
}

void check_shapes(const ModelSpec& spec, const ModelParams& p) {
    expect_shape("embed.W", p.embed.W, spec.embed_dim, spec.input_dim);
    expect_shape("embed.b", p.embed.b, spec.embed_dim);
    if (p.lstm.size() != spec.num_lstm_layers) {
        throw ShapeMismatch("expected " + std::to_string(spec.num_lstm_layers) + " LSTM layers, got " +
                            std::to_string(p.lstm.size()));
    }
    for (std::size_t l = 0; l < p.lstm.size(); ++l) {
        const auto& L = p.lstm[l];
        const std::size_t in = l == 0 ? spec.embed_dim : spec.hidden_dim;
        const std::size_t H = spec.hidden_dim;
        const std::string pre = "lstm" + std::to_string(l) + ".";
        expect_shape(pre + "W_f", L.W_f, H, H + in);
        expect_shape(pre + "W_i", L.W_i, H, H + in);
        expect_shape(pre + "W_c", L.W_c, H, H + in);
        expect_shape(pre + "W_o", L.W_o, H, H + in);
        expect_shape(pre + "b_f", L.b_f, H);
        expect_shape(pre + "b_i", L.b_i, H);
        expect_shape(pre + "b_c", L.b_c, H);
        expect_shape(pre + "b_o", L.b_o, H);
    }
    if (p.head.size() != spec.head_dims.size()) {
        throw ShapeMismatch("expected " + std::to_string(spec.head_dims.size()) + " head layers, got " +
                            std::to_string(p.head.size()));
    }
    std::size_t prev = spec.hidden_dim;
    for (std::size_t k = 0; k < p.head.size(); ++k) {
        expect_shape("head" + std::to_string(k) + ".W", p.head[k].W, spec.head_dims[k], prev);
        expect_shape("head" + std::to_string(k) + ".b", p.head[k].b, spec.head_dims[k]);
        prev = spec.head_dims[k];
    }
    expect_shape("out.W", p.out.W, spec.num_classes, prev);
    expect_shape("out.b", p.out.b, spec.num_classes);
}

Vector rnn_cell(const Vector& x, const Vector& h_prev, const Matrix& W_x, const Matrix& W_h,
                const Vector& b) {
    if (W_x.cols() != x.size() || W_h.cols() != h_prev.size() || W_x.rows() != W_h.rows() ||
        b.size() != W_x.rows()) {
        throw ShapeMismatch("rnn_cell: inconsistent shapes");
    }
    return sigmoid(W_x * x + W_h * h_prev + b);
}

LayerState lstm_cell(const Vector& x, const LayerState& prev, const LstmLayerParams& p,
                     GateActivations* gates) {
    const auto H = static_cast<Eigen::Index>(p.hidden_dim());
    if (prev.h.size() != H || prev.c.size() != H || x.size() != p.W_f.cols() - H) {
        throw ShapeMismatch("lstm_cell: state or input does not match layer shape");
    }
    if (!x.allFinite() || !prev.h.allFinite() || !prev.c.allFinite()) {
        throw NonFiniteInput("lstm_cell: non-finite input or state");
    }
    Vector z(p.W_f.cols());
    z << prev.h, x;

    GateActivations g;
    g.f = sigmoid(p.W_f * z + p.b_f);
    g.i = sigmoid(p.W_i * z + p.b_i);
    g.c_tilde = tanh_vec(p.W_c * z + p.b_c);
    g.o = sigmoid(p.W_o * z + p.b_o);

    LayerState next;
    next.c = g.f.cwiseProduct(prev.c) + g.i.cwiseProduct(g.c_tilde);
    next.h = g.o.cwiseProduct(tanh_vec(next.c));

    // closed bounds: the sigmoid saturates to exactly 0 or 1 in double precision
    assert((g.f.array() >= 0.0).all() && (g.f.array() <= 1.0).all());
    assert((g.i.array() >= 0.0).all() && (g.i.array() <= 1.0).all());
    assert((g.o.array() >= 0.0).all() && (g.o.array() <= 1.0).all());
    assert((g.c_tilde.array().abs() <= 1.0).all());
    assert((next.h.array().abs() <= 1.0).all());

    if (gates != nullptr) *gates = std::move(g);
    return next;
}

ForwardResult forward(const Matrix& features, const ModelSpec& spec, const ModelParams& params,
                      std::mt19937_64* dropout_rng) {
    spec.validate();
    check_shapes(spec, params);
    if (features.rows() == 0) throw EmptySequence("forward: sequence has no timesteps");
    if (static_cast<std::size_t>(features.cols()) != spec.input_dim) {
        throw ShapeMismatch("forward: feature dim " + std::to_string(features.cols()) + ", model expects " +
                            std::to_string(spec.input_dim));
    }
    if (!features.allFinite()) throw NonFiniteInput("forward: non-finite feature value");

    const auto T = static_cast<std::size_t>(features.rows());
    const std::size_t layers = spec.num_lstm_layers;
    const auto H = static_cast<Eigen::Index>(spec.hidden_dim);

    ForwardResult res;
    ForwardCache& c = res.cache;
    c.generation = params.generation;
    c.timesteps = T;
    c.inputs.resize(T);
    c.layer_inputs.assign(layers, std::vector<Vector>(T));
    c.states.assign(layers, std::vector<LayerState>(T));
    c.gates.assign(layers, std::vector<GateActivations>(T));

    for (std::size_t t = 0; t < T; ++t) {
        c.inputs[t] = features.row(static_cast<Eigen::Index>(t)).transpose();
        c.layer_inputs[0][t] = params.embed.W * c.inputs[t] + params.embed.b;
    }
    for (std::size_t l = 0; l < layers; ++l) {
        LayerState state{Vector::Zero(H), Vector::Zero(H)};
        for (std::size_t t = 0; t < T; ++t) {
            state = lstm_cell(c.layer_inputs[l][t], state, params.lstm[l], &c.gates[l][t]);
            c.states[l][t] = state;
            if (l + 1 < layers) c.layer_inputs[l + 1][t] = state.h;
        }
    }

    Vector a = c.states[layers - 1][T - 1].h;
    const bool train = dropout_rng != nullptr && spec.dropout_rate > 0.0;
    const double keep = 1.0 - spec.dropout_rate;
    for (const auto& layer : params.head) {
        c.head_inputs.push_back(a);
        Vector pre = layer.W * a + layer.b;
        a = pre.cwiseMax(0.0);
        c.head_pre.push_back(std::move(pre));
        if (train) {
            Vector mask(a.size());
            for (Eigen::Index j = 0; j < mask.size(); ++j) {
                mask[j] = unit_uniform(*dropout_rng) < keep ? 1.0 / keep : 0.0;
            }
            a = a.cwiseProduct(mask);
            c.head_masks.push_back(std::move(mask));
        } else {
            c.head_masks.emplace_back();
        }
    }
    c.out_input = a;
    c.logits = params.out.W * a + params.out.b;
    res.logits = c.logits;
    return res;
}

Vector softmax(const Vector& logits) {
    const double mx = logits.maxCoeff();
    Vector e = (logits.array() - mx).exp().matrix();
    return e / e.sum();
}

double cross_entropy(const Vector& logits, std::size_t label) {
    if (label >= static_cast<std::size_t>(logits.size())) {
        throw LabelOutOfRange("cross_entropy: label " + std::to_string(label) + " out of range for " +
                              std::to_string(logits.size()) + " classes");
    }
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return lse - logits[static_cast<Eigen::Index>(label)];
}

void accumulate_gradients(const ModelParams& params, const ForwardCache& cache, std::size_t label,
                          Gradients& g, double w) {
    if (cache.timesteps == 0 || cache.generation != params.generation) {
        throw StaleCache("backward: cache does not come from the current parameters");
    }
    if (label >= static_cast<std::size_t>(cache.logits.size())) {
        throw LabelOutOfRange("backward: label out of range");
    }
    const std::size_t T = cache.timesteps;
    const std::size_t layers = params.lstm.size();

    Vector dlogits = softmax(cache.logits);
    dlogits[static_cast<Eigen::Index>(label)] -= 1.0;

    g.out.W.noalias() += w * dlogits * cache.out_input.transpose();
    g.out.b += w * dlogits;
    Vector da = params.out.W.transpose() * dlogits;

    for (std::size_t k = params.head.size(); k-- > 0;) {
        if (cache.head_masks[k].size() > 0) da = da.cwiseProduct(cache.head_masks[k]);
        const Vector dpre = (cache.head_pre[k].array() > 0.0).select(da.array(), 0.0).matrix();
        g.head[k].W.noalias() += w * dpre * cache.head_inputs[k].transpose();
        g.head[k].b += w * dpre;
        da = params.head[k].W.transpose() * dpre;
    }

    std::vector<Vector> d_above(T, Vector::Zero(da.size()));
    d_above[T - 1] = da;

    for (std::size_t l = layers; l-- > 0;) {
        const auto& P = params.lstm[l];
        auto& G = g.lstm[l];
        const auto H = static_cast<Eigen::Index>(P.hidden_dim());
        const auto I = static_cast<Eigen::Index>(P.input_dim());
        Vector dh_next = Vector::Zero(H);
        Vector dc_next = Vector::Zero(H);
        const Vector zero = Vector::Zero(H);
        std::vector<Vector> d_in(T);
        Vector z(H + I);

        for (std::size_t t = T; t-- > 0;) {
            const auto& gt = cache.gates[l][t];
            const Vector& c_t = cache.states[l][t].c;
            const Vector& c_prev = t > 0 ? cache.states[l][t - 1].c : zero;
            const Vector& h_prev = t > 0 ? cache.states[l][t - 1].h : zero;

            const Vector dh = d_above[t] + dh_next;
            const Vector tc = tanh_vec(c_t);
            const Vector dc = dc_next + dh.cwiseProduct(gt.o).cwiseProduct((1.0 - tc.array().square()).matrix());

            const Vector a_f = (dc.array() * c_prev.array() * gt.f.array() * (1.0 - gt.f.array())).matrix();
            const Vector a_i = (dc.array() * gt.c_tilde.array() * gt.i.array() * (1.0 - gt.i.array())).matrix();
            const Vector a_c = (dc.array() * gt.i.array() * (1.0 - gt.c_tilde.array().square())).matrix();
            const Vector a_o = (dh.array() * tc.array() * gt.o.array() * (1.0 - gt.o.array())).matrix();
            dc_next = dc.cwiseProduct(gt.f);

            z << h_prev, cache.layer_inputs[l][t];
            G.W_f.noalias() += w * a_f * z.transpose();
            G.W_i.noalias() += w * a_i * z.transpose();
            G.W_c.noalias() += w * a_c * z.transpose();
            G.W_o.noalias() += w * a_o * z.transpose();
            G.b_f += w * a_f;
            G.b_i += w * a_i;
            G.b_c += w * a_c;
            G.b_o += w * a_o;

            Vector dz = P.W_f.transpose() * a_f;
            dz.noalias() += P.W_i.transpose() * a_i;
            dz.noalias() += P.W_c.transpose() * a_c;
            dz.noalias() += P.W_o.transpose() * a_o;
            dh_next = dz.head(H);
            d_in[t] = dz.tail(I);
        }
        d_above = std::move(d_in);
    }

    for (std::size_t t = 0; t < T; ++t) {
        g.embed.W.noalias() += w * d_above[t] * cache.inputs[t].transpose();
        g.embed.b += w * d_above[t];
    }
}

Gradients backward(const ModelParams& params, const ForwardCache& cache, std::size_t label) {
    Gradients g = params.zeros_like();
    accumulate_gradients(params, cache, label, g, 1.0);
    return g;
}

AdamState AdamState::for_params(const ModelParams& params, AdamConfig config) {
    AdamState s;
    s.config = config;
    for (const auto& t : params.tensors()) {
        s.first_moment.push_back(Vector::Zero(static_cast<Eigen::Index>(t.data.size())));
        s.second_moment.push_back(Vector::Zero(static_cast<Eigen::Index>(t.data.size())));
    }
    return s;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state) {
    auto p = params.tensors();
    const auto g = grads.tensors();
    if (p.size() != g.size() || p.size() != state.first_moment.size()) {
        throw ShapeMismatch("adam_step: parameter, gradient and state tensor counts differ");
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k].data.size() != g[k].data.size() ||
            p[k].data.size() != static_cast<std::size_t>(state.first_moment[k].size())) {
            throw ShapeMismatch("adam_step: shape mismatch in " + p[k].name);
        }
    }

    const auto& cfg = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    for (std::size_t k = 0; k < p.size(); ++k) {
        Eigen::Map<Vector> theta(p[k].data.data(), static_cast<Eigen::Index>(p[k].data.size()));
        Eigen::Map<const Vector> grad(g[k].data.data(), static_cast<Eigen::Index>(g[k].data.size()));
        Vector& m = state.first_moment[k];
        Vector& v = state.second_moment[k];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
        theta.array() -= cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
    }
    params.generation += 1;
}

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    auto uniform = [&](Eigen::Index rows, Eigen::Index cols, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Matrix m(rows, cols);
        // column-major fill order is part of the determinism contract
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = bound * (2.0 * unit_uniform(rng) - 1.0);
        return m;
    };
    const auto E = static_cast<Eigen::Index>(spec.embed_dim);
    const auto H = static_cast<Eigen::Index>(spec.hidden_dim);

    ModelParams p;
    p.embed.W = uniform(E, static_cast<Eigen::Index>(spec.input_dim), spec.input_dim);
    p.embed.b = Vector::Zero(E);
    for (std::size_t l = 0; l < spec.num_lstm_layers; ++l) {
        const std::size_t in = l == 0 ? spec.embed_dim : spec.hidden_dim;
        const auto cols = H + static_cast<Eigen::Index>(in);
        const std::size_t fan_in = spec.hidden_dim + in;
        LstmLayerParams L;
        L.W_f = uniform(H, cols, fan_in);
        L.W_i = uniform(H, cols, fan_in);
        L.W_c = uniform(H, cols, fan_in);
        L.W_o = uniform(H, cols, fan_in);
        L.b_f = Vector::Ones(H);
        L.b_i = Vector::Zero(H);
        L.b_c = Vector::Zero(H);
        L.b_o = Vector::Zero(H);
        p.lstm.push_back(std::move(L));
    }
    std::size_t prev = spec.hidden_dim;
    for (std::size_t width : spec.head_dims) {
        const auto w = static_cast<Eigen::Index>(width);
        p.head.push_back({uniform(w, static_cast<Eigen::Index>(prev), prev), Vector::Zero(w)});
        prev = width;
    }
    const auto C = static_cast<Eigen::Index>(spec.num_classes);
    p.out.W = uniform(C, static_cast<Eigen::Index>(prev), prev);
    p.out.b = Vector::Zero(C);
    return p;
}

}  // namespace stepseq::seqnet
