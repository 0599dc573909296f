#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Recurrent sequence classifier trained from scratch on the CPU.
//
// Pipeline per sequence: affine embedder on every timestep, a stack of LSTM
// layers, the top layer's final hidden state through a ReLU FC head (inverted
// dropout in training mode), then a linear layer to class logits. All
// arithmetic is double precision.
namespace stepseq::seqnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class ShapeMismatch : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
class NonFiniteInput : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
class EmptySequence : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
class LabelOutOfRange : public std::out_of_range {
    using std::out_of_range::out_of_range;
};
class StaleCache : public std::logic_error {
    using std::logic_error::logic_error;
};

struct ModelSpec {
    std::size_t input_dim = 0;  // per-timestep feature dimension
    std::size_t embed_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t num_lstm_layers = 1;
    std::vector<std::size_t> head_dims;
    std::size_t num_classes = 0;
    double dropout_rate = 0.0;

    void validate() const;
    /// 512-wide, 3-layer LSTM with two 256-wide FC layers and dropout 0.3.
    static ModelSpec reference(std::size_t input_dim, std::size_t num_classes);

    bool operator==(const ModelSpec&) const = default;
};

struct DenseParams {
    Matrix W;
    Vector b;
};

/// Gate weights act on the concatenation [h_{t-1}, x_t].
struct LstmLayerParams {
    Matrix W_f, W_i, W_c, W_o;
    Vector b_f, b_i, b_c, b_o;

    std::size_t hidden_dim() const { return static_cast<std::size_t>(W_f.rows()); }
    std::size_t input_dim() const { return static_cast<std::size_t>(W_f.cols() - W_f.rows()); }
};

struct TensorView {
    std::string name;
    std::span<double> data;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
};

struct ConstTensorView {
    std::string name;
    std::span<const double> data;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
};

struct ModelParams {
    DenseParams embed;
    std::vector<LstmLayerParams> lstm;
    std::vector<DenseParams> head;
    DenseParams out;
    /// Bumped by every optimizer step; caches from older generations are stale.
    std::uint64_t generation = 0;

    /// Every tensor in a fixed order (embed, lstm layers, head, out).
    std::vector<TensorView> tensors();
    std::vector<ConstTensorView> tensors() const;

    ModelParams zeros_like() const;
    std::size_t num_scalars() const;
    bool all_finite() const;
    bool same_values(const ModelParams& other) const;
};

using Gradients = ModelParams;

struct LayerState {
    Vector h;
    Vector c;
};
using LstmState = std::vector<LayerState>;

/// h_t = sigmoid(W_x x + W_h h_prev + b)
Vector rnn_cell(const Vector& x, const Vector& h_prev, const Matrix& W_x, const Matrix& W_h,
                const Vector& b);

struct GateActivations {
    Vector f, i, c_tilde, o;
};

LayerState lstm_cell(const Vector& x, const LayerState& prev, const LstmLayerParams& p,
                     GateActivations* gates = nullptr);

struct ForwardCache {
    std::uint64_t generation = 0;
    std::size_t timesteps = 0;
    std::vector<Vector> inputs;                      // x_t
    std::vector<std::vector<Vector>> layer_inputs;   // [layer][t]
    std::vector<std::vector<LayerState>> states;     // [layer][t]
    std::vector<std::vector<GateActivations>> gates; // [layer][t]
    std::vector<Vector> head_inputs;                 // input to head layer k
    std::vector<Vector> head_pre;                    // pre-ReLU
    std::vector<Vector> head_masks;                  // scaled dropout mask, empty in eval
    Vector out_input;
    Vector logits;
};

struct ForwardResult {
    Vector logits;
    ForwardCache cache;
};

/// features is timesteps x input_dim. Passing a dropout rng selects training
/// mode; nullptr is eval mode.
ForwardResult forward(const Matrix& features, const ModelSpec& spec, const ModelParams& params,
                      std::mt19937_64* dropout_rng = nullptr);

Vector softmax(const Vector& logits);
double cross_entropy(const Vector& logits, std::size_t label);

/// Exact gradient of cross_entropy(logits, label) w.r.t. every parameter.
Gradients backward(const ModelParams& params, const ForwardCache& cache, std::size_t label);

/// grads += weight * d loss / d params, for accumulating across sequences.
void accumulate_gradients(const ModelParams& params, const ForwardCache& cache, std::size_t label,
                          Gradients& grads, double weight);

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Vector> first_moment;
    std::vector<Vector> second_moment;

    static AdamState for_params(const ModelParams& params, AdamConfig config = {});
};

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; zero biases except the
/// forget gate, which starts at 1.
ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

/// Throws ShapeMismatch if params do not match spec.
void check_shapes(const ModelSpec& spec, const ModelParams& params);

// Checkpoint text layout:
//   STEPSEQ-CHECKPOINT v1
//   spec <input> <embed> <hidden> <layers> <classes> <dropout> <n_head> <head widths...>
//   tensor <name> <rows> <cols>
//   <rows lines of cols values, row-major, %.17g>
//   ... one block per tensor in ModelParams::tensors() order ...
//   end
inline constexpr const char* kCheckpointMagic = "STEPSEQ-CHECKPOINT v1";

struct Checkpoint {
    ModelSpec spec;
    ModelParams params;
};

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_text(const ModelSpec& spec, const ModelParams& params);
Checkpoint parse_checkpoint(const std::string& text);

}  // namespace stepseq::seqnet
