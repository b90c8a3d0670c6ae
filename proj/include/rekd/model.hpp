#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rekd/equivariant.hpp"
#include "rekd/losses.hpp"
#include "rekd/ops.hpp"
#include "rekd/pair.hpp"
#include "rekd/tensor.hpp"

namespace rekd {

struct RekdConfig {
    int group_order = 36;
    int channels = 2;
    int layers = 3;
    int kernel = 5;
    int padding = 2;
    int scales = 3;            // internal scale-space levels
    double scale_factor = 0.70710678118654752;  // per level, 1/sqrt(2)
    double lr = 1e-3;
    int batch = 16;
    int epochs = 20;
    double lr_decay = 0.5;
    int lr_decay_every = 10;
    double beta = 100.0;
    std::vector<int> windows{8, 16, 24, 32, 40};
    std::vector<double> window_weights{256, 64, 16, 4, 1};
    std::uint64_t seed = 1;

    void validate() const;
    /// key=value lines, one per field.
    std::string to_text() const;
    static RekdConfig from_text(const std::string& text);
    KeypointLossConfig keypoint_loss() const { return {windows, window_weights}; }
};

bool operator==(const RekdConfig& a, const RekdConfig& b);

/// Outputs for one image.
template <typename T>
struct ModelOutput {
    Tensor<T> K;  // [H,W] keypoint score map
    Tensor<T> O;  // [G,H,W] orientation probabilities
    // Populated when internals are requested: per scale, per layer [G,C,h,w];
    // P_s [C,h,w]; Q_s [G,h,w].
    std::vector<std::vector<Tensor<T>>> layer_outputs;
    std::vector<Tensor<T>> P, Q;
};

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
};

struct StepLosses {
    double total = 0;
    double ori = 0;
    double kpts = 0;
};

/// Three equivariant conv-bn-relu layers run over an internal scale space,
/// a group-pooled keypoint head and a channel-pooled orientation head.
template <typename T>
class Model {
public:
    struct Cache;

    explicit Model(const RekdConfig& cfg);

    const RekdConfig& config() const { return cfg_; }
    int group_order() const { return cfg_.group_order; }
    /// Smallest image side the internal scale space accepts.
    int min_input_size() const;

    /// Single [H,W] image, batch-norm in inference mode.
    ModelOutput<T> forward(const Tensor<T>& img, bool keep_internals = false) const;

    /// Batched forward on [B,1,H,W]. In training mode batch statistics are
    /// used and running statistics updated; `cache` receives what backward
    /// needs. Outputs K [B,H,W] and O [B,G,H,W].
    void forward_batch(const Tensor<T>& images, bool training, Tensor<T>& K, Tensor<T>& O, Cache* cache);

    /// Accumulates parameter gradients for upstream dK, dO.
    void backward(Cache& cache, const Tensor<T>& dK, const Tensor<T>& dO);

    void zero_grad();
    std::vector<NamedParam<T>> parameters();
    /// Parameters plus batch-norm running statistics, in checkpoint order.
    std::vector<std::pair<std::string, Tensor<T>*>> state();
    std::vector<std::pair<std::string, const Tensor<T>*>> state() const;
    std::size_t parameter_count() const;

    /// Loss of a batch of pairs (mean over pairs) with gradients accumulated
    /// into the parameter slots. Batch norm runs in training mode.
    StepLosses loss_and_grad(const std::vector<RigidPair>& pairs, WeightTape* tape = nullptr);

    template <typename U>
    Model<U> cast() const;

    std::vector<Tensor<T>> conv;  // [0]: [C,1,k,k]; others [C,G*C,k,k]
    std::vector<BatchNormGroup<T>> bn;
    Tensor<T> eta;       // [C] channel pooling weights
    Tensor<T> rho;       // [S*C] keypoint head weights
    Tensor<T> rho_bias;  // [1]
    std::vector<Tensor<T>> conv_grad;
    Tensor<T> eta_grad, rho_grad, rho_bias_grad;

private:
    template <typename U>
    friend class Model;

    std::vector<std::pair<int, int>> scale_sizes(int h, int w) const;
    void run(const Tensor<T>& images, bool training, Tensor<T>& K, Tensor<T>& O, Cache* cache,
             ModelOutput<T>* internals);

    RekdConfig cfg_;
    KernelRotator rot_;
};

template <typename T>
struct Model<T>::Cache {
    struct Scale {
        int h = 0, w = 0;
        Tensor<T> input;                                        // [B,1,h,w]
        std::vector<Tensor<T>> act;                             // per layer [B,G,C,h,w]
        std::vector<typename BatchNormGroup<T>::Cache> bn;      // per layer
        std::vector<int> pool_arg;
    };
    std::vector<Scale> scales;
    Tensor<T> concat;  // [B,S*C,H,W]
    Tensor<T> O;       // [B,G,H,W]
};

/// Initializes a model with the config's seed.
Model<float> make_model(const RekdConfig& cfg);

/// Forward, loss, backward and one Adam step.
StepLosses train_step(Model<float>& model, const std::vector<RigidPair>& pairs, AdamState& optimizer);

void save_checkpoint(const Model<float>& model, const std::string& path);
/// Model built from the stored config.
Model<float> load_checkpoint(const std::string& path);
/// Loads into a model of the given config; shape disagreements throw
/// ErrorCode::shape_mismatch.
Model<float> load_checkpoint(const std::string& path, const RekdConfig& cfg);

} // namespace rekd
