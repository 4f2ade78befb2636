#ifndef RAAT_MODEL_HPP
#define RAAT_MODEL_HPP

#include "raat/common.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace raat {

enum class Activation { Identity, ReLU, Tanh };
enum class LayerKind { Dense, Conv3x3 };

/// One affine block followed by its activation. Conv blocks use a 3x3 kernel
/// with zero padding 1.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int out = 0;  // units (dense) or output channels (conv)
  int stride = 1;
  Activation activation = Activation::ReLU;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ImageShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  Index size() const { return Index{channels} * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Architecture descriptor. Inputs are flattened channel-planar (C, H, W);
/// a plain vector input of dimension d is the shape (1, 1, d).
struct Architecture {
  std::string name;
  ImageShape input;
  int num_classes = 2;
  std::vector<LayerSpec> layers;

  Index input_dim() const { return input.size(); }
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

Architecture linear_architecture(int input_dim, int num_classes);
Architecture mlp_architecture(int input_dim, int num_classes, std::vector<int> hidden = {64, 64},
                              Activation activation = Activation::ReLU);
/// Desk-scale four-conv network for 32x32x3 images.
Architecture cnn_architecture(int num_classes, std::vector<int> channels = {8, 8, 16, 16},
                              int dense_units = 64);

nlohmann::json to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Resolved per-layer geometry: shapes and offsets into the flat parameter
/// vector. Weights come first (row-major, out x fan_in), then biases.
struct LayerGeometry {
  LayerSpec spec;
  ImageShape in;
  ImageShape out;
  Index weight_offset = 0;
  Index bias_offset = 0;
  Index fan_in = 0;
};

enum class Mode { Train, Eval };

class Classifier {
 public:
  explicit Classifier(Architecture arch);

  const Architecture& architecture() const noexcept { return arch_; }
  const std::vector<LayerGeometry>& geometry() const noexcept { return geometry_; }
  Index input_dim() const noexcept { return arch_.input_dim(); }
  int num_classes() const noexcept { return arch_.num_classes; }
  /// Number of recorded post-activation blocks.
  int depth() const noexcept { return static_cast<int>(geometry_.size()); }
  Index parameter_count() const noexcept { return parameters_.size(); }

  const Vector& parameters() const noexcept { return parameters_; }
  Vector& parameters() noexcept { return parameters_; }
  void set_parameters(const Vector& values);

  /// He-normal weights, zero biases.
  void initialize(Rng& rng);

  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

 private:
  Architecture arch_;
  std::vector<LayerGeometry> geometry_;
  Vector parameters_;
  Mode mode_ = Mode::Eval;
};

struct Prediction {
  Batch logits;
  Batch probabilities;
  Labels labels;
};

/// Row-wise softmax with max subtraction.
Batch softmax(const Batch& logits);
Labels predict_labels(const Batch& logits);

Prediction forward(const Classifier& model, const Batch& inputs);
Batch logits(const Classifier& model, const Batch& inputs);

/// Post-activation output of every block, in forward order.
std::vector<Batch> hidden_activations(const Classifier& model, const Batch& inputs);

/// Cached intermediate values of one forward pass, consumed by backward().
struct ForwardTrace {
  Batch input;
  std::vector<Batch> columns;  // im2col matrices of conv blocks (empty for dense)
  std::vector<Batch> pre;      // affine outputs
  std::vector<Batch> post;     // activation outputs; post.back() are the logits
  const Batch& logits() const { return post.back(); }
};

ForwardTrace trace_forward(const Classifier& model, const Batch& inputs);

struct Gradients {
  Vector parameters;
  Batch inputs;
};

/// Back-propagates dLoss/dLogits through a recorded pass.
Gradients backward(const Classifier& model, const ForwardTrace& trace, const Batch& logit_grad,
                   bool want_parameters, bool want_inputs);

/// dL/dlogits from dL/dprobabilities through the softmax Jacobian.
Batch softmax_backward(const Batch& probabilities, const Batch& prob_grad);

enum class LossKind { CrossEntropy, KlToReference, CwMargin };

/// Gradient of the per-example loss with respect to each input row, with
/// parameters held constant. KlToReference needs reference probabilities
/// (one row per example) and differentiates KL(reference || p(x)).
Batch input_gradient(const Classifier& model, const Batch& inputs, const Labels& labels,
                     LossKind kind, const Batch* reference = nullptr);

/// Per-example loss matching input_gradient's objective.
Vector example_losses(const Classifier& model, const Batch& inputs, const Labels& labels,
                      LossKind kind, const Batch* reference = nullptr);

void check_inputs(const Classifier& model, const Batch& inputs);
void check_labels(const Classifier& model, const Labels& labels, Index rows);

}  // namespace raat

#endif  // RAAT_MODEL_HPP
