#include "raat/model.hpp"

#include "raat/attacks.hpp"
#include "raat/losses.hpp"

#include <cmath>
#include <utility>

namespace raat {
namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajorMatrix>;
using Weights = Eigen::Map<RowMajorMatrix>;

std::string to_string(LayerKind k) { return k == LayerKind::Dense ? "dense" : "conv3x3"; }

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "dense") return LayerKind::Dense;
  if (s == "conv3x3") return LayerKind::Conv3x3;
  throw ConfigError("unknown layer kind '" + s + "'");
}

int conv_out(int size, int stride) { return (size - 1) / stride + 1; }

std::vector<LayerGeometry> resolve(const Architecture& arch) {
  if (arch.num_classes < 2) throw ConfigError("architecture needs at least two classes");
  if (arch.layers.empty()) throw ConfigError("architecture has no layers");
  if (arch.input.channels < 1 || arch.input.height < 1 || arch.input.width < 1) {
    throw ConfigError("architecture input shape must be positive");
  }
  std::vector<LayerGeometry> out;
  ImageShape cur = arch.input;
  Index offset = 0;
  for (const LayerSpec& spec : arch.layers) {
    if (spec.out < 1) throw ConfigError("layer width must be positive");
    LayerGeometry g;
    g.spec = spec;
    g.in = cur;
    if (spec.kind == LayerKind::Dense) {
      g.fan_in = cur.size();
      g.out = ImageShape{1, 1, spec.out};
    } else {
      if (spec.stride < 1) throw ConfigError("conv stride must be positive");
      g.fan_in = Index{cur.channels} * 9;
      g.out = ImageShape{spec.out, conv_out(cur.height, spec.stride),
                         conv_out(cur.width, spec.stride)};
    }
    g.weight_offset = offset;
    offset += Index{spec.out} * g.fan_in;
    g.bias_offset = offset;
    offset += spec.out;
    cur = g.out;
    out.push_back(g);
  }
  const LayerSpec& last = arch.layers.back();
  if (last.kind != LayerKind::Dense || last.out != arch.num_classes) {
    throw ConfigError("last layer must be dense with num_classes outputs");
  }
  if (last.activation != Activation::Identity) {
    throw ConfigError("last layer must have identity activation (logits)");
  }
  return out;
}

Index parameter_total(const std::vector<LayerGeometry>& geometry) {
  const LayerGeometry& last = geometry.back();
  return last.bias_offset + last.spec.out;
}

void activate(Activation a, const Batch& pre, Batch& post) {
  switch (a) {
    case Activation::Identity: post = pre; break;
    case Activation::ReLU: post = pre.cwiseMax(0.0); break;
    case Activation::Tanh: post = pre.array().tanh().matrix(); break;
  }
}

// dL/dpre from dL/dpost.
Batch activation_backward(Activation a, const Batch& pre, const Batch& post, const Batch& grad) {
  switch (a) {
    case Activation::Identity: return grad;
    case Activation::ReLU: return (pre.array() > 0.0).select(grad, 0.0);
    case Activation::Tanh: return (grad.array() * (1.0 - post.array().square())).matrix();
  }
  return grad;
}

// Rows are (example, output position); columns are (channel, ky, kx).
Batch im2col(const Batch& input, const LayerGeometry& g) {
  const int C = g.in.channels, H = g.in.height, W = g.in.width;
  const int Ho = g.out.height, Wo = g.out.width, s = g.spec.stride;
  const Index positions = Index{Ho} * Wo;
  Batch cols = Batch::Zero(input.rows() * positions, Index{C} * 9);
  for (Index b = 0; b < input.rows(); ++b) {
    const double* x = input.row(b).data();
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        double* dst = cols.row(b * positions + Index{oy} * Wo + ox).data();
        for (int c = 0; c < C; ++c) {
          const double* plane = x + Index{c} * H * W;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * s + ky - 1;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * s + kx - 1;
              if (ix < 0 || ix >= W) continue;
              dst[c * 9 + ky * 3 + kx] = plane[Index{iy} * W + ix];
            }
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Batch& cols, const LayerGeometry& g, Batch& input_grad) {
  const int C = g.in.channels, H = g.in.height, W = g.in.width;
  const int Ho = g.out.height, Wo = g.out.width, s = g.spec.stride;
  const Index positions = Index{Ho} * Wo;
  for (Index b = 0; b < input_grad.rows(); ++b) {
    double* dx = input_grad.row(b).data();
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        const double* src = cols.row(b * positions + Index{oy} * Wo + ox).data();
        for (int c = 0; c < C; ++c) {
          double* plane = dx + Index{c} * H * W;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * s + ky - 1;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * s + kx - 1;
              if (ix < 0 || ix >= W) continue;
              plane[Index{iy} * W + ix] += src[c * 9 + ky * 3 + kx];
            }
          }
        }
      }
    }
  }
}

// (B*positions x Cout) column-major result <-> (B x Cout*positions) rows.
Batch scatter_channels(const Matrix& out_all, Index batch, Index positions, int channels) {
  Batch pre(batch, positions * channels);
  for (Index b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      pre.row(b).segment(Index{c} * positions, positions) =
          out_all.col(c).segment(b * positions, positions).transpose();
    }
  }
  return pre;
}

Matrix gather_channels(const Batch& grad, Index positions, int channels) {
  Matrix out_all(grad.rows() * positions, channels);
  for (Index b = 0; b < grad.rows(); ++b) {
    for (int c = 0; c < channels; ++c) {
      out_all.col(c).segment(b * positions, positions) =
          grad.row(b).segment(Index{c} * positions, positions).transpose();
    }
  }
  return out_all;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

Architecture linear_architecture(int input_dim, int num_classes) {
  Architecture arch;
  arch.name = "linear";
  arch.input = ImageShape{1, 1, input_dim};
  arch.num_classes = num_classes;
  arch.layers = {LayerSpec{LayerKind::Dense, num_classes, 1, Activation::Identity}};
  return arch;
}

Architecture mlp_architecture(int input_dim, int num_classes, std::vector<int> hidden,
                              Activation activation) {
  Architecture arch;
  arch.name = "mlp";
  arch.input = ImageShape{1, 1, input_dim};
  arch.num_classes = num_classes;
  for (int units : hidden) arch.layers.push_back(LayerSpec{LayerKind::Dense, units, 1, activation});
  arch.layers.push_back(LayerSpec{LayerKind::Dense, num_classes, 1, Activation::Identity});
  return arch;
}

Architecture cnn_architecture(int num_classes, std::vector<int> channels, int dense_units) {
  if (channels.size() != 4) throw ConfigError("cnn architecture takes four conv widths");
  Architecture arch;
  arch.name = "cnn";
  arch.input = ImageShape{3, 32, 32};
  arch.num_classes = num_classes;
  const int strides[4] = {1, 2, 1, 2};
  for (std::size_t i = 0; i < 4; ++i) {
    arch.layers.push_back(LayerSpec{LayerKind::Conv3x3, channels[i], strides[i], Activation::ReLU});
  }
  arch.layers.push_back(LayerSpec{LayerKind::Dense, dense_units, 1, Activation::ReLU});
  arch.layers.push_back(LayerSpec{LayerKind::Dense, num_classes, 1, Activation::Identity});
  return arch;
}

nlohmann::json to_json(const Architecture& arch) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : arch.layers) {
    layers.push_back({{"kind", to_string(l.kind)},
                      {"out", l.out},
                      {"stride", l.stride},
                      {"activation", to_string(l.activation)}});
  }
  return {{"name", arch.name},
          {"input", {arch.input.channels, arch.input.height, arch.input.width}},
          {"num_classes", arch.num_classes},
          {"layers", layers}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  try {
    Architecture arch;
    arch.name = j.at("name").get<std::string>();
    const auto& in = j.at("input");
    arch.input = ImageShape{in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
    arch.num_classes = j.at("num_classes").get<int>();
    for (const auto& l : j.at("layers")) {
      arch.layers.push_back(LayerSpec{layer_kind_from_string(l.at("kind").get<std::string>()),
                                      l.at("out").get<int>(), l.at("stride").get<int>(),
                                      activation_from_string(l.at("activation").get<std::string>())});
    }
    return arch;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed architecture descriptor: ") + e.what());
  }
}

Classifier::Classifier(Architecture arch)
    : arch_(std::move(arch)), geometry_(resolve(arch_)),
      parameters_(Vector::Zero(parameter_total(geometry_))) {}

void Classifier::set_parameters(const Vector& values) {
  if (values.size() != parameters_.size()) {
    throw InputContractError("parameter vector has " + std::to_string(values.size()) +
                             " entries, expected " + std::to_string(parameters_.size()));
  }
  if (!all_finite(values)) throw NumericError("non-finite parameters");
  parameters_ = values;
}

void Classifier::initialize(Rng& rng) {
  parameters_.setZero();
  for (const LayerGeometry& g : geometry_) {
    const double gain = g.spec.activation == Activation::ReLU ? 2.0 : 1.0;
    std::normal_distribution<double> normal(0.0, std::sqrt(gain / static_cast<double>(g.fan_in)));
    const Index count = Index{g.spec.out} * g.fan_in;
    for (Index i = 0; i < count; ++i) parameters_(g.weight_offset + i) = normal(rng);
  }
}

void check_inputs(const Classifier& model, const Batch& inputs) {
  if (inputs.cols() != model.input_dim()) {
    throw InputContractError("input has " + std::to_string(inputs.cols()) +
                             " features, architecture expects " +
                             std::to_string(model.input_dim()));
  }
  if (!all_finite(inputs)) throw ValidationError("non-finite input values");
}

void check_labels(const Classifier& model, const Labels& labels, Index rows) {
  if (static_cast<Index>(labels.size()) != rows) {
    throw InputContractError("label count does not match batch size");
  }
  for (int y : labels) {
    if (y < 0 || y >= model.num_classes()) throw ValidationError("label out of range");
  }
}

Batch softmax(const Batch& logits) {
  Batch p(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double shift = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - shift).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Labels predict_labels(const Batch& logits) {
  Labels out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax(logits.row(i));
  return out;
}

ForwardTrace trace_forward(const Classifier& model, const Batch& inputs) {
  check_inputs(model, inputs);
  const Vector& theta = model.parameters();
  ForwardTrace trace;
  trace.input = inputs;
  const Batch* cur = &trace.input;
  for (const LayerGeometry& g : model.geometry()) {
    const ConstWeights weights(theta.data() + g.weight_offset, g.spec.out, g.fan_in);
    const auto bias = theta.segment(g.bias_offset, g.spec.out);
    Batch pre;
    if (g.spec.kind == LayerKind::Dense) {
      trace.columns.emplace_back();
      pre = (*cur) * weights.transpose();
      pre.rowwise() += bias.transpose();
    } else {
      trace.columns.push_back(im2col(*cur, g));
      Matrix out_all = trace.columns.back() * weights.transpose();
      out_all.rowwise() += bias.transpose();
      const Index positions = Index{g.out.height} * g.out.width;
      pre = scatter_channels(out_all, cur->rows(), positions, g.spec.out);
    }
    Batch post;
    activate(g.spec.activation, pre, post);
    trace.pre.push_back(std::move(pre));
    trace.post.push_back(std::move(post));
    cur = &trace.post.back();
  }
  return trace;
}

Gradients backward(const Classifier& model, const ForwardTrace& trace, const Batch& logit_grad,
                   bool want_parameters, bool want_inputs) {
  const auto& geometry = model.geometry();
  const Vector& theta = model.parameters();
  if (logit_grad.rows() != trace.input.rows() || logit_grad.cols() != model.num_classes()) {
    throw InputContractError("logit gradient shape mismatch");
  }
  Gradients grads;
  if (want_parameters) grads.parameters = Vector::Zero(theta.size());
  Batch grad = logit_grad;
  for (Index li = static_cast<Index>(geometry.size()) - 1; li >= 0; --li) {
    const auto l = static_cast<std::size_t>(li);
    const LayerGeometry& g = geometry[l];
    const Batch& layer_in = l == 0 ? trace.input : trace.post[l - 1];
    const Batch dpre = activation_backward(g.spec.activation, trace.pre[l], trace.post[l], grad);
    const ConstWeights weights(theta.data() + g.weight_offset, g.spec.out, g.fan_in);
    const bool need_input_grad = l > 0 || want_inputs;
    if (g.spec.kind == LayerKind::Dense) {
      if (want_parameters) {
        Weights dw(grads.parameters.data() + g.weight_offset, g.spec.out, g.fan_in);
        dw.noalias() = dpre.transpose() * layer_in;
        grads.parameters.segment(g.bias_offset, g.spec.out) = dpre.colwise().sum().transpose();
      }
      if (need_input_grad) grad = dpre * weights;
    } else {
      const Index positions = Index{g.out.height} * g.out.width;
      const Matrix dout = gather_channels(dpre, positions, g.spec.out);
      if (want_parameters) {
        Weights dw(grads.parameters.data() + g.weight_offset, g.spec.out, g.fan_in);
        dw.noalias() = dout.transpose() * trace.columns[l];
        grads.parameters.segment(g.bias_offset, g.spec.out) = dout.colwise().sum().transpose();
      }
      if (need_input_grad) {
        const Batch dcols = dout * weights;
        Batch din = Batch::Zero(layer_in.rows(), layer_in.cols());
        col2im_add(dcols, g, din);
        grad = std::move(din);
      }
    }
  }
  if (want_inputs) grads.inputs = std::move(grad);
  return grads;
}

Batch logits(const Classifier& model, const Batch& inputs) {
  return trace_forward(model, inputs).logits();
}

Prediction forward(const Classifier& model, const Batch& inputs) {
  Prediction pred;
  pred.logits = logits(model, inputs);
  pred.probabilities = softmax(pred.logits);
  pred.labels = predict_labels(pred.logits);
  return pred;
}

std::vector<Batch> hidden_activations(const Classifier& model, const Batch& inputs) {
  return trace_forward(model, inputs).post;
}

Batch softmax_backward(const Batch& probabilities, const Batch& prob_grad) {
  Batch out(probabilities.rows(), probabilities.cols());
  for (Index i = 0; i < probabilities.rows(); ++i) {
    const double inner = probabilities.row(i).dot(prob_grad.row(i));
    out.row(i) = (probabilities.row(i).array() * (prob_grad.row(i).array() - inner)).matrix();
  }
  return out;
}

namespace {

Batch loss_logit_grad(const Batch& logit_values, const Batch& probs, const Labels& labels,
                      LossKind kind, const Batch* reference) {
  const Index rows = logit_values.rows();
  Batch dz = Batch::Zero(rows, logit_values.cols());
  if (kind == LossKind::CwMargin) {
    for (Index i = 0; i < rows; ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      Index best = -1;
      for (Index k = 0; k < logit_values.cols(); ++k) {
        if (k == y) continue;
        if (best < 0 || logit_values(i, k) > logit_values(i, best)) best = k;
      }
      dz(i, best) += 1.0;
      dz(i, y) -= 1.0;
    }
    return dz;
  }
  Batch dp(rows, probs.cols());
  for (Index i = 0; i < rows; ++i) {
    const Vector p = probs.row(i).transpose();
    if (kind == LossKind::CrossEntropy) {
      dp.row(i) = ce_gradient(p, labels[static_cast<std::size_t>(i)]).transpose();
    } else {
      const Vector ref = reference->row(i).transpose();
      dp.row(i) = kl_gradient(ref, p).second.transpose();
    }
  }
  return softmax_backward(probs, dp);
}

void check_reference(const Batch& inputs, LossKind kind, const Batch* reference, int classes) {
  if (kind != LossKind::KlToReference) return;
  if (reference == nullptr) throw ConfigError("KL loss needs reference probabilities");
  if (reference->rows() != inputs.rows() || reference->cols() != classes) {
    throw InputContractError("reference probabilities shape mismatch");
  }
}

}  // namespace

Batch input_gradient(const Classifier& model, const Batch& inputs, const Labels& labels,
                     LossKind kind, const Batch* reference) {
  check_reference(inputs, kind, reference, model.num_classes());
  const ForwardTrace trace = trace_forward(model, inputs);
  if (kind != LossKind::KlToReference) check_labels(model, labels, inputs.rows());
  const Batch probs = softmax(trace.logits());
  const Batch dz = loss_logit_grad(trace.logits(), probs, labels, kind, reference);
  return backward(model, trace, dz, false, true).inputs;
}

Vector example_losses(const Classifier& model, const Batch& inputs, const Labels& labels,
                      LossKind kind, const Batch* reference) {
  check_reference(inputs, kind, reference, model.num_classes());
  const Prediction pred = forward(model, inputs);
  if (kind != LossKind::KlToReference) check_labels(model, labels, inputs.rows());
  Vector out(inputs.rows());
  for (Index i = 0; i < inputs.rows(); ++i) {
    const auto y = kind == LossKind::KlToReference ? 0 : labels[static_cast<std::size_t>(i)];
    switch (kind) {
      case LossKind::CrossEntropy: out(i) = ce(pred.probabilities.row(i), y); break;
      case LossKind::KlToReference:
        out(i) = kl(reference->row(i), pred.probabilities.row(i));
        break;
      case LossKind::CwMargin: out(i) = cw_margin(pred.logits.row(i), y); break;
    }
  }
  return out;
}

}  // namespace raat
